#include "padst/noise.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "padst/lexicon.hpp"
#include "padst/text.hpp"

namespace padst {

NoiseSpecError::NoiseSpecError(const std::string& name, std::size_t position,
                               const std::string& what)
    : ConfigError("noise spec '" + name + "' at position " + std::to_string(position) + ": " +
                  what),
      position_(position) {}

bool NoiseSpec::is_zero() const {
  return pretrain == NoiseProbabilities{} && finetune == NoiseProbabilities{};
}

namespace {

class SpecParser {
 public:
  explicit SpecParser(std::string_view name) : name_(name) {}

  NoiseSpec parse() {
    NoiseSpec spec;
    expect('W');
    spec.pretrain = phase();
    expect('-');
    expect('A');
    spec.finetune = phase();
    expect('-');
    if (at_end()) fail("expected mode D or M");
    const char mode = name_[pos_];
    if (mode == 'D') {
      spec.mode = NoiseMode::remove;
    } else if (mode == 'M') {
      spec.mode = NoiseMode::mask;
    } else {
      fail("expected mode D or M");
    }
    ++pos_;
    if (!at_end()) fail("unexpected trailing characters");
    return spec;
  }

 private:
  NoiseProbabilities phase() {
    NoiseProbabilities p;
    if (peek('G')) {
      ++pos_;
      p.general = probability();
    }
    if (peek('P')) {
      ++pos_;
      p.polarity = probability();
    }
    return p;
  }

  // "1" or "0" followed by digits without a trailing zero.
  double probability() {
    const std::size_t start = pos_;
    while (!at_end() && name_[pos_] >= '0' && name_[pos_] <= '9') ++pos_;
    const std::string digits(name_.substr(start, pos_ - start));
    if (digits.empty()) fail("expected a probability", start);
    if (digits == "1") return 1.0;
    if (digits[0] != '0' || digits.size() < 2) {
      fail("probability must be '1' or '0' followed by decimal digits", start);
    }
    if (digits.back() == '0') {
      fail("probability has a trailing zero (omit zero groups entirely)", start);
    }
    return std::stod("0." + digits.substr(1));
  }

  bool at_end() const { return pos_ >= name_.size(); }
  bool peek(char c) const { return !at_end() && name_[pos_] == c; }
  void expect(char c) {
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) { fail(what, pos_); }
  [[noreturn]] void fail(const std::string& what, std::size_t at) {
    throw NoiseSpecError(std::string(name_), at, what);
  }

  std::string_view name_;
  std::size_t pos_ = 0;
};

std::string render_probability(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ConfigError("noise probability " + std::to_string(p) + " is not in (0, 1]");
  }
  if (p == 1.0) return "1";
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*f", precision, p);
    if (std::stod(buf) == p) break;
  }
  std::string text(buf);  // "0.xyz"
  while (text.back() == '0') text.pop_back();
  return "0" + text.substr(2);
}

std::string render_phase(const NoiseProbabilities& p) {
  std::string out;
  if (p.general > 0) out += "G" + render_probability(p.general);
  if (p.polarity > 0) out += "P" + render_probability(p.polarity);
  if (p.general < 0 || p.polarity < 0) throw ConfigError("negative noise probability");
  return out;
}

}  // namespace

NoiseSpec parse_noise_spec(std::string_view name) { return SpecParser(name).parse(); }

std::string render_noise_spec(const NoiseSpec& spec) {
  return "W" + render_phase(spec.pretrain) + "-A" + render_phase(spec.finetune) + "-" +
         (spec.mode == NoiseMode::remove ? "D" : "M");
}

Tokens apply_noise(const Tokens& tokens, const PolarityLexicon& lexicon, NoiseProbabilities p,
                   NoiseMode mode, std::mt19937_64& rng, NoiseCounts* counts) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const bool pivot = lexicon.is_pivot(t) != Polarity::none;
    const bool corrupt = uniform(rng) < (pivot ? p.polarity : p.general);
    if (counts) {
      (pivot ? counts->polarity_seen : counts->general_seen) += 1;
      if (corrupt) (pivot ? counts->polarity_corrupted : counts->general_corrupted) += 1;
    }
    if (!corrupt) {
      out.push_back(t);
    } else if (mode == NoiseMode::mask) {
      out.emplace_back(special::mask);
    }
  }
  if (out.empty() && !tokens.empty()) {
    const auto keep = std::uniform_int_distribution<std::size_t>(0, tokens.size() - 1)(rng);
    out.push_back(tokens[keep]);
  }
  return out;
}

std::vector<DenoisingPair> make_denoising_pairs(std::span<const Tokens> intermediate,
                                                std::span<const Tokens> clean,
                                                const PolarityLexicon& lexicon,
                                                NoiseProbabilities p, NoiseMode mode,
                                                std::uint64_t seed) {
  if (intermediate.size() != clean.size()) {
    throw DataError("denoising pairs: " + std::to_string(intermediate.size()) +
                    " inputs vs " + std::to_string(clean.size()) + " targets");
  }
  std::mt19937_64 rng(seed);
  std::vector<DenoisingPair> out;
  out.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out.push_back({apply_noise(intermediate[i], lexicon, p, mode, rng), clean[i]});
  }
  return out;
}

}  // namespace padst

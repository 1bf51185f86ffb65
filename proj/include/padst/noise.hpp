#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "padst/errors.hpp"
#include "padst/types.hpp"

namespace padst {

class PolarityLexicon;

enum class NoiseMode { remove, mask };

struct NoiseProbabilities {
  double general = 0;
  double polarity = 0;

  bool operator==(const NoiseProbabilities&) const = default;
};

// Corruption settings for both training phases. Names follow the pattern
// W(G<d>)?(P<d>)?-A(G<d>)?(P<d>)?-(D|M): W = general-domain pretraining,
// A = in-domain finetuning, G/P = general/polarity word probability,
// D/M = deletion/masking. Digit groups are decimal fractions: "03" is 0.3,
// "025" is 0.25 and "1" is 1.0; a zero probability is written by omitting
// the group.
struct NoiseSpec {
  NoiseProbabilities pretrain;
  NoiseProbabilities finetune;
  NoiseMode mode = NoiseMode::remove;

  bool is_zero() const;
  bool operator==(const NoiseSpec&) const = default;
};

class NoiseSpecError : public ConfigError {
 public:
  NoiseSpecError(const std::string& name, std::size_t position, const std::string& what);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

NoiseSpec parse_noise_spec(std::string_view name);
std::string render_noise_spec(const NoiseSpec& spec);

struct NoiseCounts {
  std::size_t general_seen = 0;
  std::size_t general_corrupted = 0;
  std::size_t polarity_seen = 0;
  std::size_t polarity_corrupted = 0;
};

/// Corrupts each token independently: lexicon pivots with probability
/// p.polarity, all other tokens with p.general. Deletion never returns an
/// empty sequence; if every token is drawn, one of them survives.
Tokens apply_noise(const Tokens& tokens, const PolarityLexicon& lexicon, NoiseProbabilities p,
                   NoiseMode mode, std::mt19937_64& rng, NoiseCounts* counts = nullptr);

struct DenoisingPair {
  Tokens noised;
  Tokens clean;
};

/// Pairs intermediate-language inputs (noised) with their clean base-language
/// targets. Throws DataError when the two sides differ in sentence count.
std::vector<DenoisingPair> make_denoising_pairs(std::span<const Tokens> intermediate,
                                                std::span<const Tokens> clean,
                                                const PolarityLexicon& lexicon,
                                                NoiseProbabilities p, NoiseMode mode,
                                                std::uint64_t seed);

}  // namespace padst

#include "padst/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "padst/errors.hpp"

namespace padst {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

constexpr double kMaxScore = 4.0;

}  // namespace

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::pos:
      return "pos";
    case Polarity::neg:
      return "neg";
    default:
      return "none";
  }
}

void PolarityLexicon::insert(std::string_view token, double score) {
  if (token.empty()) throw std::invalid_argument("lexicon: empty token");
  if (!std::isfinite(score) || score == 0.0 || std::abs(score) > kMaxScore) {
    throw std::invalid_argument("lexicon: score for '" + std::string(token) +
                                "' must be non-zero and within [-4, 4]");
  }
  LexiconEntry entry{score, score > 0 ? Sentiment::pos : Sentiment::neg};
  auto [it, inserted] = entries_.insert_or_assign(lower(token), entry);
  if (!inserted) ++duplicates_;
}

std::optional<LexiconEntry> PolarityLexicon::find(std::string_view token) const {
  auto it = entries_.find(lower(token));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Polarity PolarityLexicon::is_pivot(std::string_view token) const {
  auto e = find(token);
  if (!e) return Polarity::none;
  return e->label == Sentiment::pos ? Polarity::pos : Polarity::neg;
}

std::vector<std::string> PolarityLexicon::words(Sentiment label) const {
  std::vector<std::string> out;
  for (const auto& [token, e] : entries_) {
    if (e.label == label) out.push_back(token);
  }
  return out;
}

PolarityLexicon PolarityLexicon::with_min_abs_score(double min_abs_score) const {
  PolarityLexicon out(language_);
  for (const auto& [token, e] : entries_) {
    if (std::abs(e.score) >= min_abs_score) out.entries_.emplace(token, e);
  }
  return out;
}

PolarityLexicon PolarityLexicon::restricted_to(std::span<const std::string> tokens) const {
  PolarityLexicon out(language_);
  for (const auto& t : tokens) {
    auto it = entries_.find(lower(t));
    if (it != entries_.end()) out.entries_.emplace(it->first, it->second);
  }
  return out;
}

PolarityLexicon parse_lexicon(std::istream& in, std::string language,
                              std::string_view source_name) {
  PolarityLexicon lex(std::move(language));
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(std::string(source_name) + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) fail("expected 'token<TAB>score<TAB>label'");
    double score = 0;
    const auto& s = fields[1];
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), score);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("bad score '" + s + "'");
    Sentiment label;
    try {
      label = parse_sentiment(fields[2]);
    } catch (const DataError&) {
      fail("bad label '" + fields[2] + "'");
    }
    if (label == Sentiment::unlabeled || (label == Sentiment::pos) != (score > 0) || score == 0) {
      fail("score " + s + " inconsistent with label " + fields[2]);
    }
    try {
      lex.insert(fields[0], score);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (lex.duplicates() > 0) {
    lex.warn(std::to_string(lex.duplicates()) + " duplicate token(s); last entry kept");
  }
  if (lex.empty()) lex.warn(std::string(source_name) + ": lexicon is empty");
  return lex;
}

PolarityLexicon load_lexicon(const std::filesystem::path& path, std::string language) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  return parse_lexicon(in, std::move(language), path.string());
}

void format_lexicon(std::ostream& out, const PolarityLexicon& lexicon) {
  for (const auto& [token, e] : lexicon.entries()) {
    std::ostringstream score;
    score << std::setprecision(17) << e.score;
    // Shortest representation that round-trips.
    std::string text = score.str();
    for (int p = 1; p <= 17; ++p) {
      std::ostringstream trial;
      trial << std::setprecision(p) << e.score;
      if (std::stod(trial.str()) == e.score) {
        text = trial.str();
        break;
      }
    }
    out << token << '\t' << text << '\t' << to_string(e.label) << '\n';
  }
}

void save_lexicon(const PolarityLexicon& lexicon, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  format_lexicon(out, lexicon);
  if (!out) throw IoError("failed writing " + path.string());
}

PolarityLexicon project_lexicon(const PolarityLexicon& base, const Translator& translator,
                                std::string language, ProjectionStats* stats) {
  ProjectionStats local;
  PolarityLexicon out(std::move(language));
  std::map<std::string, double> chosen;
  for (const auto& [token, entry] : base.entries()) {
    Tokens translated;
    try {
      translated = translator.translate(Tokens{token});
    } catch (const std::exception&) {
      ++local.dropped_failed;
      continue;
    }
    if (translated.empty()) {
      ++local.dropped_failed;
      continue;
    }
    if (translated.size() > 1) {
      ++local.dropped_multi_token;
      continue;
    }
    const std::string key = lower(translated.front());
    auto it = chosen.find(key);
    if (it != chosen.end()) {
      ++local.collisions;
      if (std::abs(entry.score) > std::abs(it->second)) it->second = entry.score;
      continue;
    }
    chosen.emplace(key, entry.score);
  }
  for (const auto& [token, score] : chosen) out.insert(token, score);
  local.retained = chosen.size();
  if (stats) *stats = local;
  return out;
}

}  // namespace padst

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "padst/translate.hpp"
#include "padst/types.hpp"

namespace padst {

enum class Polarity { none, pos, neg };
std::string_view to_string(Polarity p);

struct LexiconEntry {
  double score = 0;  // in [-4, 4], never zero
  Sentiment label = Sentiment::pos;

  bool operator==(const LexiconEntry&) const = default;
};

// Token -> polarity score. Keys are stored lowercased; lookups ignore case.
class PolarityLexicon {
 public:
  explicit PolarityLexicon(std::string language = "en") : language_(std::move(language)) {}

  /// Label follows the sign of the score. Replaces an existing entry and
  /// counts it as a duplicate. Throws std::invalid_argument for a zero or
  /// out-of-range score.
  void insert(std::string_view token, double score);

  std::optional<LexiconEntry> find(std::string_view token) const;
  Polarity is_pivot(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::string& language() const { return language_; }
  const std::map<std::string, LexiconEntry, std::less<>>& entries() const { return entries_; }

  /// Tokens with the given label, in lexicographic order.
  std::vector<std::string> words(Sentiment label) const;

  /// Entries with |score| >= min_abs_score.
  PolarityLexicon with_min_abs_score(double min_abs_score) const;
  /// Entries whose token is in `tokens`.
  PolarityLexicon restricted_to(std::span<const std::string> tokens) const;

  std::size_t duplicates() const { return duplicates_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  void warn(std::string message) { warnings_.push_back(std::move(message)); }

  bool operator==(const PolarityLexicon& other) const {
    return language_ == other.language_ && entries_ == other.entries_;
  }

 private:
  std::string language_;
  std::map<std::string, LexiconEntry, std::less<>> entries_;
  std::size_t duplicates_ = 0;
  std::vector<std::string> warnings_;
};

/// TSV "token<TAB>score<TAB>label". Blank lines and '#' comments are skipped.
PolarityLexicon parse_lexicon(std::istream& in, std::string language = "en",
                              std::string_view source_name = "<stream>");
PolarityLexicon load_lexicon(const std::filesystem::path& path, std::string language = "en");
void format_lexicon(std::ostream& out, const PolarityLexicon& lexicon);
void save_lexicon(const PolarityLexicon& lexicon, const std::filesystem::path& path);

struct ProjectionStats {
  std::size_t retained = 0;
  std::size_t dropped_multi_token = 0;
  std::size_t dropped_failed = 0;
  std::size_t collisions = 0;
};

/// Carries every single-token translation of a base entry over with the
/// same score. On collision the larger |score| wins (ties keep the earlier,
/// lexicographically smaller base word).
PolarityLexicon project_lexicon(const PolarityLexicon& base, const Translator& translator,
                                std::string language, ProjectionStats* stats = nullptr);

}  // namespace padst

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "padst/types.hpp"

namespace padst {

class PolarityLexicon;

namespace special {
inline constexpr std::string_view pad = "<pad>";
inline constexpr std::string_view unk = "<unk>";
inline constexpr std::string_view bos = "<bos>";
inline constexpr std::string_view eos = "<eos>";
inline constexpr std::string_view mask = "<mask>";
inline constexpr std::string_view pos = "<pos>";
inline constexpr std::string_view neg = "<neg>";
}  // namespace special

struct Sentence {
  Tokens tokens;
  Sentiment sentiment = Sentiment::unlabeled;
  std::optional<std::string> source_id;

  std::string text() const { return join(tokens); }
  bool operator==(const Sentence&) const = default;
};

/// Lowercases, splits on whitespace, and emits every ASCII punctuation
/// character as its own token. Reserved markers such as "<mask>" stay whole.
Tokens tokenize(std::string_view text);

/// Splits raw review text after '.', '!' or '?' when followed by whitespace.
std::vector<std::string> split_sentences(std::string_view text);

// Word-level vocabulary. Ids 0..6 are reserved, in this order:
// <pad> <unk> <bos> <eos> <mask> <pos> <neg>.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kMask = 4;
  static constexpr int kPos = 5;
  static constexpr int kNeg = 6;
  static constexpr int kReserved = 7;

  Vocab();

  /// Adds the token if absent and returns its id.
  int add(std::string_view token);
  /// Id of the token, or kUnk.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const Tokens& tokens) const;
  /// Reserved ids other than <mask> and <unk> are dropped.
  Tokens decode(std::span<const int> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

enum class Split { train, valid, test };
std::string_view to_string(Split split);

struct Corpus {
  std::vector<Sentence> sentences;
  Split split = Split::train;

  std::size_t size() const { return sentences.size(); }
  std::size_t count(Sentiment s) const;
  /// Sentences carrying the given label, in order.
  std::vector<Sentence> with_label(Sentiment s) const;
  bool operator==(const Corpus&) const = default;
};

enum class CorpusFormat { jsonl, tsv };

/// Picks the format from the file extension (.jsonl / .tsv).
CorpusFormat format_for(const std::filesystem::path& path);

Corpus parse_corpus(std::istream& in, CorpusFormat format, Split split,
                    std::string_view source_name = "<stream>");
void format_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format);
Corpus read_corpus(const std::filesystem::path& path, CorpusFormat format,
                   Split split = Split::train);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

/// One text per line, tokenized; blank lines are kept as empty token lists.
std::vector<Tokens> read_lines(const std::filesystem::path& path);
void write_lines(const std::vector<Tokens>& lines, const std::filesystem::path& path);

struct FilterConfig {
  std::size_t min_len = 5;
  std::size_t rep_limit = 3;
  double polarity_threshold = 0.5;
};

struct ScoredSentence {
  Tokens tokens;
  double score = 0;  // classifier polarity in [-1, 1]
  std::optional<std::string> source_id;
};

enum class FilterVerdict { kept, too_short, repetitive, low_polarity };
std::string_view to_string(FilterVerdict v);

/// A token repeated more than rep_limit times in a row, or one token making
/// up more than half of a sentence of six or more tokens.
bool is_repetitive(const Tokens& tokens, std::size_t rep_limit);

FilterVerdict classify_for_dataset(const Tokens& tokens, double score, const FilterConfig& cfg);

/// Keeps sentences passing every rule, labelled by the sign of their score.
Corpus filter_dataset(std::span<const ScoredSentence> raw, const FilterConfig& cfg);

struct DatasetSplits {
  Corpus train;
  Corpus valid;
  Corpus test;
};

/// Reserves valid_per_label / test_per_label distinct sentences of each
/// sentiment; train keeps every sentence whose text is not reserved.
DatasetSplits split_dataset(const Corpus& all, std::size_t valid_per_label,
                            std::size_t test_per_label, std::uint64_t seed);

// Templates are whitespace-separated; "{pivot}" receives a lexicon pivot of
// the sentence's sentiment and any other "{name}" draws from slots[name].
// A non-empty `pivots` list restricts the lexicon to those words.
struct SyntheticSpec {
  std::vector<std::string> templates;
  std::map<std::string, std::vector<std::string>> slots;
  std::vector<std::string> pivots;

  static SyntheticSpec from_json(const nlohmann::json& j);
  static SyntheticSpec load(const std::filesystem::path& path);
};

/// n sentences per sentiment, alternating pos/neg, deterministic per seed.
Corpus make_synthetic_corpus(const SyntheticSpec& spec, const PolarityLexicon& lexicon,
                             std::size_t n, std::uint64_t seed);

}  // namespace padst

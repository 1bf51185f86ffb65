#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "padst/lexicon.hpp"
#include "padst/types.hpp"

namespace padst {

/// Replaces every lexicon pivot with <mask>.
Tokens mask_pivots(const Tokens& tokens, const PolarityLexicon& lexicon);

/// Sentence BLEU in [0, 100]. Orders longer than the hypothesis are left out;
/// zero matches for n >= 2 are floored at 0.1. Throws std::invalid_argument
/// for an empty reference; an empty hypothesis scores 0.
double bleu(const Tokens& hypothesis, const Tokens& reference, int max_n = 4);
double mask_bleu(const Tokens& hypothesis, const Tokens& source, const PolarityLexicon& lexicon);

class Classifier {
 public:
  virtual ~Classifier() = default;
  /// Polarity in [-1, 1].
  virtual double score(const Tokens& sentence) const = 0;
};

// Sum of lexicon scores squashed by s / sqrt(s^2 + alpha).
class LexiconClassifier : public Classifier {
 public:
  explicit LexiconClassifier(const PolarityLexicon& lexicon, double alpha = 15.0)
      : lexicon_(lexicon), alpha_(alpha) {}
  double score(const Tokens& sentence) const override;

 private:
  const PolarityLexicon& lexicon_;
  double alpha_;
};

/// Unit-norm (or empty) vector; keys are dimension names.
using Embedding = std::map<std::string, double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(const Tokens& sentence) const = 0;
};

// TF-IDF bag of words with idf = ln((1 + N) / (1 + df)) + 1. Unseen words
// get the idf of a word with df = 0.
class TfidfEmbedder : public Embedder {
 public:
  TfidfEmbedder() = default;
  explicit TfidfEmbedder(std::span<const Tokens> corpus) { fit(corpus); }

  void fit(std::span<const Tokens> corpus);
  double idf(const std::string& token) const;
  Embedding embed(const Tokens& sentence) const override;

 private:
  std::unordered_map<std::string, std::size_t> df_;
  std::size_t documents_ = 0;
};

// Vectors supplied in a TSV file "sentence<TAB>v1 v2 ...", keyed by the
// space-joined sentence. Missing sentences raise DataError.
class ExternalEmbedder : public Embedder {
 public:
  static ExternalEmbedder load(const std::filesystem::path& path);
  void add(const std::string& sentence, std::vector<double> vector);
  Embedding embed(const Tokens& sentence) const override;
  std::size_t size() const { return vectors_.size(); }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  /// Natural-log probability of the whole sentence, <= 0.
  virtual double logprob(const Tokens& sentence) const = 0;
};

// Add-k trigram model over words with two start symbols and no end symbol,
// so adding a word can only lower the score.
class TrigramLM : public LanguageModel {
 public:
  explicit TrigramLM(double k = 0.1) : k_(k) {}
  void train(std::span<const Tokens> corpus);
  double logprob(const Tokens& sentence) const override;
  std::size_t vocabulary() const { return vocab_.size() + 1; }

 private:
  double k_;
  std::unordered_map<std::string, std::size_t> vocab_;
  std::unordered_map<std::string, std::size_t> context_;
  std::unordered_map<std::string, std::size_t> trigram_;
};

/// Cosine similarity; a zero vector gives 0 and appends a warning.
double cosine(const Embedding& a, const Embedding& b, std::vector<std::string>* warnings = nullptr);
double similarity(const Tokens& a, const Tokens& b, const Embedder& embedder,
                  std::vector<std::string>* warnings = nullptr);
double mask_sim(const Tokens& a, const Tokens& b, const Embedder& embedder,
                const PolarityLexicon& lexicon, std::vector<std::string>* warnings = nullptr);

/// Percentage of outputs whose classifier sign matches the target label.
/// Throws std::invalid_argument for an empty set.
double style_accuracy(std::span<const Tokens> outputs, std::span<const Sentiment> targets,
                      const Classifier& classifier);
double style_accuracy(std::span<const double> scores, std::span<const Sentiment> targets);

/// Mean sentence log-probability.
double fluency(std::span<const Tokens> outputs, const LanguageModel& lm);

double aggregate(double acc, double mask_sim, double mask_bleu);

struct SentenceScores {
  std::size_t index = 0;
  Tokens hypothesis;
  Tokens source;
  Sentiment target = Sentiment::unlabeled;
  double polarity = 0;
  bool correct = false;
  double sim = 0;
  double mask_sim = 0;
  double bleu = 0;
  double mask_bleu = 0;
  double lm = 0;
};

struct EvalReport {
  std::string system;
  double acc = 0;
  double sim = 0;
  double mask_sim = 0;
  double bleu = 0;
  double mask_bleu = 0;
  double lm = 0;
  double len = 0;
  double avg = 0;
  std::vector<SentenceScores> sentences;
  std::vector<std::string> warnings;
};

struct Scorers {
  const PolarityLexicon* mask_lexicon = nullptr;
  const Classifier* classifier = nullptr;
  const Embedder* embedder = nullptr;
  const LanguageModel* lm = nullptr;
  /// Per-sentence overrides read from score files.
  std::optional<std::vector<double>> classifier_scores;
  std::optional<std::vector<double>> lm_scores;
};

/// Scores hypotheses against their sources. Throws std::invalid_argument
/// when the inputs are empty or differ in length, ConfigError when a scorer
/// is missing.
EvalReport evaluate(std::string system, const std::vector<Tokens>& hypotheses,
                    const std::vector<Tokens>& sources, const std::vector<Sentiment>& targets,
                    const Scorers& scorers);

/// Pearson correlation; nullopt when either column is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationMatrix {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> values;

  std::optional<double> at(const std::string& a, const std::string& b) const;
};

/// Column names in report order.
const std::vector<std::string>& report_columns();
std::vector<double> report_row(const EvalReport& report);

/// Pairwise correlations over the report columns. Needs at least 3 reports.
CorrelationMatrix correlation_report(std::span<const EvalReport> reports);

/// Reads "index<TAB>score" lines; every index in [0, expected) exactly once.
std::vector<double> read_scores(const std::filesystem::path& path, std::size_t expected);

void write_report_tsv(std::ostream& out, std::span<const EvalReport> reports);
std::vector<EvalReport> read_report_tsv(std::istream& in, std::string_view source_name = "<stream>");
std::vector<EvalReport> load_report_tsv(const std::filesystem::path& path);
void write_report_json(std::ostream& out, const EvalReport& report);
void write_correlation_tsv(std::ostream& out, const CorrelationMatrix& matrix);

}  // namespace padst

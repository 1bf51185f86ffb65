#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "padst/lexicon.hpp"
#include "padst/metrics.hpp"
#include "padst/model.hpp"
#include "padst/noise.hpp"
#include "padst/text.hpp"
#include "padst/translate.hpp"

namespace padst {

// Flat key/value experiment settings. Every key has a default; unknown keys
// are rejected both in files and through set().
class ExperimentConfig {
 public:
  ExperimentConfig();

  /// "key = value" lines; '#' starts a comment. Later files or set() calls
  /// override earlier values.
  static ExperimentConfig parse(std::istream& in, std::string_view source_name = "<stream>");
  static ExperimentConfig load(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_set(const std::string& key) const { return !get(key).empty(); }

  std::int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::filesystem::path path(const std::string& key) const;

  ModelConfig model() const;
  NoiseSpec noise() const;
  TrainConfig train(const std::string& stage) const;
  FilterConfig filter() const;
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  /// Sorted "key = value" lines.
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

  /// Known keys with their one-line descriptions.
  static const std::map<std::string, std::pair<std::string, std::string>>& schema();

 private:
  void apply(std::istream& in, std::string_view source_name);

  std::map<std::string, std::string> values_;
};

/// Seed for one pipeline stage, derived from the root seed and stage name.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage);

std::string version_string();

struct PreparedData {
  PolarityLexicon lexicon;  // base language
  Corpus train;
  Corpus valid;
  Corpus test;
  std::vector<Tokens> general;  // unlabeled base-language pretraining text
};

PreparedData prepare_data(const ExperimentConfig& cfg);

std::unique_ptr<Translator> make_translator(const ExperimentConfig& cfg);

/// Batched where the translator supports it.
std::vector<Tokens> translate_all(const Translator& translator, const std::vector<Tokens>& inputs);

struct TranslatedData {
  PolarityLexicon lexicon;  // intermediate language
  std::vector<ParallelExample> general;
  std::vector<ParallelExample> pos;
  std::vector<ParallelExample> neg;
};

/// Projects the lexicon and translates the pretraining and training text.
TranslatedData translate_data(const ExperimentConfig& cfg, const PreparedData& data,
                              const Translator& translator);

/// Fresh model over the joint vocabulary of the translated data.
TransferModel<float> build_model(const ExperimentConfig& cfg, const TranslatedData& data);

/// Whether the configured variant and noise call for encoder pretraining.
bool wants_pretraining(const ExperimentConfig& cfg);

struct PipelineResult {
  std::filesystem::path run_dir;
  EvalReport report;
  TrainLog pretrain_log;
  TrainLog finetune_log;
  RoutingLog routing;
};

/// translate -> noise -> pretrain -> finetune -> transfer -> evaluate. Writes
/// config.resolved and VERSION at once; model.ckpt, transferred.tsv,
/// report.tsv and report.json are written with a ".partial" suffix and
/// renamed only when every stage succeeded. Errors name the failing stage.
PipelineResult run_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Report table followed by the correlation matrix when there are at least
/// three rows.
void report_table(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace padst

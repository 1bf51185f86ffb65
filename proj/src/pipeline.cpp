#include "padst/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "padst/errors.hpp"

#ifndef PADST_VERSION
#define PADST_VERSION "0.0.0"
#endif
#ifndef PADST_GIT_DESCRIBE
#define PADST_GIT_DESCRIBE "unknown"
#endif

namespace padst {

namespace {

std::string trim(std::string_view s) {
  const auto* b = s.begin();
  const auto* e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

template <class Fn>
auto stage(std::string_view name, std::ostream* log, Fn&& fn) -> decltype(fn()) {
  if (log) *log << "[" << name << "]\n";
  const std::string prefix = "stage " + std::string(name) + ": ";
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw DataError(prefix + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(prefix + e.what());
  }
}

std::vector<Tokens> texts(const Corpus& c) {
  std::vector<Tokens> out;
  for (const auto& s : c.sentences) out.push_back(s.tokens);
  return out;
}

}  // namespace

const std::map<std::string, std::pair<std::string, std::string>>& ExperimentConfig::schema() {
  static const std::map<std::string, std::pair<std::string, std::string>> keys{
      {"run_dir", {"run", "directory receiving every artifact of the run"}},
      {"seed", {"1", "root seed; each stage derives its own"}},
      {"noise", {"W-A-D", "noise-model name, e.g. WG03P08-AG03P08-M"}},
      {"variant", {"denoised", "plain|style_tok|two_sep|shared_enc_two_dec|pretrained_enc|denoised"}},
      {"pretrain", {"auto", "auto|true|false; auto pretrains pretrained_enc/denoised or a W noise"}},
      {"noise_at_inference", {"false", "also noise transfer inputs"}},
      {"translator", {"cipher", "cipher|learned"}},
      {"dict", {"data/fixtures/dict_en_de.tsv", "TSV word list for the cipher translator"}},
      {"mt_checkpoint", {"", "plain-model checkpoint for the learned translator"}},
      {"intermediate_language", {"de", "language tag of the translated side"}},
      {"lexicon", {"data/fixtures/lexicon_en.tsv", "base-language polarity lexicon"}},
      {"corpus", {"", "labelled corpus (.tsv or .jsonl); empty uses synthetic_spec"}},
      {"synthetic_spec", {"data/fixtures/synthetic_reviews.json", "template file for synthetic data"}},
      {"synthetic_per_label", {"1100", "synthetic sentences per sentiment"}},
      {"general_corpus", {"", "unlabelled pretraining text, one sentence per line"}},
      {"general_size", {"1000", "synthetic pretraining sentences per sentiment"}},
      {"filter", {"false", "relabel and filter the corpus with the lexicon classifier"}},
      {"min_len", {"5", "filter: minimum tokens"}},
      {"rep_limit", {"3", "filter: longest allowed run of one token"}},
      {"polarity_threshold", {"0.5", "filter: minimum |classifier score|"}},
      {"valid_per_label", {"0", "validation sentences per sentiment"}},
      {"test_per_label", {"100", "test sentences per sentiment"}},
      {"layers", {"2", "transformer layers"}},
      {"heads", {"2", "attention heads"}},
      {"d_model", {"64", "model width"}},
      {"d_ff", {"256", "feed-forward width"}},
      {"max_len", {"32", "maximum tokens per sequence"}},
      {"dropout", {"0", "dropout rate while training"}},
      {"pretrain_steps", {"300", "encoder pretraining steps"}},
      {"finetune_steps", {"400", "finetuning steps (alternating pos/neg)"}},
      {"batch_size", {"32", "sentences per batch"}},
      {"lr", {"0.001", "Adam learning rate"}},
      {"clip_norm", {"1", "gradient norm clip, 0 disables"}},
      {"log_every", {"0", "print the loss every n steps"}},
  };
  return keys;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& [k, v] : schema()) values_[k] = v.first;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, std::string_view source_name) {
  ExperimentConfig cfg;
  cfg.apply(in, source_name);
  return cfg;
}

void ExperimentConfig::apply(std::istream& in, std::string_view source_name) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = std::string(source_name) + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    try {
      set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  cfg.merge_file(path);
  return cfg;
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  apply(in, path.string());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t ExperimentConfig::integer(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": '" + v + "' is not an integer");
  }
  return out;
}

double ExperimentConfig::real(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + ": '" + v + "' is not a number");
}

bool ExperimentConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": '" + v + "' is not a boolean");
}

std::filesystem::path ExperimentConfig::path(const std::string& key) const {
  return std::filesystem::path(get(key));
}

ModelConfig ExperimentConfig::model() const {
  ModelConfig m;
  m.layers = static_cast<int>(integer("layers"));
  m.heads = static_cast<int>(integer("heads"));
  m.d_model = static_cast<int>(integer("d_model"));
  m.d_ff = static_cast<int>(integer("d_ff"));
  m.max_len = static_cast<int>(integer("max_len"));
  m.dropout = real("dropout");
  m.variant = parse_variant(get("variant"));
  return m;
}

NoiseSpec ExperimentConfig::noise() const { return parse_noise_spec(get("noise")); }

TrainConfig ExperimentConfig::train(const std::string& stage_name) const {
  TrainConfig t;
  t.steps = static_cast<int>(integer(stage_name + "_steps"));
  t.batch_size = static_cast<int>(integer("batch_size"));
  t.adam.lr = real("lr");
  t.clip_norm = real("clip_norm");
  t.seed = derive_seed(seed(), stage_name);
  t.log_every = static_cast<int>(integer("log_every"));
  if (t.steps < 0 || t.batch_size < 1 || t.adam.lr <= 0 || t.clip_norm < 0) {
    throw ConfigError("invalid training settings for " + stage_name);
  }
  return t;
}

FilterConfig ExperimentConfig::filter() const {
  FilterConfig f;
  f.min_len = static_cast<std::size_t>(integer("min_len"));
  f.rep_limit = static_cast<std::size_t>(integer("rep_limit"));
  f.polarity_threshold = real("polarity_threshold");
  return f;
}

void ExperimentConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stage_name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stage_name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = root ^ h;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string version_string() {
  return std::string("padst ") + PADST_VERSION + " (" + PADST_GIT_DESCRIBE + ")";
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d{load_lexicon(cfg.path("lexicon")), {}, {}, {}, {}};
  Corpus all;
  std::optional<SyntheticSpec> spec;
  if (cfg.is_set("corpus")) {
    all = read_corpus(cfg.path("corpus"), format_for(cfg.path("corpus")));
  } else {
    spec = SyntheticSpec::load(cfg.path("synthetic_spec"));
    all = make_synthetic_corpus(*spec, d.lexicon,
                                static_cast<std::size_t>(cfg.integer("synthetic_per_label")),
                                derive_seed(cfg.seed(), "corpus"));
  }
  if (cfg.flag("filter")) {
    LexiconClassifier clf(d.lexicon);
    std::vector<ScoredSentence> scored;
    for (const auto& s : all.sentences) scored.push_back({s.tokens, clf.score(s.tokens), s.source_id});
    all = filter_dataset(scored, cfg.filter());
  }
  auto splits = split_dataset(all, static_cast<std::size_t>(cfg.integer("valid_per_label")),
                              static_cast<std::size_t>(cfg.integer("test_per_label")),
                              derive_seed(cfg.seed(), "split"));
  d.train = std::move(splits.train);
  d.valid = std::move(splits.valid);
  d.test = std::move(splits.test);
  if (d.train.with_label(Sentiment::pos).empty() || d.train.with_label(Sentiment::neg).empty()) {
    throw DataError("training split needs sentences of both sentiments");
  }
  if (cfg.is_set("general_corpus")) {
    for (auto& t : read_lines(cfg.path("general_corpus"))) {
      if (!t.empty()) d.general.push_back(std::move(t));
    }
  } else if (spec) {
    d.general = texts(make_synthetic_corpus(*spec, d.lexicon,
                                            static_cast<std::size_t>(cfg.integer("general_size")),
                                            derive_seed(cfg.seed(), "general")));
  } else {
    d.general = texts(d.train);
  }
  return d;
}

std::unique_ptr<Translator> make_translator(const ExperimentConfig& cfg) {
  const std::string& kind = cfg.get("translator");
  const std::string direction = "en-" + cfg.get("intermediate_language");
  if (kind == "cipher") {
    BilingualDict dict = cfg.is_set("dict") ? BilingualDict::load(cfg.path("dict")) : BilingualDict{};
    return std::make_unique<CipherTranslator>(std::move(dict), direction);
  }
  if (kind == "learned") {
    if (!cfg.is_set("mt_checkpoint")) throw ConfigError("translator learned needs mt_checkpoint");
    return std::make_unique<LearnedTranslator>(
        LearnedTranslator::load(cfg.path("mt_checkpoint"), direction));
  }
  throw ConfigError("unknown translator '" + kind + "' (expected cipher or learned)");
}

std::vector<Tokens> translate_all(const Translator& translator, const std::vector<Tokens>& inputs) {
  if (const auto* learned = dynamic_cast<const LearnedTranslator*>(&translator)) {
    return learned->translate_all(inputs);
  }
  std::vector<Tokens> out;
  out.reserve(inputs.size());
  for (const auto& t : inputs) out.push_back(translator.translate(t));
  return out;
}

TranslatedData translate_data(const ExperimentConfig& cfg, const PreparedData& data,
                              const Translator& translator) {
  TranslatedData t{project_lexicon(data.lexicon, translator, cfg.get("intermediate_language")),
                   {}, {}, {}};
  const auto general = translate_all(translator, data.general);
  for (std::size_t i = 0; i < general.size(); ++i) t.general.push_back({general[i], data.general[i]});
  const auto train = translate_all(translator, texts(data.train));
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Sentence& s = data.train.sentences[i];
    (s.sentiment == Sentiment::pos ? t.pos : t.neg).push_back({train[i], s.tokens});
  }
  return t;
}

TransferModel<float> build_model(const ExperimentConfig& cfg, const TranslatedData& data) {
  std::vector<std::vector<Tokens>> seqs(2);
  for (const auto* group : {&data.general, &data.pos, &data.neg}) {
    for (const auto& ex : *group) {
      seqs[0].push_back(ex.target);
      seqs[1].push_back(ex.source);
    }
  }
  return TransferModel<float>(cfg.model(), build_vocab(seqs), derive_seed(cfg.seed(), "init"));
}

bool wants_pretraining(const ExperimentConfig& cfg) {
  const std::string& mode = cfg.get("pretrain");
  if (mode == "true") return true;
  if (mode == "false") return false;
  if (mode != "auto") throw ConfigError("pretrain must be auto, true or false");
  const Variant v = parse_variant(cfg.get("variant"));
  return v == Variant::pretrained_enc || v == Variant::denoised ||
         (v == Variant::shared_enc_two_dec && !(cfg.noise().pretrain == NoiseProbabilities{}));
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, std::ostream* log) {
  namespace fs = std::filesystem;
  PipelineResult result;
  result.run_dir = cfg.path("run_dir");
  const NoiseSpec noise = stage("config", log, [&] {
    std::error_code ec;
    fs::create_directories(result.run_dir, ec);
    if (ec) throw IoError("cannot create " + result.run_dir.string() + ": " + ec.message());
    cfg.model();
    cfg.save(result.run_dir / "config.resolved");
    std::ofstream version(result.run_dir / "VERSION", std::ios::trunc);
    version << version_string() << '\n';
    if (!version) throw IoError("cannot write VERSION");
    if (parse_variant(cfg.get("variant")) == Variant::plain) {
      throw ConfigError("variant plain is a translation model, not a transfer model");
    }
    return cfg.noise();
  });

  const fs::path ckpt = result.run_dir / "model.ckpt";
  const fs::path transferred = result.run_dir / "transferred.tsv";
  const fs::path report_tsv = result.run_dir / "report.tsv";
  const fs::path report_json = result.run_dir / "report.json";
  auto partial = [](const fs::path& p) { return fs::path(p.string() + ".partial"); };

  PreparedData data = stage("data", log, [&] { return prepare_data(cfg); });
  auto translator = stage("translator", log, [&] { return make_translator(cfg); });

  TranslatedData tr =
      stage("translate", log, [&] { return translate_data(cfg, data, *translator); });
  TransferModel<float> model = stage("model", log, [&] { return build_model(cfg, tr); });

  if (wants_pretraining(cfg)) {
    result.pretrain_log = stage("pretrain", log, [&] {
      TrainConfig t = cfg.train("pretrain");
      t.log = log;
      return pretrain(model, std::span<const ParallelExample>(tr.general), tr.lexicon,
                      noise.pretrain, noise.mode, t);
    });
  }
  result.finetune_log = stage("finetune", log, [&] {
    TrainConfig t = cfg.train("finetune");
    t.log = log;
    auto l = finetune(model, std::span<const ParallelExample>(tr.pos),
                      std::span<const ParallelExample>(tr.neg), tr.lexicon, noise.finetune,
                      noise.mode, t, &result.routing);
    model.save(partial(ckpt));
    return l;
  });

  const std::vector<Tokens> sources = texts(data.test);
  std::vector<Sentiment> labels, targets;
  for (const auto& s : data.test.sentences) {
    labels.push_back(s.sentiment);
    targets.push_back(opposite(s.sentiment));
  }
  const std::vector<Tokens> outputs = stage("transfer", log, [&] {
    TransferOptions opts;
    opts.noise_at_inference = cfg.flag("noise_at_inference");
    opts.noise = noise.finetune;
    opts.mode = noise.mode;
    opts.lexicon = &tr.lexicon;
    opts.seed = derive_seed(cfg.seed(), "transfer");
    opts.routing = &result.routing;
    auto out = transfer_batch(model, *translator, sources, labels, opts);
    Corpus c;
    for (std::size_t i = 0; i < out.size(); ++i) c.sentences.push_back({out[i], targets[i], {}});
    write_corpus(c, partial(transferred), CorpusFormat::tsv);
    return out;
  });

  result.report = stage("evaluate", log, [&] {
    LexiconClassifier clf(data.lexicon);
    TfidfEmbedder embedder(texts(data.train));
    TrigramLM lm;
    lm.train(data.general);
    Scorers scorers{&data.lexicon, &clf, &embedder, &lm, std::nullopt, std::nullopt};
    EvalReport r = evaluate(cfg.get("noise"), outputs, sources, targets, scorers);
    std::ofstream tsv(partial(report_tsv), std::ios::trunc);
    write_report_tsv(tsv, std::span<const EvalReport>(&r, 1));
    std::ofstream json(partial(report_json), std::ios::trunc);
    write_report_json(json, r);
    if (!tsv || !json) throw IoError("cannot write the report");
    return r;
  });

  stage("finalize", log, [&] {
    for (const auto& p : {ckpt, transferred, report_tsv, report_json}) {
      std::error_code ec;
      fs::rename(partial(p), p, ec);
      if (ec) throw IoError("cannot rename " + partial(p).string() + ": " + ec.message());
    }
    return 0;
  });
  return result;
}

void report_table(std::ostream& out, std::span<const EvalReport> reports) {
  write_report_tsv(out, reports);
  if (reports.size() >= 3) {
    out << '\n';
    write_correlation_tsv(out, correlation_report(reports));
  }
}

}  // namespace padst

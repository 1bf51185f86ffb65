// padst: command-line driver for the sentiment transfer pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "padst/errors.hpp"
#include "padst/lexicon.hpp"
#include "padst/metrics.hpp"
#include "padst/model.hpp"
#include "padst/pipeline.hpp"
#include "padst/text.hpp"

namespace fs = std::filesystem;
using namespace padst;

namespace {

struct Common {
  std::vector<std::string> configs;
  std::vector<std::string> overrides;
  std::string noise, variant, translator, dict, mt_checkpoint, run_dir;
  std::int64_t seed = -1;
  bool verbose = false;

  void attach(CLI::App* app) {
    app->add_option("--config", configs, "config file(s), applied in order")->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "override a config key: key=value");
    app->add_option("--noise", noise, "noise-model name, e.g. WG01-AG03-D");
    app->add_option("--variant", variant, "model variant");
    app->add_option("--seed", seed, "root seed");
    app->add_option("--translator", translator, "cipher or learned");
    app->add_option("--dict", dict, "cipher word list");
    app->add_option("--mt-checkpoint", mt_checkpoint, "learned translator checkpoint");
    app->add_option("--run-dir", run_dir, "output directory");
    app->add_flag("-v,--verbose", verbose, "log stages and losses");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    for (const auto& f : configs) cfg.merge_file(f);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!noise.empty()) cfg.set("noise", noise);
    if (!variant.empty()) cfg.set("variant", variant);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (!translator.empty()) cfg.set("translator", translator);
    if (!dict.empty()) cfg.set("dict", dict);
    if (!mt_checkpoint.empty()) cfg.set("mt_checkpoint", mt_checkpoint);
    if (!run_dir.empty()) cfg.set("run_dir", run_dir);
    parse_noise_spec(cfg.get("noise"));
    parse_variant(cfg.get("variant"));
    return cfg;
  }

  std::ostream* log() const { return verbose ? &std::cerr : nullptr; }
};

std::string key_help() {
  std::ostringstream os;
  os << "Config keys (key = value):\n";
  for (const auto& [k, v] : ExperimentConfig::schema()) {
    os << "  " << k << " [" << v.first << "]  " << v.second << '\n';
  }
  return os.str();
}

std::vector<Sentiment> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Sentiment> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_sentiment(line));
  }
  return out;
}

std::vector<Tokens> corpus_texts(const Corpus& c) {
  std::vector<Tokens> out;
  for (const auto& s : c.sentences) out.push_back(s.tokens);
  return out;
}

void save_config(const ExperimentConfig& cfg, const fs::path& next_to) {
  cfg.save(fs::path(next_to.string() + ".config"));
}

int run(int argc, char** argv) {
  CLI::App app{"Sentiment transfer through back-translation with polarity-aware denoising"};
  app.footer(key_help());
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  Common common;

  auto* lex_cmd = app.add_subcommand("build-lexicon", "project the base lexicon through the translator");
  std::string lex_out;
  common.attach(lex_cmd);
  lex_cmd->add_option("--out", lex_out, "output TSV")->required();

  auto* data_cmd = app.add_subcommand("build-dataset", "filter and split a corpus");
  std::string data_out;
  common.attach(data_cmd);
  data_cmd->add_option("--out-dir", data_out, "directory for train/valid/test/general")->required();

  auto* pre_cmd = app.add_subcommand("pretrain", "pretrain the shared encoder");
  std::string pre_out;
  common.attach(pre_cmd);
  pre_cmd->add_option("--out", pre_out, "checkpoint to write")->required();

  auto* fine_cmd = app.add_subcommand("finetune", "train the sentiment decoders");
  std::string fine_in, fine_out;
  common.attach(fine_cmd);
  fine_cmd->add_option("--checkpoint", fine_in, "start from this checkpoint")->check(CLI::ExistingFile);
  fine_cmd->add_option("--out", fine_out, "checkpoint to write")->required();

  auto* xfer_cmd = app.add_subcommand("transfer", "flip the sentiment of a labelled corpus");
  std::string xfer_ckpt, xfer_in, xfer_out;
  common.attach(xfer_cmd);
  xfer_cmd->add_option("--checkpoint", xfer_ckpt, "trained model")->required()->check(CLI::ExistingFile);
  xfer_cmd->add_option("--input", xfer_in, "corpus (.tsv/.jsonl) labelled with source sentiment")
      ->required()->check(CLI::ExistingFile);
  xfer_cmd->add_option("--out", xfer_out, "TSV of target sentiment and output")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "score transferred sentences");
  std::string hyp, src, targets, lexicon, clf_scores, lm_scores, embeddings, lm_corpus, name = "system";
  std::string eval_tsv, eval_json;
  eval_cmd->add_option("--hyp", hyp, "outputs, one per line")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--src", src, "sources, one per line")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--targets", targets, "target labels (pos/neg), one per line")
      ->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--lexicon", lexicon, "polarity lexicon TSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--classifier-scores", clf_scores, "index<TAB>polarity file");
  eval_cmd->add_option("--lm-scores", lm_scores, "index<TAB>log-probability file");
  eval_cmd->add_option("--embeddings", embeddings, "sentence<TAB>vector file");
  eval_cmd->add_option("--lm-corpus", lm_corpus, "training text for the trigram model (default: sources)");
  eval_cmd->add_option("--name", name, "system name in the report");
  eval_cmd->add_option("--out", eval_tsv, "report TSV (default: stdout)");
  eval_cmd->add_option("--json", eval_json, "per-sentence JSON detail");

  auto* run_cmd = app.add_subcommand("run", "the whole pipeline");
  common.attach(run_cmd);

  auto* report_cmd = app.add_subcommand("report", "merge report rows and correlate the columns");
  std::vector<std::string> reports;
  std::string report_out;
  report_cmd->add_option("reports", reports, "report TSV files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "output file (default: stdout)");

  auto* mt_cmd = app.add_subcommand("train-translator", "train a plain model for --translator learned");
  std::string mt_parallel, mt_out;
  int mt_steps = 1000;
  common.attach(mt_cmd);
  mt_cmd->add_option("--parallel", mt_parallel, "TSV of base<TAB>intermediate sentences")
      ->required()->check(CLI::ExistingFile);
  mt_cmd->add_option("--steps", mt_steps, "training steps");
  mt_cmd->add_option("--out", mt_out, "checkpoint to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (lex_cmd->parsed()) {
    ExperimentConfig cfg = common.resolve();
    auto translator = make_translator(cfg);
    ProjectionStats stats;
    PolarityLexicon projected = project_lexicon(load_lexicon(cfg.path("lexicon")), *translator,
                                                cfg.get("intermediate_language"), &stats);
    save_lexicon(projected, lex_out);
    std::cout << "retained " << stats.retained << " dropped_multi_token " << stats.dropped_multi_token
              << " dropped_failed " << stats.dropped_failed << " collisions " << stats.collisions << '\n';
    return 0;
  }

  if (data_cmd->parsed()) {
    ExperimentConfig cfg = common.resolve();
    PreparedData d = prepare_data(cfg);
    fs::create_directories(data_out);
    write_corpus(d.train, fs::path(data_out) / "train.tsv", CorpusFormat::tsv);
    write_corpus(d.valid, fs::path(data_out) / "valid.tsv", CorpusFormat::tsv);
    write_corpus(d.test, fs::path(data_out) / "test.tsv", CorpusFormat::tsv);
    write_lines(d.general, fs::path(data_out) / "general.txt");
    cfg.save(fs::path(data_out) / "config.resolved");
    std::cout << "train " << d.train.size() << " valid " << d.valid.size() << " test "
              << d.test.size() << " general " << d.general.size() << '\n';
    return 0;
  }

  if (pre_cmd->parsed() || fine_cmd->parsed()) {
    ExperimentConfig cfg = common.resolve();
    const NoiseSpec noise = cfg.noise();
    PreparedData d = prepare_data(cfg);
    auto translator = make_translator(cfg);
    TranslatedData t = translate_data(cfg, d, *translator);
    const bool pre = pre_cmd->parsed();
    TransferModel<float> model =
        (!pre && !fine_in.empty()) ? TransferModel<float>::load(fine_in) : build_model(cfg, t);
    if (pre) {
      TrainConfig tc = cfg.train("pretrain");
      tc.log = common.log();
      pretrain(model, std::span<const ParallelExample>(t.general), t.lexicon, noise.pretrain,
               noise.mode, tc);
    } else {
      TrainConfig tc = cfg.train("finetune");
      tc.log = common.log();
      finetune(model, std::span<const ParallelExample>(t.pos), std::span<const ParallelExample>(t.neg),
               t.lexicon, noise.finetune, noise.mode, tc);
    }
    const std::string& out = pre ? pre_out : fine_out;
    model.save(out);
    save_config(cfg, out);
    if (model.truncations() > 0) std::cerr << "warning: " << model.truncations() << " inputs truncated\n";
    return 0;
  }

  if (xfer_cmd->parsed()) {
    ExperimentConfig cfg = common.resolve();
    const NoiseSpec noise = cfg.noise();
    TransferModel<float> model = TransferModel<float>::load(xfer_ckpt);
    auto translator = make_translator(cfg);
    Corpus input = read_corpus(xfer_in, format_for(xfer_in), Split::test);
    std::vector<Sentiment> labels;
    for (const auto& s : input.sentences) labels.push_back(s.sentiment);
    TransferOptions opts;
    opts.noise_at_inference = cfg.flag("noise_at_inference");
    PolarityLexicon inter;
    if (opts.noise_at_inference) {
      inter = project_lexicon(load_lexicon(cfg.path("lexicon")), *translator,
                              cfg.get("intermediate_language"));
      opts.lexicon = &inter;
    }
    opts.noise = noise.finetune;
    opts.mode = noise.mode;
    opts.seed = derive_seed(cfg.seed(), "transfer");
    auto outputs = transfer_batch(model, *translator, corpus_texts(input), labels, opts);
    Corpus out;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      out.sentences.push_back({outputs[i], opposite(labels[i]), input.sentences[i].source_id});
    }
    write_corpus(out, xfer_out, CorpusFormat::tsv);
    return 0;
  }

  if (eval_cmd->parsed()) {
    const auto hyps = read_lines(hyp);
    const auto srcs = read_lines(src);
    const auto labels = read_labels(targets);
    const PolarityLexicon lex = load_lexicon(lexicon);
    LexiconClassifier clf(lex);
    TfidfEmbedder tfidf(srcs);
    std::optional<ExternalEmbedder> external;
    if (!embeddings.empty()) external = ExternalEmbedder::load(embeddings);
    TrigramLM lm;
    lm.train(lm_corpus.empty() ? srcs : read_lines(lm_corpus));
    Scorers scorers{&lex, &clf, external ? static_cast<const Embedder*>(&*external) : &tfidf, &lm,
                    std::nullopt, std::nullopt};
    if (!clf_scores.empty()) scorers.classifier_scores = read_scores(clf_scores, hyps.size());
    if (!lm_scores.empty()) scorers.lm_scores = read_scores(lm_scores, hyps.size());
    EvalReport r = evaluate(name, hyps, srcs, labels, scorers);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    if (eval_tsv.empty()) {
      write_report_tsv(std::cout, std::span<const EvalReport>(&r, 1));
    } else {
      std::ofstream out(eval_tsv);
      if (!out) throw IoError("cannot write " + eval_tsv);
      write_report_tsv(out, std::span<const EvalReport>(&r, 1));
    }
    if (!eval_json.empty()) {
      std::ofstream out(eval_json);
      if (!out) throw IoError("cannot write " + eval_json);
      write_report_json(out, r);
    }
    return 0;
  }

  if (run_cmd->parsed()) {
    ExperimentConfig cfg = common.resolve();
    PipelineResult r = run_pipeline(cfg, common.log());
    write_report_tsv(std::cout, std::span<const EvalReport>(&r.report, 1));
    return 0;
  }

  if (report_cmd->parsed()) {
    std::vector<EvalReport> rows;
    for (const auto& f : reports) {
      auto part = load_report_tsv(f);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) throw DataError("no report rows found");
    if (report_out.empty()) {
      report_table(std::cout, rows);
    } else {
      std::ofstream out(report_out);
      if (!out) throw IoError("cannot write " + report_out);
      report_table(out, rows);
    }
    return 0;
  }

  if (mt_cmd->parsed()) {
    ExperimentConfig cfg = common.resolve();
    std::ifstream in(mt_parallel);
    std::vector<ParallelExample> data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError(mt_parallel + ":" + std::to_string(lineno) + ": expected base<TAB>intermediate");
      }
      data.push_back({tokenize(line.substr(0, tab)), tokenize(line.substr(tab + 1))});
    }
    std::vector<std::vector<Tokens>> seqs(2);
    for (const auto& ex : data) {
      seqs[0].push_back(ex.source);
      seqs[1].push_back(ex.target);
    }
    ModelConfig mc = cfg.model();
    mc.variant = Variant::plain;
    TransferModel<float> model(mc, build_vocab(seqs), derive_seed(cfg.seed(), "init"));
    TrainConfig tc = cfg.train("finetune");
    tc.steps = mt_steps;
    tc.log = common.log();
    train_translation(model, std::span<const ParallelExample>(data), tc);
    model.save(mt_out);
    save_config(cfg, mt_out);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

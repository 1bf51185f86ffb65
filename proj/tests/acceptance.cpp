// One PASS/FAIL line per acceptance criterion. Arguments select criteria by
// number; no arguments runs all of them. Exit status is non-zero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "full_model_check.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "padst/lexicon.hpp"
#include "padst/metrics.hpp"
#include "padst/model.hpp"
#include "padst/noise.hpp"
#include "padst/pipeline.hpp"
#include "padst/text.hpp"
#include "padst/translate.hpp"

using namespace padst;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path source_path(const std::string& rel) { return fs::path(PADST_SOURCE_DIR) / rel; }

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "padst_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- 1

Parameter<double> random_param(const std::string& name, Shape shape, std::uint64_t seed,
                               double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (auto& x : t.data()) x = dist(rng);
  return Parameter<double>(name, t);
}

Var project(Graph<double>& g, Var x, std::uint64_t seed) {
  return g.sum(g.mul(x, g.constant(random_param("w", g.value(x).shape(), seed).value)));
}

Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_op;
  std::size_t checked = 0;
  auto record = [&](const std::string& op, const gradcheck::Result& r) {
    checked += r.checked;
    if (worst_op.empty() || r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_op = op + " " + r.worst;
    }
  };

  auto a = random_param("a", {3, 4}, 1);
  auto b = random_param("b", {4, 5}, 2);
  record("matmul", gradcheck::check({&a, &b}, [&](Graph<double>& g) {
           return project(g, g.matmul(g.parameter(a), g.parameter(b)), 3);
         }));
  auto c = random_param("c", {3, 4}, 4);
  record("add/mul/scale", gradcheck::check({&a, &c}, [&](Graph<double>& g) {
           Var x = g.add(g.parameter(a), g.mul(g.parameter(a), g.parameter(c)));
           return project(g, g.scale(x, 0.7), 5);
         }));
  auto bias = random_param("bias", {4}, 6);
  record("add_bias", gradcheck::check({&a, &bias}, [&](Graph<double>& g) {
           return project(g, g.add_bias(g.parameter(a), g.parameter(bias)), 7);
         }));
  auto wide = random_param("x", {3, 5}, 8, -3, 3);
  record("gelu", gradcheck::check({&wide}, [&](Graph<double>& g) {
           return project(g, g.gelu(g.parameter(wide)), 9);
         }));
  record("softmax_rows", gradcheck::check({&wide}, [&](Graph<double>& g) {
           return project(g, g.softmax_rows(g.parameter(wide)), 10);
         }));
  auto gain = random_param("gain", {5}, 11, 0.5, 1.5);
  auto shift = random_param("shift", {5}, 12);
  record("layer_norm", gradcheck::check({&wide, &gain, &shift}, [&](Graph<double>& g) {
           return project(g, g.layer_norm(g.parameter(wide), g.parameter(gain),
                                          g.parameter(shift)),
                          13);
         }));
  auto table = random_param("table", {6, 3}, 14);
  const std::vector<int> ids{1, 4, 1, 0, 5};
  record("embedding", gradcheck::check({&table}, [&](Graph<double>& g) {
           return project(g, g.embedding(g.parameter(table), ids), 15);
         }));
  for (bool causal : {false, true}) {
    auto q = random_param("q", {6, 4}, 16);
    auto k = random_param("k", {6, 4}, 17);
    auto v = random_param("v", {6, 4}, 18);
    AttentionSpec spec{2, 3, 3, 2, causal, {3, 2}};
    record(causal ? "causal attention" : "masked attention",
           gradcheck::check({&q, &k, &v}, [&](Graph<double>& g) {
             return project(g, g.attention(g.parameter(q), g.parameter(k), g.parameter(v), spec),
                            19);
           }));
  }
  {
    auto q = random_param("q", {4, 4}, 20);
    auto k = random_param("k", {6, 4}, 21);
    auto v = random_param("v", {6, 4}, 22);
    AttentionSpec spec{2, 2, 3, 2, false, {1, 3}};
    record("cross attention", gradcheck::check({&q, &k, &v}, [&](Graph<double>& g) {
             return project(g, g.attention(g.parameter(q), g.parameter(k), g.parameter(v), spec),
                            23);
           }));
  }
  auto logits = random_param("logits", {4, 6}, 24, -2, 2);
  const std::vector<int> targets{2, 0, 5, 1};
  record("cross_entropy", gradcheck::check({&logits}, [&](Graph<double>& g) {
           return g.cross_entropy(g.parameter(logits), targets, 0);
         }));
  record("dropout", gradcheck::check({&a}, [&](Graph<double>& g) {
           std::mt19937_64 rng(25);
           return project(g, g.dropout(g.parameter(a), 0.5, rng), 26);
         }));
  record("full encoder+dual decoder", gradcheck::full_model());

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-4 && secs < 60,
          "max rel error " + fmt(worst) + " over " + std::to_string(checked) + " elements (" +
              worst_op + "), " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome reconstruction() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = 2024;
  const auto lexicon = load_lexicon(source_path("data/fixtures/lexicon_en.tsv"));
  const auto spec = SyntheticSpec::load(source_path("data/fixtures/synthetic_reviews.json"));
  const Corpus all = make_synthetic_corpus(spec, lexicon, 1000, seed);
  const auto splits = split_dataset(all, 0, 100, derive_seed(seed, "split"));

  CipherTranslator translator(BilingualDict::load(source_path("data/fixtures/dict_en_de.tsv")));
  const PolarityLexicon projected = project_lexicon(lexicon, translator, "de");
  std::vector<ParallelExample> train;
  for (const auto& s : splits.train.sentences) {
    train.push_back({translator.translate(s.tokens), s.tokens});
  }
  std::vector<Tokens> held_in, held_ref;
  for (const auto& s : splits.test.sentences) {
    held_in.push_back(translator.translate(s.tokens));
    held_ref.push_back(s.tokens);
  }
  std::vector<std::vector<Tokens>> seqs(1);
  for (const auto& ex : train) {
    seqs[0].push_back(ex.source);
    seqs[0].push_back(ex.target);
  }
  Vocab vocab = build_vocab(seqs);
  std::set<std::string> base_words;
  for (const auto& s : all.sentences) base_words.insert(s.tokens.begin(), s.tokens.end());

  ModelConfig cfg;  // 2 layers, 2 heads, d_model 64
  cfg.variant = Variant::denoised;
  TransferModel<float> model(cfg, vocab, derive_seed(seed, "init"));
  ModelConfig head_cfg = model.config();
  PretrainHead<float> head(head_cfg, derive_seed(seed, "head"));

  TrainConfig t;
  t.steps = 300;
  t.batch_size = 32;
  t.adam.lr = 1e-3;
  t.seed = derive_seed(seed, "pretrain");
  const NoiseSpec noise = parse_noise_spec("WG03-A-D");
  pretrain(model, std::span<const ParallelExample>(train), projected, noise.pretrain, noise.mode,
           t, &head);
  const auto hyps = head.decode(model, held_in);
  const double acc = 100.0 * token_accuracy(hyps, held_ref);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {acc >= 90.0 && secs < 600 && base_words.size() <= 200 && all.size() == 2000 &&
              held_ref.size() == 200,
          "token accuracy " + fmt(acc) + "% on " + std::to_string(held_ref.size()) +
              " held-out sentences (base vocab " + std::to_string(base_words.size()) + ", " +
              std::to_string(all.size()) + " sentences), " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 3

ExperimentConfig transfer_config(const std::string& variant, const std::string& noise,
                                 const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.set("lexicon", source_path("data/fixtures/lexicon_en.tsv").string());
  cfg.set("dict", source_path("data/fixtures/dict_en_de.tsv").string());
  cfg.set("synthetic_spec", source_path("data/fixtures/synthetic_reviews.json").string());
  cfg.set("variant", variant);
  cfg.set("noise", noise);
  cfg.set("run_dir", dir.string());
  return cfg;
}

Outcome sentiment_transfer() {
  const auto start = std::chrono::steady_clock::now();
  const auto sct = run_pipeline(
      transfer_config("shared_enc_two_dec", "WG03P08-AG03P08-M", scratch("sct1")));
  const auto base = run_pipeline(transfer_config("pretrained_enc", "W-A-D", scratch("baseline")));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto& r = sct.report;
  const bool ok = r.acc >= 90 && r.mask_bleu >= 50 && r.avg > base.report.avg &&
                  r.sentences.size() == 200 && secs < 1200;
  return {ok, "SCT1 acc " + fmt(r.acc) + " MaskBLEU " + fmt(r.mask_bleu) + " Avg " + fmt(r.avg) +
                  " vs baseline Avg " + fmt(base.report.avg) + " (acc " + fmt(base.report.acc) +
                  ", MaskBLEU " + fmt(base.report.mask_bleu) + ") on " +
                  std::to_string(r.sentences.size()) + " sentences, " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 4

Tokens random_sentence(std::mt19937_64& rng, std::size_t lo, std::size_t hi,
                       const std::vector<std::string>& words) {
  std::uniform_int_distribution<std::size_t> len(lo, hi), pick(0, words.size() - 1);
  Tokens t(len(rng));
  for (auto& w : t) w = words[pick(rng)];
  return t;
}

Outcome metric_oracles() {
  const auto lexicon = load_lexicon(source_path("data/fixtures/lexicon_en.tsv"));
  const auto pos = lexicon.words(Sentiment::pos);
  const auto neg = lexicon.words(Sentiment::neg);
  std::vector<std::string> words{"the", "food", "was", "service", "and", ".", "very", "a"};
  words.insert(words.end(), pos.begin(), pos.begin() + 4);
  words.insert(words.end(), neg.begin(), neg.begin() + 4);
  std::vector<std::string> pivots(pos);
  pivots.insert(pivots.end(), neg.begin(), neg.end());

  std::mt19937_64 rng(404);
  double max_diff = 0;
  for (int i = 0; i < 100; ++i) {
    const auto h = random_sentence(rng, 1, 12, words);
    const auto r = random_sentence(rng, 1, 12, words);
    max_diff = std::max(max_diff, std::abs(bleu(h, r) - oracle::bleu(h, r)));
  }
  std::size_t mask_mismatch = 0, invariance_fail = 0;
  std::uniform_int_distribution<std::size_t> pick(0, pivots.size() - 1);
  for (int i = 0; i < 1000; ++i) {
    const auto h = random_sentence(rng, 1, 12, words);
    const auto s = random_sentence(rng, 1, 12, words);
    const double mb = mask_bleu(h, s, lexicon);
    if (mb != bleu(mask_pivots(h, lexicon), mask_pivots(s, lexicon))) ++mask_mismatch;
    auto swapped = h;
    for (auto& w : swapped) {
      if (lexicon.contains(w)) w = pivots[pick(rng)];
    }
    if (mask_bleu(swapped, s, lexicon) != mb) ++invariance_fail;
  }
  return {max_diff <= 1e-9 && mask_mismatch == 0 && invariance_fail == 0,
          "max |bleu - oracle| " + fmt(max_diff) + " over 100 pairs; mask_bleu mismatches " +
              std::to_string(mask_mismatch) + "; invariance failures " +
              std::to_string(invariance_fail) + "/1000"};
}

// ---------------------------------------------------------------- 5

Outcome aggregates() {
  const double a = aggregate(85.2, 0.646, 25.4);
  const double b = aggregate(82.0, 0.665, 27.4);
  return {std::abs(a - 58.4) <= 0.05 && std::abs(b - 58.6) <= 0.05,
          "(85.2, 0.646, 25.4) -> " + fmt(a) + "; (82.0, 0.665, 27.4) -> " + fmt(b)};
}

// ---------------------------------------------------------------- 6

Outcome noise_conformance() {
  const auto rows = load_report_tsv(source_path("data/fixtures/reference_rows.tsv"));
  std::size_t round_trips = 0;
  for (const auto& r : rows) {
    if (render_noise_spec(parse_noise_spec(r.system)) == r.system) ++round_trips;
  }
  PolarityLexicon lex;
  lex.insert("good", 1.9);
  lex.insert("bad", -2.5);
  const double n = 10000;
  double worst_z = 0;
  std::string worst;
  for (NoiseMode mode : {NoiseMode::remove, NoiseMode::mask}) {
    for (bool polarity : {false, true}) {
      const NoiseProbabilities p{0.3, 0.8};
      const double target = polarity ? p.polarity : p.general;
      std::mt19937_64 rng(600 + 2 * polarity + (mode == NoiseMode::mask));
      NoiseCounts c;
      for (int s = 0; s < 1000; ++s) {
        Tokens t;
        for (int i = 0; i < 10; ++i) {
          t.push_back(polarity ? (i % 2 ? "good" : "bad") : "w" + std::to_string(i));
        }
        apply_noise(t, lex, p, mode, rng, &c);
      }
      const double seen = static_cast<double>(polarity ? c.polarity_seen : c.general_seen);
      const double hit =
          static_cast<double>(polarity ? c.polarity_corrupted : c.general_corrupted);
      const double z = std::abs(hit - seen * target) / std::sqrt(seen * target * (1 - target));
      if (seen != n) worst_z = 1e9;
      if (z > worst_z) {
        worst_z = z;
        worst = std::string(polarity ? "polarity" : "general") +
                (mode == NoiseMode::mask ? "/mask" : "/delete");
      }
    }
  }
  return {rows.size() == 22 && round_trips == 22 && worst_z <= 3.0,
          std::to_string(round_trips) + "/" + std::to_string(rows.size()) +
              " names round-trip; worst rate deviation " + fmt(worst_z, 3) + " sigma (" + worst +
              ")"};
}

// ---------------------------------------------------------------- 7

Outcome correlation_signs() {
  const auto rows = load_report_tsv(source_path("data/fixtures/reference_rows.tsv"));
  const auto m = correlation_report(rows);
  const auto ab = m.at("Acc", "M/B");
  const auto as = m.at("Acc", "M/Sim");
  return {rows.size() == 22 && ab && as && *ab < 0 && *as < 0,
          "corr(Acc, MaskBLEU) " + (ab ? fmt(*ab) : std::string("NA")) + ", corr(Acc, MaskSim) " +
              (as ? fmt(*as) : std::string("NA")) + " over " + std::to_string(rows.size()) +
              " rows"};
}

// ---------------------------------------------------------------- 8

Outcome filter_conformance() {
  const FilterConfig cfg;
  ScoredSentence example{tokenize("no no no no thanks thanks ."), 0.9, std::nullopt};
  const bool rejects_example = filter_dataset(std::span(&example, 1), cfg).size() == 0;

  std::size_t short_cases = 0, short_kept = 0;
  const Tokens pool{"great", "food", "!", "bad", "the", "."};
  for (std::size_t len = 0; len < 5; ++len) {
    for (std::size_t start = 0; start < pool.size(); ++start) {
      Tokens t;
      for (std::size_t i = 0; i < len; ++i) t.push_back(pool[(start + i) % pool.size()]);
      for (double score : {-1.0, 1.0}) {
        ScoredSentence s{t, score, std::nullopt};
        ++short_cases;
        short_kept += filter_dataset(std::span(&s, 1), cfg).size();
      }
    }
  }

  std::ifstream in(source_path("data/fixtures/filter_adversarial.tsv"));
  std::string line;
  std::size_t total = 0, correct = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string expected, score, text;
    std::getline(fields, expected, '\t');
    std::getline(fields, score, '\t');
    std::getline(fields, text);
    ScoredSentence s{tokenize(text), std::stod(score), std::nullopt};
    const auto verdict = classify_for_dataset(s.tokens, s.score, cfg);
    const bool kept = filter_dataset(std::span(&s, 1), cfg).size() == 1;
    ++total;
    if (to_string(verdict) == expected && kept == (expected == "kept")) ++correct;
  }
  return {rejects_example && short_kept == 0 && total > 0 && correct == total,
          std::string("repetition example ") + (rejects_example ? "rejected" : "KEPT") + "; " +
              std::to_string(short_kept) + "/" + std::to_string(short_cases) +
              " short sentences kept; adversarial " + std::to_string(correct) + "/" +
              std::to_string(total)};
}

// ---------------------------------------------------------------- 9

Outcome determinism() {
  auto small = [](const fs::path& dir) {
    auto cfg = transfer_config("shared_enc_two_dec", "WG03P08-AG03P08-M", dir);
    cfg.set("synthetic_per_label", "200");
    cfg.set("general_size", "200");
    cfg.set("test_per_label", "50");
    cfg.set("pretrain_steps", "40");
    cfg.set("finetune_steps", "40");
    return cfg;
  };
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  run_pipeline(small(a));
  run_pipeline(small(b));
  const std::string ta = slurp(a / "transferred.tsv");
  const bool same_corpus = !ta.empty() && ta == slurp(b / "transferred.tsv");
  const bool same_ckpt = slurp(a / "model.ckpt") == slurp(b / "model.ckpt");

  auto model = TransferModel<float>::load(a / "model.ckpt");
  const fs::path copy = scratch("det_copy") / "model.ckpt";
  model.save(copy);
  auto reloaded = TransferModel<float>::load(copy);
  const std::vector<Tokens> probe{tokenize("the food was great ."),
                                  tokenize("the staff were terrible !"),
                                  tokenize("what a wonderful place")};
  std::size_t compared = 0, differing = 0;
  CipherTranslator translator(BilingualDict::load(source_path("data/fixtures/dict_en_de.tsv")));
  for (const auto& p : probe) {
    const auto in = translator.translate(p);
    for (Sentiment s : {Sentiment::pos, Sentiment::neg}) {
      const auto l1 = model.decode_logits(model.encode(in, s), s, p);
      const auto l2 = reloaded.decode_logits(reloaded.encode(in, s), s, p);
      for (std::size_t i = 0; i < l1.size(); ++i) {
        ++compared;
        if (std::bit_cast<std::uint32_t>(l1[i]) != std::bit_cast<std::uint32_t>(l2[i])) {
          ++differing;
        }
      }
    }
  }
  std::vector<Sentiment> targets(probe.size(), Sentiment::neg);
  std::vector<Tokens> inputs;
  for (const auto& p : probe) inputs.push_back(translator.translate(p));
  const bool same_outputs = model.generate(inputs, targets) == reloaded.generate(inputs, targets);
  return {same_corpus && same_ckpt && differing == 0 && compared > 0 && same_outputs,
          std::string("transferred corpora ") + (same_corpus ? "identical" : "DIFFER") +
              ", checkpoints " + (same_ckpt ? "identical" : "DIFFER") + "; probe logits " +
              std::to_string(compared - differing) + "/" + std::to_string(compared) +
              " bitwise equal after reload"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient verification", gradients},
      {"denoising reconstruction", reconstruction},
      {"synthetic sentiment transfer", sentiment_transfer},
      {"metric oracle equivalence", metric_oracles},
      {"aggregate reproduces table rows", aggregates},
      {"noise-spec conformance", noise_conformance},
      {"correlation signs", correlation_signs},
      {"dataset filter conformance", filter_conformance},
      {"determinism and persistence", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " ("
              << criteria[i].first << "): " << o.detail << std::endl;
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

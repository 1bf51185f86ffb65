#include "padst/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <tuple>

#include "padst/lexicon.hpp"

namespace padst {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 6> kVariantNames{{
    {Variant::plain, "plain"},
    {Variant::style_tok, "style_tok"},
    {Variant::two_sep, "two_sep"},
    {Variant::shared_enc_two_dec, "shared_enc_two_dec"},
    {Variant::pretrained_enc, "pretrained_enc"},
    {Variant::denoised, "denoised"},
}};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class Real>
Tensor<Real> xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor<Real> t({rows, cols});
  for (auto& x : t.data()) x = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
Tensor<Real> normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Real> t({rows, cols});
  for (auto& x : t.data()) x = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
struct Builder {
  ParameterSet<Real>& store;
  std::vector<Parameter<Real>*>& owned;
  std::mt19937_64& rng;

  Parameter<Real>* add(const std::string& name, Tensor<Real> value) {
    Parameter<Real>* p = &store.add(name, std::move(value));
    owned.push_back(p);
    return p;
  }
  Parameter<Real>* weight(const std::string& name, std::size_t r, std::size_t c) {
    return add(name, xavier<Real>(r, c, rng));
  }
  Parameter<Real>* bias(const std::string& name, std::size_t n) {
    return add(name, Tensor<Real>({n}));
  }
  NormParams<Real> norm(const std::string& name, std::size_t d) {
    return {add(name + ".gain", Tensor<Real>({d}, Real(1))), bias(name + ".bias", d)};
  }
  AttentionParams<Real> attention(const std::string& name, std::size_t d) {
    AttentionParams<Real> a{};
    a.wq = weight(name + ".wq", d, d);
    a.bq = bias(name + ".bq", d);
    a.wk = weight(name + ".wk", d, d);
    a.bk = bias(name + ".bk", d);
    a.wv = weight(name + ".wv", d, d);
    a.bv = bias(name + ".bv", d);
    a.wo = weight(name + ".wo", d, d);
    a.bo = bias(name + ".bo", d);
    return a;
  }
  FeedForwardParams<Real> feed_forward(const std::string& name, std::size_t d, std::size_t f) {
    FeedForwardParams<Real> p{};
    p.w1 = weight(name + ".w1", d, f);
    p.b1 = bias(name + ".b1", f);
    p.w2 = weight(name + ".w2", f, d);
    p.b2 = bias(name + ".b2", d);
    return p;
  }
};

template <class Real>
Var norm(Graph<Real>& g, Var x, const NormParams<Real>& p) {
  return g.layer_norm(x, g.parameter(*p.gain), g.parameter(*p.bias));
}

template <class Real>
Var attend(Graph<Real>& g, const AttentionParams<Real>& p, Var xq, Var xkv,
           const AttentionSpec& spec) {
  Var q = g.add_bias(g.matmul(xq, g.parameter(*p.wq)), g.parameter(*p.bq));
  Var k = g.add_bias(g.matmul(xkv, g.parameter(*p.wk)), g.parameter(*p.bk));
  Var v = g.add_bias(g.matmul(xkv, g.parameter(*p.wv)), g.parameter(*p.bv));
  Var o = g.attention(q, k, v, spec);
  return g.add_bias(g.matmul(o, g.parameter(*p.wo)), g.parameter(*p.bo));
}

template <class Real>
Var feed_forward(Graph<Real>& g, const FeedForwardParams<Real>& p, Var x) {
  Var h = g.gelu(g.add_bias(g.matmul(x, g.parameter(*p.w1)), g.parameter(*p.b1)));
  return g.add_bias(g.matmul(h, g.parameter(*p.w2)), g.parameter(*p.b2));
}

template <class Real>
Var maybe_dropout(Graph<Real>& g, Var x, const ModelConfig& cfg, const ForwardOptions& opts) {
  if (opts.dropout_rng == nullptr || cfg.dropout <= 0) return x;
  return g.dropout(x, static_cast<Real>(cfg.dropout), *opts.dropout_rng);
}

template <class Real>
Var embed(Graph<Real>& g, Parameter<Real>& table, const TokenBatch& batch, std::size_t d) {
  Var x = g.embedding(g.parameter(table), batch.ids);
  x = g.scale(x, static_cast<Real>(std::sqrt(static_cast<double>(d))));
  return g.add(x, g.constant(positional_encoding<Real>(batch.batch, batch.length, d)));
}

bool generable(int id) {
  return id != Vocab::kPad && id != Vocab::kBos && id != Vocab::kPos && id != Vocab::kNeg &&
         id != Vocab::kMask;
}

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [value, name] : kVariantNames) {
    if (value == v) return name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  std::string known;
  for (const auto& [value, n] : kVariantNames) {
    if (n == name) return value;
    known += known.empty() ? "" : ", ";
    known += n;
  }
  throw ConfigError("unknown model variant '" + std::string(name) + "' (expected one of " +
                    known + ")");
}

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.layers = 4;
  c.heads = 8;
  c.d_model = 512;
  c.d_ff = 2048;
  c.max_len = 64;
  c.dropout = 0.1;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (layers < 1) fail("layers must be positive");
  if (heads < 1) fail("heads must be positive");
  if (d_model < 2 || d_model % heads != 0) {
    fail("d_model " + std::to_string(d_model) + " must be divisible by heads " +
         std::to_string(heads));
  }
  if (d_ff < 1) fail("d_ff must be positive");
  if (max_len < 2) fail("max_len must be at least 2");
  if (vocab_size < Vocab::kReserved) fail("vocab_size below the reserved token count");
  if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"layers", layers},       {"heads", heads},     {"d_model", d_model},
          {"d_ff", d_ff},           {"vocab_size", vocab_size}, {"max_len", max_len},
          {"dropout", dropout},     {"variant", std::string(to_string(variant))}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

TokenBatch TokenBatch::pack(const std::vector<std::vector<int>>& seqs, int pad_id) {
  TokenBatch b;
  b.batch = seqs.size();
  for (const auto& s : seqs) b.length = std::max(b.length, s.size());
  if (b.batch == 0 || b.length == 0) throw ShapeError("cannot pack an empty batch");
  b.ids.assign(b.batch * b.length, pad_id);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].empty()) throw ShapeError("cannot pack an empty sequence");
    std::copy(seqs[i].begin(), seqs[i].end(), b.ids.begin() + static_cast<long>(i * b.length));
    b.lengths.push_back(static_cast<int>(seqs[i].size()));
  }
  return b;
}

template <class Real>
Tensor<Real> positional_encoding(std::size_t batch, std::size_t length, std::size_t d_model) {
  Tensor<Real> pe({batch * length, d_model});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(t) * rate;
      const Real v = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      for (std::size_t b = 0; b < batch; ++b) pe.at(b * length + t, i) = v;
    }
  }
  return pe;
}

template <class Real>
Encoder<Real> Encoder<Real>::create(ParameterSet<Real>& store, const std::string& prefix,
                                    const ModelConfig& cfg, std::mt19937_64& rng) {
  Encoder e;
  e.name_ = prefix;
  e.cfg_ = cfg;
  Builder<Real> b{store, e.params_, rng};
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  e.embedding_ = b.add(prefix + ".embedding",
                       normal<Real>(static_cast<std::size_t>(cfg.vocab_size), d,
                                    1.0 / std::sqrt(static_cast<double>(d)), rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.norm_attn = b.norm(p + ".norm_attn", d);
    layer.attn = b.attention(p + ".self_attn", d);
    layer.norm_ff = b.norm(p + ".norm_ff", d);
    layer.ff = b.feed_forward(p + ".ff", d, f);
    e.layers_.push_back(layer);
  }
  e.final_norm_ = b.norm(prefix + ".final_norm", d);
  return e;
}

template <class Real>
Var Encoder<Real>::forward(Graph<Real>& g, const TokenBatch& src,
                           const ForwardOptions& opts) const {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  Var x = maybe_dropout(g, embed(g, *embedding_, src, d), cfg_, opts);
  AttentionSpec spec{src.batch, src.length, src.length, static_cast<std::size_t>(cfg_.heads),
                     false, src.lengths};
  for (const auto& layer : layers_) {
    Var h = norm(g, x, layer.norm_attn);
    x = g.add(x, maybe_dropout(g, attend(g, layer.attn, h, h, spec), cfg_, opts));
    h = norm(g, x, layer.norm_ff);
    x = g.add(x, maybe_dropout(g, feed_forward(g, layer.ff, h), cfg_, opts));
  }
  return norm(g, x, final_norm_);
}

template <class Real>
Decoder<Real> Decoder<Real>::create(ParameterSet<Real>& store, const std::string& prefix,
                                    const ModelConfig& cfg, std::mt19937_64& rng) {
  Decoder dec;
  dec.name_ = prefix;
  dec.cfg_ = cfg;
  Builder<Real> b{store, dec.params_, rng};
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  dec.embedding_ = b.add(prefix + ".embedding",
                         normal<Real>(v, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.norm_self = b.norm(p + ".norm_self", d);
    layer.self_attn = b.attention(p + ".self_attn", d);
    layer.norm_cross = b.norm(p + ".norm_cross", d);
    layer.cross_attn = b.attention(p + ".cross_attn", d);
    layer.norm_ff = b.norm(p + ".norm_ff", d);
    layer.ff = b.feed_forward(p + ".ff", d, f);
    dec.layers_.push_back(layer);
  }
  dec.final_norm_ = b.norm(prefix + ".final_norm", d);
  dec.out_w_ = b.weight(prefix + ".out.weight", d, v);
  dec.out_b_ = b.bias(prefix + ".out.bias", v);
  return dec;
}

template <class Real>
Var Decoder<Real>::logits(Graph<Real>& g, Var memory, const TokenBatch& src,
                          const TokenBatch& tgt_in, const ForwardOptions& opts) const {
  if (src.batch != tgt_in.batch) throw ShapeError("decoder: source and target batch differ");
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto heads = static_cast<std::size_t>(cfg_.heads);
  Var y = maybe_dropout(g, embed(g, *embedding_, tgt_in, d), cfg_, opts);
  AttentionSpec self{tgt_in.batch, tgt_in.length, tgt_in.length, heads, true, tgt_in.lengths};
  AttentionSpec cross{tgt_in.batch, tgt_in.length, src.length, heads, false, src.lengths};
  for (const auto& layer : layers_) {
    Var h = norm(g, y, layer.norm_self);
    y = g.add(y, maybe_dropout(g, attend(g, layer.self_attn, h, h, self), cfg_, opts));
    h = norm(g, y, layer.norm_cross);
    y = g.add(y, maybe_dropout(g, attend(g, layer.cross_attn, h, memory, cross), cfg_, opts));
    h = norm(g, y, layer.norm_ff);
    y = g.add(y, maybe_dropout(g, feed_forward(g, layer.ff, h), cfg_, opts));
  }
  Var h = norm(g, y, final_norm_);
  return g.add_bias(g.matmul(h, g.parameter(*out_w_)), g.parameter(*out_b_));
}

template <class Real>
TransferModel<Real>::TransferModel(ModelConfig cfg, Vocab vocab, std::uint64_t seed)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      truncations_(std::make_unique<std::atomic<std::size_t>>(0)) {
  cfg_.vocab_size = static_cast<int>(vocab_.size());
  cfg_.validate();
  std::mt19937_64 rng(seed);
  switch (cfg_.variant) {
    case Variant::plain:
    case Variant::style_tok:
      encoders_.push_back(Encoder<Real>::create(params_, "encoder", cfg_, rng));
      decoders_.push_back(Decoder<Real>::create(params_, "decoder", cfg_, rng));
      break;
    case Variant::two_sep:
      encoders_.push_back(Encoder<Real>::create(params_, "encoder_pos", cfg_, rng));
      encoders_.push_back(Encoder<Real>::create(params_, "encoder_neg", cfg_, rng));
      decoders_.push_back(Decoder<Real>::create(params_, "decoder_pos", cfg_, rng));
      decoders_.push_back(Decoder<Real>::create(params_, "decoder_neg", cfg_, rng));
      break;
    case Variant::shared_enc_two_dec:
    case Variant::pretrained_enc:
    case Variant::denoised:
      encoders_.push_back(Encoder<Real>::create(params_, "encoder", cfg_, rng));
      decoders_.push_back(Decoder<Real>::create(params_, "decoder_pos", cfg_, rng));
      decoders_.push_back(Decoder<Real>::create(params_, "decoder_neg", cfg_, rng));
      break;
  }
}

template <class Real>
std::size_t TransferModel<Real>::encoder_index(Sentiment target) const {
  if (encoders_.size() == 1) return 0;
  if (target == Sentiment::unlabeled) throw std::invalid_argument("route needs a sentiment");
  return target == Sentiment::neg ? 1 : 0;
}

template <class Real>
std::size_t TransferModel<Real>::decoder_index(Sentiment target) const {
  if (decoders_.size() == 1) return 0;
  if (target == Sentiment::unlabeled) throw std::invalid_argument("route needs a sentiment");
  return target == Sentiment::neg ? 1 : 0;
}

template <class Real>
int TransferModel<Real>::start_token(Sentiment target) const {
  if (cfg_.variant != Variant::style_tok) return Vocab::kBos;
  if (target == Sentiment::unlabeled) throw std::invalid_argument("style token needs a sentiment");
  return target == Sentiment::neg ? Vocab::kNeg : Vocab::kPos;
}

template <class Real>
std::vector<int> TransferModel<Real>::clip_source(std::vector<int> ids) const {
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  if (ids.size() > static_cast<std::size_t>(cfg_.max_len)) {
    ids.resize(static_cast<std::size_t>(cfg_.max_len));
    truncations_->fetch_add(1);
  }
  return ids;
}

template <class Real>
TokenBatch TransferModel<Real>::source_batch_ids(const std::vector<std::vector<int>>& ids) const {
  std::vector<std::vector<int>> clipped;
  clipped.reserve(ids.size());
  for (const auto& s : ids) clipped.push_back(clip_source(s));
  return TokenBatch::pack(clipped, Vocab::kPad);
}

template <class Real>
TokenBatch TransferModel<Real>::source_batch(const std::vector<Tokens>& sources) const {
  std::vector<std::vector<int>> ids;
  ids.reserve(sources.size());
  for (const auto& s : sources) ids.push_back(vocab_.encode(s));
  return source_batch_ids(ids);
}

template <class Real>
LatentRepresentation<Real> TransferModel<Real>::encode(const Tokens& tokens,
                                                       Sentiment target) const {
  LatentRepresentation<Real> out;
  out.encoder = encoder_index(target);
  out.source = clip_source(vocab_.encode(tokens));
  Graph<Real> g(false);
  TokenBatch src = TokenBatch::pack({out.source}, Vocab::kPad);
  out.z = g.value(encoders_[out.encoder].forward(g, src));
  return out;
}

template <class Real>
Tensor<Real> TransferModel<Real>::decode_logits(const LatentRepresentation<Real>& z,
                                                Sentiment target, const Tokens& targets) const {
  std::vector<int> in{start_token(target)};
  for (int id : vocab_.encode(targets)) in.push_back(id);
  if (in.size() > static_cast<std::size_t>(cfg_.max_len)) {
    in.resize(static_cast<std::size_t>(cfg_.max_len));
  }
  Graph<Real> g(false);
  TokenBatch src = TokenBatch::pack({z.source}, Vocab::kPad);
  TokenBatch tgt = TokenBatch::pack({in}, Vocab::kPad);
  Var memory = g.constant(z.z);
  return g.value(decoders_[decoder_index(target)].logits(g, memory, src, tgt));
}

namespace {

template <class Real>
std::vector<std::vector<int>> greedy(const Decoder<Real>& dec, const Tensor<Real>& memory,
                                     const TokenBatch& src, int start,
                                     const std::vector<std::size_t>& steps) {
  const std::size_t n = src.batch;
  std::vector<std::vector<int>> prefix(n, std::vector<int>{start});
  std::vector<std::vector<int>> out(n);
  std::vector<bool> done(n, false);
  for (std::size_t i = 0; i < n; ++i) done[i] = steps[i] == 0;
  while (!std::all_of(done.begin(), done.end(), [](bool b) { return b; })) {
    Graph<Real> g(false);
    TokenBatch tgt = TokenBatch::pack(prefix, Vocab::kPad);
    const Tensor<Real>& logits = g.value(dec.logits(g, g.constant(memory), src, tgt));
    const std::size_t vocab = logits.cols();
    for (std::size_t i = 0; i < n; ++i) {
      if (done[i]) continue;
      const std::size_t row = i * tgt.length + prefix[i].size() - 1;
      int best = -1;
      Real best_value = 0;
      for (std::size_t v = 0; v < vocab; ++v) {
        if (!generable(static_cast<int>(v))) continue;
        const Real x = logits.at(row, v);
        if (best < 0 || x > best_value) {
          best = static_cast<int>(v);
          best_value = x;
        }
      }
      if (best == Vocab::kEos) {
        done[i] = true;
        continue;
      }
      out[i].push_back(best);
      prefix[i].push_back(best);
      if (out[i].size() >= steps[i]) done[i] = true;
    }
  }
  return out;
}

}  // namespace

template <class Real>
Tokens TransferModel<Real>::decode_greedy(const LatentRepresentation<Real>& z, Sentiment target,
                                          std::size_t max_steps) const {
  const auto cap = static_cast<std::size_t>(cfg_.max_len);
  const std::size_t steps = max_steps == 0 ? cap : std::min(max_steps, cap);
  TokenBatch src = TokenBatch::pack({z.source}, Vocab::kPad);
  auto ids = greedy(decoders_[decoder_index(target)], z.z, src, start_token(target), {steps});
  return vocab_.decode(ids[0]);
}

template <class Real>
std::vector<Tokens> TransferModel<Real>::generate(const std::vector<Tokens>& sources,
                                                  const std::vector<Sentiment>& targets,
                                                  std::size_t (*max_steps)(std::size_t),
                                                  std::size_t batch_size) const {
  if (sources.size() != targets.size()) {
    throw std::invalid_argument("generate: sources and targets differ in length");
  }
  if (batch_size == 0) batch_size = 1;
  const auto cap = static_cast<std::size_t>(cfg_.max_len);
  std::map<std::tuple<std::size_t, std::size_t, int>, std::vector<std::size_t>> routes;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    routes[{encoder_index(targets[i]), decoder_index(targets[i]), start_token(targets[i])}]
        .push_back(i);
  }
  std::vector<Tokens> out(sources.size());
  for (const auto& [route, members] : routes) {
    const auto& [e, d, start] = route;
    for (std::size_t lo = 0; lo < members.size(); lo += batch_size) {
      const std::size_t hi = std::min(members.size(), lo + batch_size);
      std::vector<Tokens> chunk;
      std::vector<std::size_t> steps;
      for (std::size_t k = lo; k < hi; ++k) {
        const Tokens& s = sources[members[k]];
        chunk.push_back(s);
        steps.push_back(max_steps ? std::min(max_steps(s.size()), cap) : cap);
      }
      TokenBatch src = source_batch(chunk);
      Graph<Real> g(false);
      Tensor<Real> memory = g.value(encoders_[e].forward(g, src));
      auto ids = greedy(decoders_[d], memory, src, start, steps);
      for (std::size_t k = lo; k < hi; ++k) out[members[k]] = vocab_.decode(ids[k - lo]);
    }
  }
  return out;
}

template <class Real>
Checkpoint TransferModel<Real>::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.model_config = cfg_.to_json();
  ckpt.metadata["vocab"] = vocab_.tokens();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.tensors.push_back({params_[i].name, params_[i].value.template cast<float>()});
  }
  return ckpt;
}

template <class Real>
TransferModel<Real> TransferModel<Real>::from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig cfg = ModelConfig::from_json(ckpt.model_config);
  if (!ckpt.metadata.contains("vocab") || !ckpt.metadata["vocab"].is_array()) {
    throw DataError("checkpoint has no vocabulary");
  }
  Vocab vocab = Vocab::from_tokens(ckpt.metadata["vocab"].get<std::vector<std::string>>());
  if (static_cast<int>(vocab.size()) != cfg.vocab_size) {
    throw DataError("checkpoint vocabulary has " + std::to_string(vocab.size()) +
                    " tokens but the config says " + std::to_string(cfg.vocab_size));
  }
  TransferModel model(cfg, std::move(vocab), 0);
  if (ckpt.tensors.size() != model.params_.size()) {
    throw DataError("checkpoint has " + std::to_string(ckpt.tensors.size()) +
                    " tensors, model expects " + std::to_string(model.params_.size()));
  }
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    Parameter<Real>& p = model.params_[i];
    const NamedTensor* t = ckpt.find(p.name);
    if (t == nullptr) throw DataError("checkpoint is missing tensor " + p.name);
    if (t->value.shape() != p.value.shape()) {
      throw DataError("tensor " + p.name + " has shape " + shape_string(t->value.shape()) +
                      ", expected " + shape_string(p.value.shape()));
    }
    p.value = t->value.template cast<Real>();
  }
  return model;
}

template <class Real>
void TransferModel<Real>::save(const std::filesystem::path& path) const {
  write_checkpoint(path, to_checkpoint());
}

template <class Real>
TransferModel<Real> TransferModel<Real>::load(const std::filesystem::path& path) {
  return from_checkpoint(read_checkpoint(path));
}

namespace {

// Endless stream of noised batches; every epoch draws fresh noise and a new
// order from a seed derived from the epoch number.
class EpochStream {
 public:
  EpochStream(std::span<const ParallelExample> data, const PolarityLexicon& lexicon,
              NoiseProbabilities p, NoiseMode mode, std::uint64_t seed, std::size_t batch)
      : lexicon_(lexicon), p_(p), mode_(mode), seed_(seed), batch_(std::max<std::size_t>(1, batch)) {
    for (const auto& ex : data) {
      src_.push_back(ex.source);
      tgt_.push_back(ex.target);
    }
  }

  std::vector<DenoisingPair> next() {
    if (pos_ == order_.size()) refill();
    const std::size_t end = std::min(order_.size(), pos_ + batch_);
    std::vector<DenoisingPair> out;
    for (; pos_ < end; ++pos_) out.push_back(pairs_[order_[pos_]]);
    return out;
  }

 private:
  void refill() {
    const std::uint64_t s = mix_seed(seed_, epoch_++);
    pairs_ = make_denoising_pairs(src_, tgt_, lexicon_, p_, mode_, s);
    order_.resize(pairs_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(s, 7));
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }

  const PolarityLexicon& lexicon_;
  NoiseProbabilities p_;
  NoiseMode mode_;
  std::uint64_t seed_;
  std::size_t batch_;
  std::vector<Tokens> src_, tgt_;
  std::vector<DenoisingPair> pairs_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

template <class Real>
struct Route {
  const Encoder<Real>* encoder;
  const Decoder<Real>* decoder;
  int start;
  std::vector<Adam<Real>*> optimizers;
};

template <class Real>
double train_step(const TransferModel<Real>& model, const Route<Real>& route,
                  const std::vector<DenoisingPair>& batch, const TrainConfig& cfg, int step,
                  std::string_view phase, std::mt19937_64& dropout_rng) {
  const Vocab& vocab = model.vocab();
  const auto max_len = static_cast<std::size_t>(model.config().max_len);
  std::vector<std::vector<int>> src, tgt_in, tgt_out;
  for (const auto& pair : batch) {
    src.push_back(vocab.encode(pair.noised));
    std::vector<int> t = vocab.encode(pair.clean);
    if (t.size() > max_len - 1) t.resize(max_len - 1);
    std::vector<int> in{route.start};
    in.insert(in.end(), t.begin(), t.end());
    t.push_back(Vocab::kEos);
    tgt_in.push_back(std::move(in));
    tgt_out.push_back(std::move(t));
  }
  TokenBatch s = model.source_batch_ids(src);
  TokenBatch ti = TokenBatch::pack(tgt_in, Vocab::kPad);
  TokenBatch to = TokenBatch::pack(tgt_out, Vocab::kPad);

  for (auto* opt : route.optimizers) opt->zero_grad();
  Graph<Real> g(true);
  ForwardOptions opts{&dropout_rng};
  Var memory = route.encoder->forward(g, s, opts);
  Var logits = route.decoder->logits(g, memory, s, ti, opts);
  Var loss = g.cross_entropy(logits, to.ids, Vocab::kPad);
  const double value = static_cast<double>(g.value(loss)[0]);
  if (!std::isfinite(value)) {
    throw NumericError(std::string(phase) + " step " + std::to_string(step) +
                       ": non-finite loss");
  }
  g.backward(loss);

  std::vector<Parameter<Real>*> params;
  for (auto* opt : route.optimizers) {
    params.insert(params.end(), opt->params().begin(), opt->params().end());
  }
  for (auto* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError(std::string(phase) + " step " + std::to_string(step) +
                         ": non-finite gradient in tensor " + p->name);
    }
  }
  if (cfg.clip_norm > 0) {
    clip_grad_norm<Real>(std::span<Parameter<Real>* const>(params), cfg.clip_norm);
  }
  for (auto* opt : route.optimizers) opt->step();
  if (cfg.log != nullptr && cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) {
    *cfg.log << phase << " step " << (step + 1) << " loss " << value << '\n';
  }
  return value;
}

void require_data(std::span<const ParallelExample> data, const std::string& what) {
  if (data.empty()) throw DataError(what + " corpus is empty");
}

}  // namespace

template <class Real>
PretrainHead<Real>::PretrainHead(const ModelConfig& cfg, std::uint64_t seed)
    : decoder([&] {
        std::mt19937_64 rng(mix_seed(seed, 11));
        return Decoder<Real>::create(params, "pretrain_decoder", cfg, rng);
      }()) {}

template <class Real>
std::vector<Tokens> PretrainHead<Real>::decode(const TransferModel<Real>& model,
                                               const std::vector<Tokens>& inputs) const {
  std::vector<Tokens> out;
  const auto cap = static_cast<std::size_t>(model.config().max_len);
  for (std::size_t lo = 0; lo < inputs.size(); lo += 64) {
    std::vector<Tokens> chunk(inputs.begin() + static_cast<long>(lo),
                              inputs.begin() + static_cast<long>(std::min(inputs.size(), lo + 64)));
    TokenBatch src = model.source_batch(chunk);
    Graph<Real> g(false);
    Tensor<Real> memory = g.value(model.encoder(0).forward(g, src));
    auto ids = greedy(decoder, memory, src, Vocab::kBos,
                      std::vector<std::size_t>(chunk.size(), cap));
    for (const auto& seq : ids) out.push_back(model.vocab().decode(seq));
  }
  return out;
}

template <class Real>
TrainLog pretrain(TransferModel<Real>& model, std::span<const ParallelExample> data,
                  const PolarityLexicon& lexicon, NoiseProbabilities noise, NoiseMode mode,
                  const TrainConfig& cfg, PretrainHead<Real>* head) {
  TrainLog log;
  if (cfg.steps <= 0) return log;
  if (model.encoder_count() != 1) {
    throw ConfigError("pretraining needs a shared encoder; variant " +
                      std::string(to_string(model.config().variant)) + " has none");
  }
  require_data(data, "pretraining");
  std::unique_ptr<PretrainHead<Real>> scratch;
  if (head == nullptr) {
    scratch = std::make_unique<PretrainHead<Real>>(model.config(), cfg.seed);
    head = scratch.get();
  }
  Adam<Real> enc_opt(model.encoder(0).parameters(), cfg.adam);
  Adam<Real> dec_opt(head->decoder.parameters(), cfg.adam);
  Route<Real> route{&model.encoder(0), &head->decoder, Vocab::kBos, {&enc_opt, &dec_opt}};
  EpochStream stream(data, lexicon, noise, mode, mix_seed(cfg.seed, 1),
                     static_cast<std::size_t>(cfg.batch_size));
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 3));
  for (int step = 0; step < cfg.steps; ++step) {
    log.losses.push_back(train_step(model, route, stream.next(), cfg, step, "pretrain", dropout_rng));
  }
  return log;
}

template <class Real>
TrainLog finetune(TransferModel<Real>& model, std::span<const ParallelExample> pos,
                  std::span<const ParallelExample> neg, const PolarityLexicon& lexicon,
                  NoiseProbabilities noise, NoiseMode mode, const TrainConfig& cfg,
                  RoutingLog* routing) {
  TrainLog log;
  if (cfg.steps <= 0) return log;
  require_data(pos, "positive finetuning");
  require_data(neg, "negative finetuning");
  std::vector<std::unique_ptr<Adam<Real>>> enc_opts, dec_opts;
  for (std::size_t i = 0; i < model.encoder_count(); ++i) {
    enc_opts.push_back(std::make_unique<Adam<Real>>(model.encoder(i).parameters(), cfg.adam));
  }
  for (std::size_t i = 0; i < model.decoder_count(); ++i) {
    dec_opts.push_back(std::make_unique<Adam<Real>>(model.decoder(i).parameters(), cfg.adam));
  }
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  EpochStream pos_stream(pos, lexicon, noise, mode, mix_seed(cfg.seed, 21), batch);
  EpochStream neg_stream(neg, lexicon, noise, mode, mix_seed(cfg.seed, 22), batch);
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 23));
  for (int step = 0; step < cfg.steps; ++step) {
    const Sentiment label = step % 2 == 0 ? Sentiment::pos : Sentiment::neg;
    const std::size_t e = model.encoder_index(label);
    const std::size_t d = model.decoder_index(label);
    Route<Real> route{&model.encoder(e), &model.decoder(d), model.start_token(label),
                      {enc_opts[e].get(), dec_opts[d].get()}};
    auto examples = label == Sentiment::pos ? pos_stream.next() : neg_stream.next();
    if (routing != nullptr) routing->events.push_back({"finetune", e, d, label, examples.size()});
    log.losses.push_back(train_step(model, route, examples, cfg, step, "finetune", dropout_rng));
  }
  return log;
}

template <class Real>
TrainLog train_translation(TransferModel<Real>& model, std::span<const ParallelExample> data,
                           const TrainConfig& cfg) {
  TrainLog log;
  if (cfg.steps <= 0) return log;
  require_data(data, "translation");
  Adam<Real> enc_opt(model.encoder(0).parameters(), cfg.adam);
  Adam<Real> dec_opt(model.decoder(0).parameters(), cfg.adam);
  Route<Real> route{&model.encoder(0), &model.decoder(0), model.start_token(Sentiment::pos),
                    {&enc_opt, &dec_opt}};
  const PolarityLexicon none;
  EpochStream stream(data, none, {}, NoiseMode::remove, mix_seed(cfg.seed, 31),
                     static_cast<std::size_t>(cfg.batch_size));
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 33));
  for (int step = 0; step < cfg.steps; ++step) {
    log.losses.push_back(train_step(model, route, stream.next(), cfg, step, "translate", dropout_rng));
  }
  return log;
}

template <class Real>
std::vector<Tokens> transfer_batch(const TransferModel<Real>& model, const Translator& translator,
                                   const std::vector<Tokens>& inputs,
                                   const std::vector<Sentiment>& sources,
                                   const TransferOptions& opts) {
  if (inputs.size() != sources.size()) {
    throw std::invalid_argument("transfer: inputs and labels differ in length");
  }
  std::mt19937_64 rng(opts.seed);
  std::vector<Tokens> intermediate;
  std::vector<Sentiment> targets;
  intermediate.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (sources[i] == Sentiment::unlabeled) {
      throw std::invalid_argument("transfer: input " + std::to_string(i) + " has no sentiment");
    }
    Tokens t = translator.translate(inputs[i]);
    if (opts.noise_at_inference && opts.lexicon != nullptr) {
      t = apply_noise(t, *opts.lexicon, opts.noise, opts.mode, rng);
    }
    intermediate.push_back(std::move(t));
    targets.push_back(opposite(sources[i]));
  }
  if (opts.routing != nullptr) {
    std::map<std::tuple<std::size_t, std::size_t, Sentiment>, std::size_t> counts;
    for (Sentiment t : targets) {
      ++counts[{model.encoder_index(t), model.decoder_index(t), t}];
    }
    for (const auto& [key, n] : counts) {
      opts.routing->events.push_back(
          {"transfer", std::get<0>(key), std::get<1>(key), std::get<2>(key), n});
    }
  }
  return model.generate(intermediate, targets);
}

template <class Real>
Tokens transfer(const TransferModel<Real>& model, const Translator& translator,
                const Tokens& tokens, Sentiment source, const TransferOptions& opts) {
  return transfer_batch(model, translator, {tokens}, {source}, opts).front();
}

Vocab build_vocab(std::span<const std::vector<Tokens>> sequences) {
  Vocab v;
  for (const auto& group : sequences) {
    for (const auto& seq : group) {
      for (const auto& tok : seq) v.add(tok);
    }
  }
  return v;
}

LearnedTranslator::LearnedTranslator(TransferModel<float> model, std::string direction)
    : model_(std::move(model)), direction_(std::move(direction)) {
  if (model_.config().variant != Variant::plain) {
    throw ConfigError("translation checkpoint must hold a plain model, found " +
                      std::string(to_string(model_.config().variant)));
  }
}

LearnedTranslator LearnedTranslator::load(const std::filesystem::path& checkpoint,
                                          std::string direction) {
  if (!std::filesystem::exists(checkpoint)) {
    throw IoError("translation checkpoint not found: " + checkpoint.string());
  }
  return LearnedTranslator(TransferModel<float>::load(checkpoint), std::move(direction));
}

std::vector<Tokens> LearnedTranslator::translate_all(const std::vector<Tokens>& inputs) const {
  if (model_.vocab().size() <= static_cast<std::size_t>(Vocab::kReserved)) {
    throw DataError("translation model has an empty vocabulary");
  }
  std::vector<Sentiment> route(inputs.size(), Sentiment::pos);
  return model_.generate(inputs, route, [](std::size_t n) { return 2 * n + 5; });
}

Tokens LearnedTranslator::translate(const Tokens& tokens) const {
  return translate_all({tokens}).front();
}

double token_accuracy(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("token_accuracy: hypothesis and reference counts differ");
  }
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const std::size_t n = std::min(hyps[i].size(), refs[i].size());
    for (std::size_t j = 0; j < n; ++j) hit += hyps[i][j] == refs[i][j] ? 1 : 0;
    total += std::max(hyps[i].size(), refs[i].size());
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

#define PADST_INSTANTIATE(Real)                                                               \
  template Tensor<Real> positional_encoding<Real>(std::size_t, std::size_t, std::size_t);    \
  template class Encoder<Real>;                                                               \
  template class Decoder<Real>;                                                               \
  template class TransferModel<Real>;                                                         \
  template TrainLog pretrain<Real>(TransferModel<Real>&, std::span<const ParallelExample>,   \
                                   const PolarityLexicon&, NoiseProbabilities, NoiseMode,    \
                                   const TrainConfig&, PretrainHead<Real>*);                  \
  template struct PretrainHead<Real>;                                                         \
  template TrainLog finetune<Real>(TransferModel<Real>&, std::span<const ParallelExample>,   \
                                   std::span<const ParallelExample>, const PolarityLexicon&, \
                                   NoiseProbabilities, NoiseMode, const TrainConfig&,         \
                                   RoutingLog*);                                              \
  template TrainLog train_translation<Real>(TransferModel<Real>&,                             \
                                            std::span<const ParallelExample>,                 \
                                            const TrainConfig&);                              \
  template std::vector<Tokens> transfer_batch<Real>(                                          \
      const TransferModel<Real>&, const Translator&, const std::vector<Tokens>&,              \
      const std::vector<Sentiment>&, const TransferOptions&);                                 \
  template Tokens transfer<Real>(const TransferModel<Real>&, const Translator&, const Tokens&, \
                                 Sentiment, const TransferOptions&);

PADST_INSTANTIATE(float)
PADST_INSTANTIATE(double)

#undef PADST_INSTANTIATE

}  // namespace padst

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "padst/checkpoint.hpp"
#include "padst/graph.hpp"
#include "padst/noise.hpp"
#include "padst/optim.hpp"
#include "padst/text.hpp"
#include "padst/translate.hpp"

namespace padst {

class PolarityLexicon;

// Model layouts:
//   plain               one encoder, one decoder started with <bos> (translation)
//   style_tok           one encoder, one decoder started with <pos>/<neg>
//   two_sep             an independent encoder/decoder pair per sentiment
//   shared_enc_two_dec  one encoder, one decoder per sentiment
//   pretrained_enc      shared_enc_two_dec whose encoder is pretrained first
//   denoised            pretrained_enc with polarity-aware noise
enum class Variant { plain, style_tok, two_sep, shared_enc_two_dec, pretrained_enc, denoised };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 0;
  int max_len = 32;
  double dropout = 0.0;
  Variant variant = Variant::shared_enc_two_dec;

  /// 4 layers, 8 heads, 512 wide.
  static ModelConfig large();

  /// Throws ConfigError when the shape is unusable.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Right-padded batch of id sequences.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> ids;
  std::vector<int> lengths;

  static TokenBatch pack(const std::vector<std::vector<int>>& seqs, int pad_id);
};

/// Sinusoidal position table for `batch` copies of `length` positions.
template <class Real>
Tensor<Real> positional_encoding(std::size_t batch, std::size_t length, std::size_t d_model);

template <class Real>
struct AttentionParams {
  Parameter<Real>* wq;
  Parameter<Real>* bq;
  Parameter<Real>* wk;
  Parameter<Real>* bk;
  Parameter<Real>* wv;
  Parameter<Real>* bv;
  Parameter<Real>* wo;
  Parameter<Real>* bo;
};

template <class Real>
struct NormParams {
  Parameter<Real>* gain;
  Parameter<Real>* bias;
};

template <class Real>
struct FeedForwardParams {
  Parameter<Real>* w1;
  Parameter<Real>* b1;
  Parameter<Real>* w2;
  Parameter<Real>* b2;
};

/// Dropout is applied only when an rng is supplied.
struct ForwardOptions {
  std::mt19937_64* dropout_rng = nullptr;
};

// Pre-norm transformer encoder. Parameters live in an external ParameterSet.
template <class Real>
class Encoder {
 public:
  static Encoder create(ParameterSet<Real>& store, const std::string& prefix,
                        const ModelConfig& cfg, std::mt19937_64& rng);

  /// Returns the [batch * length x d_model] memory.
  Var forward(Graph<Real>& g, const TokenBatch& src, const ForwardOptions& opts = {}) const;

  const std::vector<Parameter<Real>*>& parameters() const { return params_; }
  const std::string& name() const { return name_; }

 private:
  struct Layer {
    NormParams<Real> norm_attn;
    AttentionParams<Real> attn;
    NormParams<Real> norm_ff;
    FeedForwardParams<Real> ff;
  };
  std::string name_;
  ModelConfig cfg_;
  Parameter<Real>* embedding_ = nullptr;
  std::vector<Layer> layers_;
  NormParams<Real> final_norm_{};
  std::vector<Parameter<Real>*> params_;
};

template <class Real>
class Decoder {
 public:
  static Decoder create(ParameterSet<Real>& store, const std::string& prefix,
                        const ModelConfig& cfg, std::mt19937_64& rng);

  /// Teacher-forced logits, [batch * tgt.length x vocab].
  Var logits(Graph<Real>& g, Var memory, const TokenBatch& src, const TokenBatch& tgt_in,
             const ForwardOptions& opts = {}) const;

  const std::vector<Parameter<Real>*>& parameters() const { return params_; }
  const std::string& name() const { return name_; }

 private:
  struct Layer {
    NormParams<Real> norm_self;
    AttentionParams<Real> self_attn;
    NormParams<Real> norm_cross;
    AttentionParams<Real> cross_attn;
    NormParams<Real> norm_ff;
    FeedForwardParams<Real> ff;
  };
  std::string name_;
  ModelConfig cfg_;
  Parameter<Real>* embedding_ = nullptr;
  std::vector<Layer> layers_;
  NormParams<Real> final_norm_{};
  Parameter<Real>* out_w_ = nullptr;
  Parameter<Real>* out_b_ = nullptr;
  std::vector<Parameter<Real>*> params_;
};

/// Encoder output for one sentence.
template <class Real>
struct LatentRepresentation {
  Tensor<Real> z;            // [T x d_model]
  std::vector<int> source;   // encoded (possibly truncated) input ids
  std::size_t encoder = 0;   // which encoder produced z
};

struct RoutingEvent {
  std::string phase;  // "finetune" or "transfer"
  std::size_t encoder = 0;
  std::size_t decoder = 0;
  Sentiment target = Sentiment::unlabeled;  // sentiment of the decoded text
  std::size_t sentences = 0;
};

struct RoutingLog {
  std::vector<RoutingEvent> events;
};

template <class Real>
class TransferModel {
 public:
  TransferModel(ModelConfig cfg, Vocab vocab, std::uint64_t seed);
  TransferModel(TransferModel&&) noexcept = default;
  TransferModel& operator=(TransferModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParameterSet<Real>& parameters() { return params_; }
  const ParameterSet<Real>& parameters() const { return params_; }

  std::size_t encoder_count() const { return encoders_.size(); }
  std::size_t decoder_count() const { return decoders_.size(); }
  const Encoder<Real>& encoder(std::size_t i) const { return encoders_.at(i); }
  const Decoder<Real>& decoder(std::size_t i) const { return decoders_.at(i); }

  /// Encoder / decoder that produce text of the given sentiment.
  std::size_t encoder_index(Sentiment target) const;
  std::size_t decoder_index(Sentiment target) const;
  /// First decoder input: <pos>/<neg> for style_tok, <bos> otherwise.
  int start_token(Sentiment target) const;

  LatentRepresentation<Real> encode(const Tokens& tokens,
                                    Sentiment target = Sentiment::pos) const;
  /// Teacher-forced logits [len(targets) + 1 x vocab] (the last row predicts <eos>).
  Tensor<Real> decode_logits(const LatentRepresentation<Real>& z, Sentiment target,
                             const Tokens& targets) const;
  Tokens decode_greedy(const LatentRepresentation<Real>& z, Sentiment target,
                       std::size_t max_steps = 0) const;

  /// Encodes and greedily decodes many inputs; targets[i] selects the route.
  /// max_steps(len) bounds the output length, never beyond max_len.
  std::vector<Tokens> generate(const std::vector<Tokens>& sources,
                               const std::vector<Sentiment>& targets,
                               std::size_t (*max_steps)(std::size_t) = nullptr,
                               std::size_t batch_size = 64) const;

  /// Number of inputs truncated to max_len so far.
  std::size_t truncations() const { return truncations_->load(); }

  Checkpoint to_checkpoint() const;
  static TransferModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static TransferModel load(const std::filesystem::path& path);

  /// Encoder ids and source batch for a list of token sequences.
  TokenBatch source_batch(const std::vector<Tokens>& sources) const;
  TokenBatch source_batch_ids(const std::vector<std::vector<int>>& ids) const;

 private:
  std::vector<int> clip_source(std::vector<int> ids) const;

  ModelConfig cfg_;
  Vocab vocab_;
  ParameterSet<Real> params_;
  std::vector<Encoder<Real>> encoders_;
  std::vector<Decoder<Real>> decoders_;
  std::unique_ptr<std::atomic<std::size_t>> truncations_;
};

/// Aligned (intermediate-language input, base-language target) example.
struct ParallelExample {
  Tokens source;
  Tokens target;
};

struct TrainConfig {
  int steps = 0;
  int batch_size = 32;
  AdamConfig adam;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 1;
  int log_every = 0;
  std::ostream* log = nullptr;
};

struct TrainLog {
  std::vector<double> losses;  // one per step
};

/// Decoder used only while pretraining the shared encoder.
template <class Real>
struct PretrainHead {
  ParameterSet<Real> params;
  Decoder<Real> decoder;

  PretrainHead(const ModelConfig& cfg, std::uint64_t seed);
  PretrainHead(const PretrainHead&) = delete;
  PretrainHead& operator=(const PretrainHead&) = delete;

  /// Greedy reconstructions through the model's shared encoder.
  std::vector<Tokens> decode(const TransferModel<Real>& model,
                             const std::vector<Tokens>& inputs) const;
};

/// Pretrains the shared encoder as a denoising back-translation model. The
/// decoder comes from `head` when given, otherwise a temporary one is
/// created and discarded.
template <class Real>
TrainLog pretrain(TransferModel<Real>& model, std::span<const ParallelExample> data,
                  const PolarityLexicon& lexicon, NoiseProbabilities noise, NoiseMode mode,
                  const TrainConfig& cfg, PretrainHead<Real>* head = nullptr);

/// Alternates pos/neg batches; each batch trains only the route producing its
/// own sentiment.
template <class Real>
TrainLog finetune(TransferModel<Real>& model, std::span<const ParallelExample> pos,
                  std::span<const ParallelExample> neg, const PolarityLexicon& lexicon,
                  NoiseProbabilities noise, NoiseMode mode, const TrainConfig& cfg,
                  RoutingLog* routing = nullptr);

/// Trains a plain model end to end on parallel data (translation).
template <class Real>
TrainLog train_translation(TransferModel<Real>& model, std::span<const ParallelExample> data,
                           const TrainConfig& cfg);

struct TransferOptions {
  bool noise_at_inference = false;
  NoiseProbabilities noise;
  NoiseMode mode = NoiseMode::remove;
  const PolarityLexicon* lexicon = nullptr;  // intermediate-language pivots
  std::uint64_t seed = 0;
  RoutingLog* routing = nullptr;
};

/// Translates, optionally noises, encodes and decodes with the route of the
/// opposite sentiment.
template <class Real>
std::vector<Tokens> transfer_batch(const TransferModel<Real>& model, const Translator& translator,
                                   const std::vector<Tokens>& inputs,
                                   const std::vector<Sentiment>& sources,
                                   const TransferOptions& opts = {});

template <class Real>
Tokens transfer(const TransferModel<Real>& model, const Translator& translator,
                const Tokens& tokens, Sentiment source, const TransferOptions& opts = {});

/// Builds a joint vocabulary from every token of the given sequences.
Vocab build_vocab(std::span<const std::vector<Tokens>> sequences);

// Translator backed by a trained plain checkpoint; greedy decoding with at
// most 2 * len + 5 output tokens.
class LearnedTranslator : public Translator {
 public:
  explicit LearnedTranslator(TransferModel<float> model, std::string direction = "en-de");
  static LearnedTranslator load(const std::filesystem::path& checkpoint,
                                std::string direction = "en-de");

  Tokens translate(const Tokens& tokens) const override;
  std::vector<Tokens> translate_all(const std::vector<Tokens>& inputs) const;
  std::string name() const override { return "learned"; }
  std::string direction() const override { return direction_; }
  const TransferModel<float>& model() const { return model_; }

 private:
  TransferModel<float> model_;
  std::string direction_;
};

/// Position-wise token accuracy of hypotheses against references.
double token_accuracy(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

}  // namespace padst

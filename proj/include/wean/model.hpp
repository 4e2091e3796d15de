#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wean/layers.hpp"
#include "wean/vocab.hpp"

namespace wean {

enum class GeneratorKind { kSoftmaxLinear, kWean };

std::string to_string(GeneratorKind kind);
GeneratorKind parse_generator_kind(const std::string& name);

struct ModelConfig {
  GeneratorKind generator = GeneratorKind::kWean;
  ScoreKind relevance = ScoreKind::kGeneral;  // WEAN scoring of candidate embeddings
  ScoreKind attention = ScoreKind::kGeneral;  // decoder-over-encoder attention
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t hidden_size = 256;
  std::size_t embedding_size = 256;
  double dropout = 0.4;
  double init_range = 0.08;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// The words a generator may emit, as slots into the shared vocabulary.
/// Specials always occupy slots 0-3 in id order, so the unknown-word slot is
/// kUnkId and the end-of-sequence slot is kEosId.
class CandidateSet {
 public:
  /// Every vocabulary word.
  static CandidateSet all(const Vocabulary& vocab);
  /// Specials plus the `n` most frequent non-special words.
  static CandidateSet most_frequent(const Vocabulary& vocab, std::size_t n);
  /// Explicit id list; must start with the four specials and hold no duplicates.
  static CandidateSet from_ids(std::vector<TokenId> ids, std::size_t vocab_size);

  std::size_t size() const { return ids_.size(); }
  TokenId word(std::size_t slot) const { return ids_.at(slot); }
  /// Slot of `word`; words outside the set map to the unknown-word slot.
  std::size_t slot_of(TokenId word) const;
  bool contains(TokenId word) const { return word < slots_.size() && slots_[word] != kMissing; }
  const std::vector<TokenId>& ids() const { return ids_; }
  /// True when slot i holds word i for the whole vocabulary.
  bool is_identity() const { return identity_; }

 private:
  static constexpr std::size_t kMissing = static_cast<std::size_t>(-1);
  std::vector<TokenId> ids_;
  std::vector<std::size_t> slots_;
  bool identity_ = false;
};

/// Output layer. Both variants start from the attentional state
/// tanh(W_c [s_t; c_t]) and differ only in how it is turned into scores:
///
///   softmax_linear: scores = W x           (W is V x k)
///   wean:           scores_i = f(q, e_i)   over candidate embeddings e_i
///
/// with f one of dot (q.e), general (q^T W_a e) or concat
/// (v^T tanh(W_q q + W_e e)).
class GeneratorHead {
 public:
  GeneratorHead(GeneratorKind kind, ScoreKind relevance, std::size_t hidden_size, std::size_t embedding_size,
                std::size_t vocab_size);

  /// Parameters shared by both variants (W_c).
  void initialize_shared(double range, Rng& rng);
  /// Variant-specific parameters.
  void initialize_own(double range, Rng& rng);

  /// tanh(W_c [s; c]) for s, c of shape [B x k].
  Tensor attentional_state(const Tensor& s, const Tensor& c) const;
  /// WEAN query q_t; a ContractError on the softmax_linear head.
  Tensor make_query(const Tensor& s, const Tensor& c) const;
  /// query [B x k], candidate embeddings [n x d] -> [B x n].
  Tensor relevance(const Tensor& query, const Tensor& candidates) const;
  /// Unnormalized scores over the output slots.
  Tensor scores(const Tensor& s, const Tensor& c, const Tensor& candidate_values) const;

  GeneratorKind kind() const { return kind_; }
  ScoreKind relevance_kind() const { return relevance_; }
  void collect_parameters(std::vector<Parameter>& out) const;

  Tensor query_projection;  // W_c [k x 2k]
  Tensor output_weights;    // W [V x k], softmax_linear only
  Tensor relevance_weight;  // W_a [k x d], general only
  Tensor query_weight;      // W_q [k x k], concat only
  Tensor value_weight;      // W_e [k x d], concat only
  Tensor energy;            // v [k], concat only

 private:
  GeneratorKind kind_;
  ScoreKind relevance_;
  std::size_t hidden_size_;
  std::size_t embedding_size_;
};

/// Output-layer parameters: V*k for softmax_linear; for wean only the
/// relevance function's parameters (dot 0, general k^2, concat 2k^2 + k).
/// W_c is common to both heads and is not counted.
std::uint64_t count_output_params(GeneratorKind kind, ScoreKind relevance, std::uint64_t vocab_size,
                                  std::uint64_t hidden_size);

/// Encoder-decoder with attention over one shared embedding table. The
/// encoder input, decoder input and WEAN candidate values all read the same
/// `embedding` tensor.
class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig config, std::shared_ptr<const Vocabulary> vocab, CandidateSet candidates,
               std::uint64_t seed);

  struct EncodedSource {
    Tensor states;    // [B x N x k] top-layer encoder outputs
    Tensor prepared;  // attention precomputation over `states`
    std::optional<Tensor> mask;
    std::vector<LstmState> final_state;  // per encoder layer, at each row's last real token
  };

  /// Batch-major ids [B x width] with per-row lengths (each >= 1).
  EncodedSource encode_batch(std::span<const TokenId> source, std::size_t batch, std::size_t width,
                             std::span<const std::size_t> lengths, RunMode mode, Rng* rng) const;
  /// Top-layer hidden states [N x k] for one sentence, in eval mode.
  Tensor encode(std::span<const TokenId> source) const;

  std::vector<LstmState> initial_decoder_state(const EncodedSource& encoded) const;

  struct DecodeStep {
    Tensor s;  // [B x k] top decoder hidden state
    Tensor c;  // [B x k] attention context
    std::vector<LstmState> state;
  };
  DecodeStep decode_step(const Tensor& prev_value, std::span<const LstmState> state, const EncodedSource& encoded,
                         RunMode mode, Rng* rng) const;

  /// Embeddings of the output slots [n x d]. For an identity candidate set
  /// this is the embedding table itself.
  Tensor candidate_values() const;
  /// Embedding rows for `ids` [|ids| x d]; recorded for gradients.
  Tensor embed(std::span<const TokenId> ids) const;

  /// Scores over output slots [B x n], dropout applied to s in train mode.
  Tensor output_scores(const Tensor& s, const Tensor& c, const Tensor& values, RunMode mode, Rng* rng) const;
  /// softmax(output_scores) in eval mode.
  Tensor word_distribution(const Tensor& s, const Tensor& c) const;

  /// Highest-probability slot (lowest slot on ties): its word id and that
  /// word's embedding row, the value fed to the next decoder step.
  std::pair<TokenId, Tensor> select_word(std::span<const double> distribution) const;

  std::vector<Parameter> parameters() const;
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> shared_vocab() const { return vocab_; }
  const CandidateSet& candidates() const { return candidates_; }
  const GeneratorHead& head() const { return head_; }
  const AttentionLayer& attention() const { return attention_; }
  const LstmStack& encoder() const { return encoder_; }
  const LstmStack& decoder() const { return decoder_; }

  Tensor embedding;  // [V x d]

 private:
  ModelConfig config_;
  std::shared_ptr<const Vocabulary> vocab_;
  CandidateSet candidates_;
  LstmStack encoder_;
  LstmStack decoder_;
  AttentionLayer attention_;
  GeneratorHead head_;
};

}  // namespace wean

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wean/ops.hpp"
#include "wean/rng.hpp"
#include "wean/tensor.hpp"

namespace wean {

struct Parameter {
  std::string name;
  Tensor tensor;
};

enum class RunMode { kTrain, kEval };

/// Inverted dropout. Identity in eval mode or at rate 0; in train mode each
/// element is zeroed with probability `rate` and survivors are scaled by
/// 1 / (1 - rate).
Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng* rng);

/// Fresh trainable tensor with entries drawn uniformly from [-range, range).
Tensor uniform_parameter(Shape shape, double range, Rng& rng);

struct LstmState {
  Tensor h;  // [B x d]
  Tensor c;  // [B x d]
};

/// Standard LSTM cell with a forget gate and no peepholes. Inputs are
/// batch-major: x is [B x in], state tensors are [B x d]. Gate rows are laid
/// out in blocks of d as [input, forget, cell-candidate, output].
class LstmCell {
 public:
  LstmCell(std::size_t input_size, std::size_t hidden_size);

  /// Uniform weights in [-range, range), zero biases, forget-gate bias +1.
  void initialize(double range, Rng& rng);

  LstmState step(const Tensor& x, const LstmState& state) const;
  LstmState zero_state(std::size_t batch) const;

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }
  void collect_parameters(const std::string& prefix, std::vector<Parameter>& out) const;

  Tensor input_weights;      // [4d x in]
  Tensor recurrent_weights;  // [4d x d]
  Tensor biases;             // [4d]

 private:
  std::size_t input_size_;
  std::size_t hidden_size_;
};

/// Stacked LSTM. Dropout sits between layers, never on recurrent links.
class LstmStack {
 public:
  LstmStack(std::size_t input_size, std::size_t hidden_size, std::size_t layers);

  void initialize(double range, Rng& rng);
  std::vector<LstmState> step(const Tensor& x, std::span<const LstmState> states, double dropout_rate, RunMode mode,
                              Rng* rng) const;
  std::vector<LstmState> zero_state(std::size_t batch) const;

  std::size_t layers() const { return cells_.size(); }
  std::size_t hidden_size() const { return cells_.front().hidden_size(); }
  const LstmCell& cell(std::size_t i) const { return cells_.at(i); }
  LstmCell& cell(std::size_t i) { return cells_.at(i); }
  void collect_parameters(const std::string& prefix, std::vector<Parameter>& out) const;

 private:
  std::vector<LstmCell> cells_;
};

enum class ScoreKind { kDot, kGeneral, kConcat };

std::string to_string(ScoreKind kind);
ScoreKind parse_score_kind(const std::string& name);

/// Luong-style attention of a decoder state over encoder states.
///
///   dot:     g(s, h) = s . h
///   general: g(s, h) = s^T W h
///   concat:  g(s, h) = v^T tanh(W_q s + W_h h)
///
/// alpha = softmax_i g(s, h_i), context = sum_i alpha_i h_i.
class AttentionLayer {
 public:
  AttentionLayer(ScoreKind kind, std::size_t query_size, std::size_t key_size);

  void initialize(double range, Rng& rng);

  struct Result {
    Tensor context;  // [B x key]
    Tensor weights;  // [B x N]
  };

  /// Work that depends only on the keys; computed once per source batch.
  Tensor prepare(const Tensor& keys) const;

  /// query [B x q], keys [B x N x key]. `additive_mask`, when given, is a
  /// [B x N] constant added to the scores (large negative on padding).
  Result attend(const Tensor& query, const Tensor& keys, const Tensor& prepared,
                const std::optional<Tensor>& additive_mask) const;

  /// Single-example form: query [d], keys [N x d] -> context [d], weights [N].
  Result attend(const Tensor& query, const Tensor& keys) const;

  ScoreKind kind() const { return kind_; }
  void collect_parameters(const std::string& prefix, std::vector<Parameter>& out) const;

  Tensor weight;        // general: [q x key]
  Tensor query_weight;  // concat: [q x q]
  Tensor key_weight;    // concat: [q x key]
  Tensor energy;        // concat: [q]

 private:
  ScoreKind kind_;
  std::size_t query_size_;
  std::size_t key_size_;
};

}  // namespace wean

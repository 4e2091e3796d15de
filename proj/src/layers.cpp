#include "wean/layers.hpp"

namespace wean {

Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == RunMode::kEval || rate == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout in train mode needs a random source");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng->uniform() < rate ? 0.0 : keep_scale;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor uniform_parameter(Shape shape, double range, Rng& rng) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.uniform(-range, range);
  return Tensor::from(std::move(shape), std::move(values), true);
}

LstmCell::LstmCell(std::size_t input_size, std::size_t hidden_size)
    : input_weights(Tensor::zeros({4 * hidden_size, input_size}, true)),
      recurrent_weights(Tensor::zeros({4 * hidden_size, hidden_size}, true)),
      biases(Tensor::zeros({4 * hidden_size}, true)),
      input_size_(input_size),
      hidden_size_(hidden_size) {}

void LstmCell::initialize(double range, Rng& rng) {
  input_weights = uniform_parameter(input_weights.shape(), range, rng);
  recurrent_weights = uniform_parameter(recurrent_weights.shape(), range, rng);
  std::vector<double> b(4 * hidden_size_, 0.0);
  std::fill(b.begin() + hidden_size_, b.begin() + 2 * hidden_size_, 1.0);
  biases = Tensor::from({4 * hidden_size_}, std::move(b), true);
}

LstmState LstmCell::step(const Tensor& x, const LstmState& state) const {
  if (x.rank() != 2 || x.dim(1) != input_size_) {
    throw DimensionError("lstm step: input " + shape_string(x.shape()) + " does not match input size " +
                         std::to_string(input_size_));
  }
  const Shape expected{x.dim(0), hidden_size_};
  if (state.h.shape() != expected || state.c.shape() != expected) {
    throw DimensionError("lstm step: state " + shape_string(state.h.shape()) + "/" + shape_string(state.c.shape()) +
                         " does not match " + shape_string(expected));
  }
  const std::size_t d = hidden_size_;
  const Tensor gates = add_bias(add(matmul_nt(x, input_weights), matmul_nt(state.h, recurrent_weights)), biases);
  const Tensor in_gate = sigmoid(slice_cols(gates, 0, d));
  const Tensor forget_gate = sigmoid(slice_cols(gates, d, 2 * d));
  const Tensor candidate = tanh(slice_cols(gates, 2 * d, 3 * d));
  const Tensor out_gate = sigmoid(slice_cols(gates, 3 * d, 4 * d));
  Tensor c = add(mul(forget_gate, state.c), mul(in_gate, candidate));
  Tensor h = mul(out_gate, tanh(c));
  return {std::move(h), std::move(c)};
}

LstmState LstmCell::zero_state(std::size_t batch) const {
  return {Tensor::zeros({batch, hidden_size_}), Tensor::zeros({batch, hidden_size_})};
}

void LstmCell::collect_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".input_weights", input_weights});
  out.push_back({prefix + ".recurrent_weights", recurrent_weights});
  out.push_back({prefix + ".biases", biases});
}

LstmStack::LstmStack(std::size_t input_size, std::size_t hidden_size, std::size_t layers) {
  if (layers == 0) throw ContractError("an LSTM stack needs at least one layer");
  for (std::size_t i = 0; i < layers; ++i) cells_.emplace_back(i == 0 ? input_size : hidden_size, hidden_size);
}

void LstmStack::initialize(double range, Rng& rng) {
  for (auto& cell : cells_) cell.initialize(range, rng);
}

std::vector<LstmState> LstmStack::step(const Tensor& x, std::span<const LstmState> states, double dropout_rate,
                                       RunMode mode, Rng* rng) const {
  if (states.size() != cells_.size()) {
    throw DimensionError("lstm stack: " + std::to_string(states.size()) + " states for " +
                         std::to_string(cells_.size()) + " layers");
  }
  std::vector<LstmState> next;
  next.reserve(cells_.size());
  Tensor input = x;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (i > 0) input = dropout(input, dropout_rate, mode, rng);
    next.push_back(cells_[i].step(input, states[i]));
    input = next.back().h;
  }
  return next;
}

std::vector<LstmState> LstmStack::zero_state(std::size_t batch) const {
  std::vector<LstmState> states;
  for (const auto& cell : cells_) states.push_back(cell.zero_state(batch));
  return states;
}

void LstmStack::collect_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i].collect_parameters(prefix + "." + std::to_string(i), out);
}

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kDot:
      return "dot";
    case ScoreKind::kGeneral:
      return "general";
    case ScoreKind::kConcat:
      return "concat";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& name) {
  if (name == "dot") return ScoreKind::kDot;
  if (name == "general") return ScoreKind::kGeneral;
  if (name == "concat") return ScoreKind::kConcat;
  throw std::invalid_argument("unknown score function '" + name + "' (expected dot, general or concat)");
}

AttentionLayer::AttentionLayer(ScoreKind kind, std::size_t query_size, std::size_t key_size)
    : kind_(kind), query_size_(query_size), key_size_(key_size) {
  if (kind == ScoreKind::kDot && query_size != key_size) {
    throw DimensionError("dot attention needs equal query and key sizes, got " + std::to_string(query_size) +
                         " and " + std::to_string(key_size));
  }
  if (kind == ScoreKind::kGeneral) weight = Tensor::zeros({query_size, key_size}, true);
  if (kind == ScoreKind::kConcat) {
    query_weight = Tensor::zeros({query_size, query_size}, true);
    key_weight = Tensor::zeros({query_size, key_size}, true);
    energy = Tensor::zeros({query_size}, true);
  }
}

void AttentionLayer::initialize(double range, Rng& rng) {
  if (kind_ == ScoreKind::kGeneral) weight = uniform_parameter(weight.shape(), range, rng);
  if (kind_ == ScoreKind::kConcat) {
    query_weight = uniform_parameter(query_weight.shape(), range, rng);
    key_weight = uniform_parameter(key_weight.shape(), range, rng);
    energy = uniform_parameter(energy.shape(), range, rng);
  }
}

Tensor AttentionLayer::prepare(const Tensor& keys) const {
  if (keys.rank() != 3 || keys.dim(2) != key_size_) {
    throw DimensionError("attention keys " + shape_string(keys.shape()) + " do not have width " +
                         std::to_string(key_size_));
  }
  if (keys.dim(1) == 0) throw ContractError("attention over an empty source");
  if (kind_ != ScoreKind::kConcat) return keys;
  const std::size_t batch = keys.dim(0), count = keys.dim(1);
  const Tensor flat = reshape(keys, {batch * count, key_size_});
  return reshape(matmul_nt(flat, key_weight), {batch, count, query_size_});
}

AttentionLayer::Result AttentionLayer::attend(const Tensor& query, const Tensor& keys, const Tensor& prepared,
                                              const std::optional<Tensor>& additive_mask) const {
  if (keys.rank() != 3 || keys.dim(1) == 0) throw ContractError("attention over an empty source");
  if (query.rank() != 2 || query.dim(1) != query_size_ || query.dim(0) != keys.dim(0)) {
    throw DimensionError("attention query " + shape_string(query.shape()) + " does not match keys " +
                         shape_string(keys.shape()));
  }
  Tensor scores;
  switch (kind_) {
    case ScoreKind::kDot:
      scores = batch_matvec(keys, query);
      break;
    case ScoreKind::kGeneral:
      scores = batch_matvec(keys, matmul(query, weight));
      break;
    case ScoreKind::kConcat: {
      const std::size_t batch = keys.dim(0), count = keys.dim(1);
      const Tensor hidden = tanh(add_per_step(prepared, matmul_nt(query, query_weight)));
      const Tensor flat = matmul(reshape(hidden, {batch * count, query_size_}), reshape(energy, {query_size_, 1}));
      scores = reshape(flat, {batch, count});
      break;
    }
  }
  if (additive_mask) scores = add(scores, *additive_mask);
  Tensor weights = softmax(scores);
  Tensor context = batch_vecmat(weights, keys);
  return {std::move(context), std::move(weights)};
}

AttentionLayer::Result AttentionLayer::attend(const Tensor& query, const Tensor& keys) const {
  if (keys.rank() != 2 || keys.dim(0) == 0) throw ContractError("attention over an empty source");
  if (query.rank() != 1) throw DimensionError("attention query must be a vector, got " + shape_string(query.shape()));
  const Tensor batched_keys = reshape(keys, {1, keys.dim(0), keys.dim(1)});
  auto result = attend(reshape(query, {1, query.dim(0)}), batched_keys, prepare(batched_keys), std::nullopt);
  return {reshape(result.context, {keys.dim(1)}), reshape(result.weights, {keys.dim(0)})};
}

void AttentionLayer::collect_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
  if (kind_ == ScoreKind::kGeneral) out.push_back({prefix + ".weight", weight});
  if (kind_ == ScoreKind::kConcat) {
    out.push_back({prefix + ".query_weight", query_weight});
    out.push_back({prefix + ".key_weight", key_weight});
    out.push_back({prefix + ".energy", energy});
  }
}

}  // namespace wean

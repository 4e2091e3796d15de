#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "wean/data.hpp"
#include "wean/model.hpp"
#include "wean/rng.hpp"
#include "wean/tensor.hpp"

namespace wean::testing {

// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero up
// to rounding from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

struct Coordinate {
  Tensor tensor;
  std::size_t index;
};

// Compares backward() against central differences f(x+h) - f(x-h) / 2h at
// the given coordinates. `loss` must rebuild the graph from scratch.
inline GradCheckResult check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                       const std::vector<Coordinate>& coords, double step = 1e-4) {
  for (auto& p : params) p.clear_grad();
  backward(loss());
  std::vector<double> analytic;
  for (const auto& c : coords) analytic.push_back(c.tensor.grad().at(c.index));

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    Tensor t = coords[i].tensor;
    double& x = t.mutable_values()[coords[i].index];
    const double saved = x;
    x = saved + step;
    const double up = loss().item();
    x = saved - step;
    const double down = loss().item();
    x = saved;
    const double numeric = (up - down) / (2.0 * step);
    result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[i], numeric));
    ++result.checked;
  }
  return result;
}

// Every coordinate of every tensor.
inline std::vector<Coordinate> all_coordinates(const std::vector<Tensor>& params) {
  std::vector<Coordinate> out;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back({p, i});
  }
  return out;
}

// `per_tensor` coordinates drawn without replacement from each tensor.
inline std::vector<Coordinate> sample_coordinates(const std::vector<Tensor>& params, std::size_t per_tensor, Rng& rng) {
  std::vector<Coordinate> out;
  for (const auto& p : params) {
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(std::min(per_tensor, idx.size()));
    for (auto i : idx) out.push_back({p, i});
  }
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double range = 1.0, bool requires_grad = true) {
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = rng.uniform(-range, range);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

// Vocabulary "<specials> t0 t1 ..." with strictly decreasing frequencies.
inline std::shared_ptr<const Vocabulary> numbered_vocab(std::size_t words) {
  std::vector<std::string> tokens{"<pad>", "<s>", "</s>", "<unk>"};
  std::vector<std::size_t> freq{0, 0, 0, 0};
  for (std::size_t i = 0; i < words; ++i) {
    tokens.push_back("t" + std::to_string(i));
    freq.push_back(words - i);
  }
  return std::make_shared<const Vocabulary>(Vocabulary::from_tokens(std::move(tokens), std::move(freq)));
}

// Per-token teacher-forced loss with the three readers of the embedding
// table (encoder input, decoder input, candidate values) given separately.
// Passing model.embedding for all three reproduces sequence_loss in eval
// mode; passing a detached copy for some cuts those paths off.
inline Tensor tied_paths_loss(Seq2SeqModel& model, const Batch& batch, const Tensor& encoder_table,
                              const Tensor& decoder_table, const Tensor& candidate_table) {
  const Tensor shared = model.embedding;
  model.embedding = encoder_table;
  const auto encoded = model.encode_batch(batch.source, batch.size, batch.source_width, batch.source_lengths,
                                          RunMode::kEval, nullptr);
  model.embedding = shared;
  const auto& candidates = model.candidates();
  const Tensor values = candidates.is_identity() ? candidate_table : gather_rows(candidate_table, candidates.ids());
  auto state = model.initial_decoder_state(encoded);
  Tensor total;
  double tokens = 0;
  std::vector<TokenId> inputs(batch.size);
  std::vector<std::size_t> gold(batch.size);
  std::vector<double> weights(batch.size);
  for (std::size_t t = 0; t < batch.target_width; ++t) {
    for (std::size_t b = 0; b < batch.size; ++b) {
      const std::size_t at = b * batch.target_width + t;
      inputs[b] = batch.decoder_inputs[at];
      gold[b] = candidates.slot_of(batch.targets[at]);
      weights[b] = batch.mask[at];
      tokens += weights[b];
    }
    auto step = model.decode_step(gather_rows(decoder_table, inputs), state, encoded, RunMode::kEval, nullptr);
    const Tensor loss = cross_entropy(model.output_scores(step.s, step.c, values, RunMode::kEval, nullptr), gold,
                                      weights);
    total = t == 0 ? loss : add(total, loss);
    state = std::move(step.state);
  }
  return scale(total, 1.0 / tokens);
}

inline ModelConfig tiny_config(GeneratorKind generator, ScoreKind relevance, std::size_t hidden = 8) {
  ModelConfig config;
  config.generator = generator;
  config.relevance = relevance;
  config.attention = ScoreKind::kGeneral;
  config.encoder_layers = 1;
  config.decoder_layers = 1;
  config.hidden_size = hidden;
  config.embedding_size = hidden;
  config.dropout = 0.0;
  return config;
}

}  // namespace wean::testing

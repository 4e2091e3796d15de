#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "wean/model.hpp"
#include "wean/vocab.hpp"

namespace wean {

/// Anything that can score the next output slot given a decoder state.
/// `start` consumes the source and the start-of-sequence value; `advance`
/// feeds the value of `slot` and returns the following state.
template <class M>
concept StepModel = requires(const M& m, const typename M::State& state, std::size_t slot,
                             std::span<const TokenId> source) {
  { m.start(source) } -> std::same_as<typename M::State>;
  { m.advance(state, slot) } -> std::same_as<typename M::State>;
  { m.log_probs(state) } -> std::convertible_to<std::span<const double>>;
  { m.word(slot) } -> std::convertible_to<TokenId>;
  { m.eos_slot() } -> std::convertible_to<std::size_t>;
};

struct DecodeResult {
  std::vector<TokenId> words;  // without the end-of-sequence token
  double log_prob = 0.0;       // sum of per-step log-probabilities
  std::size_t steps = 0;       // scored steps, including a final </s>
  bool finished = false;       // ended with </s> rather than at max_len

  double normalized() const { return steps == 0 ? 0.0 : log_prob / static_cast<double>(steps); }
};

inline std::size_t default_max_len(std::size_t source_length) { return 2 * source_length + 5; }

namespace detail {

inline std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace detail

/// Picks the most probable slot at every step (lowest slot on ties), feeding
/// its value forward, until </s> or max_len words.
template <StepModel M>
DecodeResult greedy_decode(const M& model, std::span<const TokenId> source, std::size_t max_len) {
  DecodeResult result;
  auto state = model.start(source);
  for (std::size_t t = 0; t < max_len; ++t) {
    const std::span<const double> lp = model.log_probs(state);
    const std::size_t best = detail::argmax_lowest(lp);
    result.log_prob += lp[best];
    ++result.steps;
    if (best == model.eos_slot()) {
      result.finished = true;
      break;
    }
    result.words.push_back(model.word(best));
    if (t + 1 < max_len) state = model.advance(state, best);
  }
  return result;
}

/// Beam search over summed log-probabilities. Each step keeps the `beam`
/// best extensions of the live hypotheses; extensions ending in </s> retire.
/// The result is the retired or max_len-truncated hypothesis with the best
/// log-probability per scored step.
template <StepModel M>
DecodeResult beam_decode(const M& model, std::span<const TokenId> source, std::size_t beam, std::size_t max_len) {
  if (beam == 0) throw ContractError("beam width must be at least 1");
  struct Hypothesis {
    std::vector<TokenId> words;
    double log_prob;
    typename M::State state;
  };
  struct Extension {
    double score;
    double step;
    std::size_t parent;
    std::size_t slot;
  };
  std::vector<Hypothesis> live;
  live.push_back({{}, 0.0, model.start(source)});
  std::vector<DecodeResult> done;
  std::vector<Extension> extensions;
  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    extensions.clear();
    for (std::size_t p = 0; p < live.size(); ++p) {
      const std::span<const double> lp = model.log_probs(live[p].state);
      for (std::size_t slot = 0; slot < lp.size(); ++slot) {
        extensions.push_back({live[p].log_prob + lp[slot], lp[slot], p, slot});
      }
    }
    const std::size_t keep = std::min(beam, extensions.size());
    std::partial_sort(extensions.begin(), extensions.begin() + static_cast<std::ptrdiff_t>(keep), extensions.end(),
                      [](const Extension& a, const Extension& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.step != b.step) return a.step > b.step;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.slot < b.slot;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& ext = extensions[i];
      const auto& parent = live[ext.parent];
      if (ext.slot == model.eos_slot()) {
        done.push_back({parent.words, ext.score, t + 1, true});
        continue;
      }
      auto words = parent.words;
      words.push_back(model.word(ext.slot));
      if (t + 1 == max_len) {
        done.push_back({std::move(words), ext.score, t + 1, false});
        continue;
      }
      next.push_back({std::move(words), ext.score, model.advance(parent.state, ext.slot)});
    }
    live = std::move(next);
  }
  if (done.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i) {
    if (done[i].normalized() > done[best].normalized()) best = i;
  }
  return done[best];
}

/// StepModel view of a trained Seq2SeqModel, run without gradient recording.
class Seq2SeqStepper {
 public:
  struct State {
    std::shared_ptr<const Seq2SeqModel::EncodedSource> source;
    std::vector<LstmState> lstm;
    std::vector<double> log_probs;
  };

  explicit Seq2SeqStepper(const Seq2SeqModel& model);

  State start(std::span<const TokenId> source) const;
  State advance(const State& state, std::size_t slot) const;
  std::span<const double> log_probs(const State& state) const { return state.log_probs; }
  TokenId word(std::size_t slot) const { return model_.candidates().word(slot); }
  std::size_t eos_slot() const { return model_.candidates().slot_of(kEosId); }

 private:
  State feed(std::shared_ptr<const Seq2SeqModel::EncodedSource> source, std::span<const LstmState> lstm,
             TokenId word) const;

  const Seq2SeqModel& model_;
  Tensor values_;
};

static_assert(StepModel<Seq2SeqStepper>);

}  // namespace wean

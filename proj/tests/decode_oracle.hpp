#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "wean/decode.hpp"

namespace wean::testing {

// Slots are word ids; the distribution is any function of the prefix.
struct StubModel {
  using Distribution = std::function<std::vector<double>(const std::vector<std::size_t>&)>;
  struct State {
    std::vector<std::size_t> prefix;
    std::vector<double> log_probs;
  };
  Distribution distribution;
  std::size_t eos = 0;

  State make(std::vector<std::size_t> prefix) const {
    State s{std::move(prefix), {}};
    for (double p : distribution(s.prefix)) s.log_probs.push_back(std::log(p));
    return s;
  }
  State start(std::span<const TokenId>) const { return make({}); }
  State advance(const State& state, std::size_t slot) const {
    auto prefix = state.prefix;
    prefix.push_back(slot);
    return make(std::move(prefix));
  }
  std::span<const double> log_probs(const State& state) const { return state.log_probs; }
  TokenId word(std::size_t slot) const { return slot; }
  std::size_t eos_slot() const { return eos; }
};
static_assert(StepModel<StubModel>);

// Exhaustive search over every finished or max_len-truncated sequence for
// the best log-probability per scored step.
template <StepModel M>
DecodeResult brute_force(const M& model, std::span<const TokenId> source, std::size_t max_len) {
  DecodeResult best;
  bool have = false;
  std::function<void(const typename M::State&, std::vector<TokenId>&, double, std::size_t)> walk =
      [&](const typename M::State& state, std::vector<TokenId>& words, double lp, std::size_t t) {
        const auto probs = model.log_probs(state);
        for (std::size_t slot = 0; slot < probs.size(); ++slot) {
          const double total = lp + probs[slot];
          DecodeResult candidate{words, total, t + 1, slot == model.eos_slot()};
          if (!candidate.finished) candidate.words.push_back(model.word(slot));
          if (candidate.finished || t + 1 == max_len) {
            if (!have || candidate.normalized() > best.normalized()) best = candidate;
            have = true;
            continue;
          }
          words.push_back(model.word(slot));
          walk(model.advance(state, slot), words, total, t + 1);
          words.pop_back();
        }
      };
  std::vector<TokenId> words;
  walk(model.start(source), words, 0.0, 0);
  return best;
}

}  // namespace wean::testing

#include "wean/decode.hpp"

namespace wean {

Seq2SeqStepper::Seq2SeqStepper(const Seq2SeqModel& model) : model_(model) {
  NoGradGuard no_grad;
  values_ = model_.candidate_values().detach();
}

Seq2SeqStepper::State Seq2SeqStepper::start(std::span<const TokenId> source) const {
  if (source.empty()) throw ContractError("cannot decode an empty source");
  NoGradGuard no_grad;
  const std::size_t lengths[] = {source.size()};
  auto encoded = std::make_shared<const Seq2SeqModel::EncodedSource>(
      model_.encode_batch(source, 1, source.size(), lengths, RunMode::kEval, nullptr));
  const auto initial = model_.initial_decoder_state(*encoded);
  return feed(std::move(encoded), initial, kSosId);
}

Seq2SeqStepper::State Seq2SeqStepper::advance(const State& state, std::size_t slot) const {
  return feed(state.source, state.lstm, word(slot));
}

Seq2SeqStepper::State Seq2SeqStepper::feed(std::shared_ptr<const Seq2SeqModel::EncodedSource> source,
                                           std::span<const LstmState> lstm, TokenId word) const {
  NoGradGuard no_grad;
  const TokenId ids[] = {word};
  auto step = model_.decode_step(model_.embed(ids), lstm, *source, RunMode::kEval, nullptr);
  const Tensor lp = log_softmax(model_.output_scores(step.s, step.c, values_, RunMode::kEval, nullptr));
  State next;
  next.source = std::move(source);
  next.lstm = std::move(step.state);
  next.log_probs.assign(lp.values().begin(), lp.values().end());
  return next;
}

}  // namespace wean

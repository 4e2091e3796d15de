#include "wean/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "wean/checkpoint.hpp"

namespace wean {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    first_.emplace_back(p.size(), 0.0);
    second_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto values = p.mutable_values();
    auto& m = first_[i];
    auto& v = second_[i];
    const bool has_grad = p.has_grad();
    const auto grad = has_grad ? p.mutable_grad() : std::span<double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has_grad ? grad[j] : 0.0;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.clear_grad();
}

BatchLoss batch_loss(const Seq2SeqModel& model, const Batch& batch, RunMode mode, Rng* rng) {
  const auto encoded =
      model.encode_batch(batch.source, batch.size, batch.source_width, batch.source_lengths, mode, rng);
  const Tensor values = model.candidate_values();
  const auto& candidates = model.candidates();
  auto state = model.initial_decoder_state(encoded);

  BatchLoss result;
  Tensor total;
  std::vector<TokenId> inputs(batch.size);
  std::vector<std::size_t> gold(batch.size);
  std::vector<double> weights(batch.size);
  for (std::size_t t = 0; t < batch.target_width; ++t) {
    bool any = false;
    for (std::size_t b = 0; b < batch.size; ++b) {
      const std::size_t at = b * batch.target_width + t;
      inputs[b] = batch.decoder_inputs[at];
      gold[b] = candidates.slot_of(batch.targets[at]);
      weights[b] = batch.mask[at];
      any = any || weights[b] != 0.0;
    }
    if (!any) break;
    auto step = model.decode_step(model.embed(inputs), state, encoded, mode, rng);
    const Tensor scores = model.output_scores(step.s, step.c, values, mode, rng);
    Tensor loss = cross_entropy(scores, gold, weights);
    total = t == 0 ? loss : add(total, loss);
    const std::size_t width = scores.dim(1);
    for (std::size_t b = 0; b < batch.size; ++b) {
      if (weights[b] == 0.0) continue;
      const auto row = scores.values().subspan(b * width, width);
      const auto best = static_cast<std::size_t>(std::distance(row.begin(), std::max_element(row.begin(), row.end())));
      ++result.tokens;
      result.correct += best == gold[b];
    }
    state = std::move(step.state);
  }
  result.total = std::move(total);
  return result;
}

Tensor sequence_loss(const Seq2SeqModel& model, const Batch& batch, RunMode mode, Rng* rng) {
  auto result = batch_loss(model, batch, mode, rng);
  return scale(result.total, 1.0 / static_cast<double>(result.tokens));
}

Evaluation evaluate(const Seq2SeqModel& model, const ParallelCorpus& corpus, std::size_t batch_size) {
  NoGradGuard no_grad;
  Evaluation eval;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& batch : batchify(corpus, batch_size, nullptr)) {
    const auto result = batch_loss(model, batch);
    loss += result.total.item();
    correct += result.correct;
    eval.tokens += result.tokens;
  }
  if (eval.tokens > 0) {
    eval.loss = loss / static_cast<double>(eval.tokens);
    eval.accuracy = static_cast<double>(correct) / static_cast<double>(eval.tokens);
  }
  return eval;
}

std::vector<double> TrainLog::valid_accuracies() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.valid_acc);
  return out;
}

void TrainLog::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,valid_loss,valid_acc,seconds\n";
  char line[256];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.valid_loss,
                  e.valid_acc, e.seconds);
    out << line;
  }
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log " + path.string());
  write_csv(out);
  if (!out) throw IoError("error while writing " + path.string());
}

TrainLog TrainLog::read_csv(std::istream& in) {
  TrainLog log;
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,valid_loss,valid_acc,seconds") {
    throw ParseError("training log is missing its header row", 1);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochRecord e;
    char comma[4];
    std::istringstream row(line);
    if (!(row >> e.epoch >> comma[0] >> e.train_loss >> comma[1] >> e.valid_loss >> comma[2] >> e.valid_acc >>
          comma[3] >> e.seconds)) {
      throw ParseError("malformed training log row " + std::to_string(line_no), line_no);
    }
    log.epochs.push_back(e);
  }
  return log;
}

TrainLog train(Seq2SeqModel& model, const ParallelCorpus& train_set, const ParallelCorpus& valid_set,
               const TrainConfig& config) {
  if (config.batch_size == 0) throw ContractError("batch size must be at least 1");
  if (train_set.empty()) throw ContractError("training corpus is empty");
  using Clock = std::chrono::steady_clock;
  Rng data_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0xD1B54A32D192ED03ULL);
  auto params = model.parameter_tensors();
  Adam adam(params, config.adam);
  TrainLog log;

  const auto record = [&](EpochRecord e) {
    log.epochs.push_back(e);
    if (config.on_epoch) config.on_epoch(log.epochs.back());
  };
  {
    const auto start = Clock::now();
    const auto on_train = evaluate(model, train_set, config.eval_batch_size);
    const auto on_valid = evaluate(model, valid_set, config.eval_batch_size);
    record({0, on_train.loss, on_valid.loss, on_valid.accuracy,
            std::chrono::duration<double>(Clock::now() - start).count()});
  }

  double best_valid = INFINITY;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    const auto batches = batchify(train_set, config.batch_size, &data_rng);
    for (std::size_t i = 0; i < batches.size(); ++i) {
      adam.zero_grad();
      auto result = batch_loss(model, batches[i], RunMode::kTrain, &dropout_rng);
      const double summed = result.total.item();
      if (!std::isfinite(summed)) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(i), i);
      }
      backward(scale(result.total, 1.0 / static_cast<double>(result.tokens)));
      clip_global_norm(params, config.clip_norm);
      double applied = 0.0;
      for (const auto& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) applied += g * g;
      }
      log.applied_grad_norms.push_back(std::sqrt(applied));
      adam.step();
      loss_sum += summed;
      tokens += result.tokens;
    }
    adam.zero_grad();
    const auto on_valid = evaluate(model, valid_set, config.eval_batch_size);
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (config.checkpoint_dir) {
      std::filesystem::create_directories(*config.checkpoint_dir);
      save_checkpoint(*config.checkpoint_dir / "last.ckpt", model, config.tokenize);
      if (on_valid.loss < best_valid) save_checkpoint(*config.checkpoint_dir / "best.ckpt", model, config.tokenize);
    }
    best_valid = std::min(best_valid, on_valid.loss);
    record({epoch, loss_sum / static_cast<double>(tokens), on_valid.loss, on_valid.accuracy, seconds});
  }
  return log;
}

std::optional<std::size_t> epochs_to_threshold(std::span<const double> values, double threshold) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= threshold) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> epochs_to_threshold(const TrainLog& log, double threshold) {
  const auto acc = log.valid_accuracies();
  return epochs_to_threshold(acc, threshold);
}

}  // namespace wean

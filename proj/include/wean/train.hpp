#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wean/data.hpp"
#include "wean/model.hpp"

namespace wean {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. A parameter without an
/// accumulated gradient is treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

  void step();
  void zero_grad();

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  std::span<const double> first_moment(std::size_t i) const { return first_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return second_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t batch) : std::runtime_error(what), batch_(batch) {}
  std::size_t batch() const { return batch_; }

 private:
  std::size_t batch_;
};

struct BatchLoss {
  Tensor total;  // summed token cross-entropy, [1]
  std::size_t tokens = 0;
  std::size_t correct = 0;  // teacher-forced argmax hits on real positions
};

/// Teacher-forced cross-entropy over the real target positions of a batch.
/// Gold words outside the candidate set are scored as the unknown-word slot.
BatchLoss batch_loss(const Seq2SeqModel& model, const Batch& batch, RunMode mode = RunMode::kEval,
                     Rng* rng = nullptr);

/// batch_loss averaged per target token.
Tensor sequence_loss(const Seq2SeqModel& model, const Batch& batch, RunMode mode = RunMode::kEval,
                     Rng* rng = nullptr);

struct Evaluation {
  double loss = 0.0;      // mean per-token cross-entropy
  double accuracy = 0.0;  // teacher-forced token accuracy
  std::size_t tokens = 0;
};

Evaluation evaluate(const Seq2SeqModel& model, const ParallelCorpus& corpus, std::size_t batch_size = 64);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_acc = 0.0;
  double seconds = 0.0;
};

/// One row per epoch. Row 0 evaluates the freshly initialized model (its
/// train_loss is an eval-mode pass over the training set); row e >= 1 holds
/// the token-weighted mean training loss seen during epoch e and the
/// validation scores after it.
struct TrainLog {
  std::vector<EpochRecord> epochs;
  /// Global gradient norm of every optimizer step, after clipping.
  std::vector<double> applied_grad_norms;

  std::vector<double> valid_accuracies() const;

  /// "epoch,train_loss,valid_loss,valid_acc,seconds" header then one row per
  /// epoch; reals are written with 17 significant digits.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
  static TrainLog read_csv(std::istream& in);
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  AdamConfig adam;
  std::size_t eval_batch_size = 64;
  /// When set, "last.ckpt" is written after every epoch and "best.ckpt"
  /// whenever validation loss improves.
  std::optional<std::filesystem::path> checkpoint_dir;
  TokenizeMode tokenize = TokenizeMode::kWord;
  /// Called after each row is appended, including row 0.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Shuffle, batch, forward, backward, clip, Adam step; then validate. The
/// data order depends only on `config.seed`, so runs that differ only in
/// their generator head see identical batches. Throws TrainingError on a
/// non-finite loss.
TrainLog train(Seq2SeqModel& model, const ParallelCorpus& train_set, const ParallelCorpus& valid_set,
               const TrainConfig& config);

/// First index whose value reaches `threshold`, if any.
std::optional<std::size_t> epochs_to_threshold(std::span<const double> values, double threshold);
/// Same over the validation accuracies of a log (row 0 is the untrained model).
std::optional<std::size_t> epochs_to_threshold(const TrainLog& log, double threshold);

}  // namespace wean

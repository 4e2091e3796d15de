#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wean/config.hpp"
#include "wean/data.hpp"
#include "wean/train.hpp"

namespace wean {

// Exit statuses shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitCheckpoint = 4;
inline constexpr int kExitAlignment = 5;

/// Builds vocabulary and model from the training corpus, trains, and writes
/// `last.ckpt`, `best.ckpt`, `trainlog.csv` and `vocab.txt` to output_dir.
int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

struct GenerateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::size_t> beam;  // greedy when absent
  std::optional<std::size_t> max_len;
  std::optional<TokenizeMode> tokenize;  // must match the checkpoint when given
};
/// One decoded line per input line. Input lines may be "source<TAB>target";
/// only the source is read.
int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err);

struct EvaluateOptions {
  std::filesystem::path candidates;
  std::vector<std::filesystem::path> references;
  std::vector<std::string> metrics{"bleu"};  // bleu, rouge1, rouge2, rougeL
  TokenizeMode tokenize = TokenizeMode::kWord;
  std::optional<std::filesystem::path> per_sentence_dir;
};
int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err);

/// Output-layer parameter counts at (vocab_size, hidden_size); no model is
/// built.
int cmd_params(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

struct SynthOptions {
  SyntheticTask task = SyntheticTask::kCopy;
  std::size_t size = 0;
  std::size_t vocab_size = 10;
  std::size_t max_len = 5;
  std::uint64_t seed = 1;
  std::filesystem::path output;
};
int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);

struct ComparisonRun {
  GeneratorKind generator;
  std::uint64_t seed;
  TrainLog log;
  std::optional<std::size_t> epochs_to_threshold;
};

struct Comparison {
  std::vector<ComparisonRun> runs;
  double threshold = 0.0;

  /// Median epochs-to-threshold over seeds; a run that never reaches the
  /// threshold counts as (epochs + 1).
  double median_epochs(GeneratorKind generator, std::size_t epochs) const;
};

/// Trains wean and softmax_linear for every seed in config.seeds. Both heads
/// share the vocabulary, data order and shared-parameter initialization for
/// a given seed.
Comparison run_comparison(const ExperimentConfig& config, const TextCorpus& train_text, const TextCorpus& valid_text,
                          std::ostream* progress);

/// run_comparison over the configured corpora; writes one TrainLog per run
/// to output_dir and prints epochs-to-threshold per run and the medians.
int cmd_compare(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

}  // namespace wean

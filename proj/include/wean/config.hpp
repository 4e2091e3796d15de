#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wean/model.hpp"
#include "wean/vocab.hpp"

namespace wean {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Everything one experiment needs. JSON keys (all optional):
///
///   preset            "word" (default) or "char"; applied before other keys
///   generator         "wean" | "softmax_linear"
///   score             WEAN relevance function: "dot" | "general" | "concat"
///   attention         encoder-decoder score function, same choices
///   layers            sets encoder_layers and decoder_layers
///   encoder_layers, decoder_layers, hidden_size, embedding_size
///   vocab_size        n most frequent source tokens kept
///   candidates        WEAN candidate count (default: whole vocabulary)
///   batch_size, epochs, dropout, clip_norm, beam, learning_rate
///   tokenize          "word" | "char"
///   seed              data order and initialization seed
///   seeds             list of seeds for `compare`
///   threshold         validation accuracy target for `compare`
///   max_source_len, max_target_len
///   train, valid      tab-separated parallel corpora
///   output_dir        checkpoints and training logs
struct ExperimentConfig {
  ModelConfig model;
  std::size_t vocab_size = 50000;
  std::optional<std::size_t> candidates;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double clip_norm = 5.0;
  std::size_t beam = 5;
  double learning_rate = 0.001;
  TokenizeMode tokenize = TokenizeMode::kWord;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double threshold = 0.9;
  std::size_t max_source_len = 100;
  std::size_t max_target_len = 100;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> valid_path;
  std::optional<std::filesystem::path> output_dir;

  /// "word": hidden/embedding 256, 2 layers, batch 64, dropout 0.4, clip 5.
  /// "char": hidden/embedding 512, vocabulary 4000, 2 encoder layers and
  /// 1 decoder layer, no dropout, beam 5, character tokens.
  static ExperimentConfig preset(const std::string& name);

  /// Applies `j` on top of the preset it names; unknown keys and bad values
  /// raise ConfigError naming the field.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Field-level consistency checks shared by every command.
  void validate() const;
  /// Also requires the data paths and output directory.
  void validate_for_training() const;
};

}  // namespace wean

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wean/commands.hpp"

namespace {

using nlohmann::json;

// Config file values, overridden by any flag given on the command line.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> preset, generator, score, attention, tokenize, train, valid, output_dir;
  std::optional<long long> layers, hidden_size, embedding_size, vocab_size, candidates, batch_size, epochs, beam,
      max_source_len, max_target_len;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<double> dropout, clip_norm, learning_rate, threshold;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--preset", preset, "word or char");
    app.add_option("--generator", generator, "wean or softmax_linear");
    app.add_option("--score", score, "WEAN relevance: dot, general or concat");
    app.add_option("--attention", attention, "attention score: dot, general or concat");
    app.add_option("--tokenize", tokenize, "word or char");
    app.add_option("--train", train, "training TSV");
    app.add_option("--valid", valid, "validation TSV");
    app.add_option("--output-dir", output_dir, "checkpoint and log directory");
    app.add_option("--layers", layers);
    app.add_option("--hidden-size", hidden_size);
    app.add_option("--embedding-size", embedding_size);
    app.add_option("--vocab-size", vocab_size);
    app.add_option("--candidates", candidates, "WEAN candidate count");
    app.add_option("--batch-size", batch_size);
    app.add_option("--epochs", epochs);
    app.add_option("--beam", beam);
    app.add_option("--max-source-len", max_source_len);
    app.add_option("--max-target-len", max_target_len);
    app.add_option("--seed", seed);
    app.add_option("--seeds", seeds, "seeds for compare");
    app.add_option("--dropout", dropout);
    app.add_option("--clip-norm", clip_norm);
    app.add_option("--learning-rate", learning_rate);
    app.add_option("--threshold", threshold, "validation accuracy target for compare");
  }

  wean::ExperimentConfig resolve() const {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw wean::ConfigError("config", "cannot read " + config_path);
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw wean::ConfigError("config", std::string("invalid JSON: ") + e.what());
      }
      if (!j.is_object()) throw wean::ConfigError("config", "must be a JSON object");
    }
    const auto put = [&j](const char* key, const auto& value) {
      if (value) j[key] = *value;
    };
    put("preset", preset);
    put("generator", generator);
    put("score", score);
    put("attention", attention);
    put("tokenize", tokenize);
    put("train", train);
    put("valid", valid);
    put("output_dir", output_dir);
    put("layers", layers);
    put("hidden_size", hidden_size);
    put("embedding_size", embedding_size);
    put("vocab_size", vocab_size);
    put("candidates", candidates);
    put("batch_size", batch_size);
    put("epochs", epochs);
    put("beam", beam);
    put("max_source_len", max_source_len);
    put("max_target_len", max_target_len);
    put("seed", seed);
    put("seeds", seeds);
    put("dropout", dropout);
    put("clip_norm", clip_norm);
    put("learning_rate", learning_rate);
    put("threshold", threshold);
    return wean::ExperimentConfig::from_json(j);
  }
};

int with_config(const ConfigFlags& flags, int (*command)(const wean::ExperimentConfig&, std::ostream&, std::ostream&)) {
  wean::ExperimentConfig config;
  try {
    config = flags.resolve();
  } catch (const wean::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return wean::kExitConfig;
  }
  return command(config, std::cout, std::cerr);
}

template <class Parse>
bool parse_into(const std::string& text, const char* field, Parse parse, auto& target) {
  try {
    target = parse(text);
    return true;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << field << ": " << e.what() << '\n';
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence-to-sequence training and decoding with softmax or word-embedding output heads"};
  app.require_subcommand(1);
  int status = wean::kExitOk;

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "train one model from a config");
  train_flags.attach(*train);
  train->callback([&] { status = with_config(train_flags, wean::cmd_train); });

  ConfigFlags compare_flags;
  auto* compare = app.add_subcommand("compare", "train wean and softmax_linear over several seeds");
  compare_flags.attach(*compare);
  compare->callback([&] { status = with_config(compare_flags, wean::cmd_compare); });

  ConfigFlags params_flags;
  auto* params = app.add_subcommand("params", "output-layer parameter counts");
  params_flags.attach(*params);
  params->callback([&] { status = with_config(params_flags, wean::cmd_params); });

  wean::GenerateOptions generate_options;
  std::optional<std::string> generate_tokenize;
  auto* generate = app.add_subcommand("generate", "decode every line of an input file");
  generate->add_option("--checkpoint", generate_options.checkpoint)->required();
  generate->add_option("--input", generate_options.input)->required();
  generate->add_option("--output", generate_options.output)->required();
  generate->add_option("--beam", generate_options.beam, "beam width; greedy when omitted");
  generate->add_option("--max-len", generate_options.max_len, "default 2 * source length + 5");
  generate->add_option("--tokenize", generate_tokenize, "must match the checkpoint");
  generate->callback([&] {
    if (generate_tokenize &&
        !parse_into(*generate_tokenize, "tokenize", wean::parse_tokenize_mode, generate_options.tokenize)) {
      status = wean::kExitConfig;
      return;
    }
    status = wean::cmd_generate(generate_options, std::cout, std::cerr);
  });

  wean::EvaluateOptions evaluate_options;
  std::string evaluate_tokenize = "word";
  std::string per_sentence_dir;
  auto* evaluate = app.add_subcommand("evaluate", "score candidates against references");
  evaluate->add_option("--candidates", evaluate_options.candidates)->required();
  evaluate->add_option("--references", evaluate_options.references, "one or more reference files")->required();
  evaluate->add_option("--metrics", evaluate_options.metrics, "bleu, rouge1, rouge2, rougeL");
  evaluate->add_option("--tokenize", evaluate_tokenize, "word or char");
  evaluate->add_option("--per-sentence-dir", per_sentence_dir, "write per-sentence scores here");
  evaluate->callback([&] {
    if (!parse_into(evaluate_tokenize, "tokenize", wean::parse_tokenize_mode, evaluate_options.tokenize)) {
      status = wean::kExitConfig;
      return;
    }
    if (!per_sentence_dir.empty()) evaluate_options.per_sentence_dir = per_sentence_dir;
    status = wean::cmd_evaluate(evaluate_options, std::cout, std::cerr);
  });

  wean::SynthOptions synth_options;
  std::string synth_task = "copy";
  auto* synth = app.add_subcommand("synth", "write a synthetic parallel corpus");
  synth->add_option("--task", synth_task, "copy, reverse or synonym");
  synth->add_option("--size", synth_options.size)->required();
  synth->add_option("--vocab-size", synth_options.vocab_size);
  synth->add_option("--max-len", synth_options.max_len);
  synth->add_option("--seed", synth_options.seed);
  synth->add_option("--output", synth_options.output)->required();
  synth->callback([&] {
    if (!parse_into(synth_task, "task", wean::parse_synthetic_task, synth_options.task)) {
      status = wean::kExitConfig;
      return;
    }
    status = wean::cmd_synth(synth_options, std::cout, std::cerr);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? wean::kExitOk : wean::kExitConfig;
  }
  return status;
}

#include "wean/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>

#include "wean/checkpoint.hpp"
#include "wean/decode.hpp"
#include "wean/metrics.hpp"

namespace wean {
namespace {

class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const AlignmentError& e) {
    err << "alignment error: " << e.what() << '\n';
    return kExitAlignment;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

std::string grouped(std::uint64_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

struct PreparedData {
  std::shared_ptr<const Vocabulary> vocab;
  ParallelCorpus train;
  ParallelCorpus valid;
};

PreparedData prepare_data(const ExperimentConfig& config, const TextCorpus& train_text, const TextCorpus& valid_text) {
  if (train_text.empty()) throw ConfigError("train", "training corpus is empty");
  const auto sources = source_side(train_text);
  PreparedData data;
  data.vocab = std::make_shared<const Vocabulary>(build_vocab(sources, config.vocab_size));
  data.train = index_corpus(train_text, *data.vocab, config.max_source_len, config.max_target_len);
  data.valid = index_corpus(valid_text, *data.vocab, config.max_source_len, config.max_target_len);
  return data;
}

Seq2SeqModel make_model(const ExperimentConfig& config, GeneratorKind generator,
                        const std::shared_ptr<const Vocabulary>& vocab, std::uint64_t seed) {
  ModelConfig model = config.model;
  model.generator = generator;
  auto candidates = generator == GeneratorKind::kWean && config.candidates
                        ? CandidateSet::most_frequent(*vocab, *config.candidates)
                        : CandidateSet::all(*vocab);
  return Seq2SeqModel(model, vocab, std::move(candidates), seed);
}

TrainConfig make_train_config(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig train;
  train.epochs = config.epochs;
  train.batch_size = config.batch_size;
  train.clip_norm = config.clip_norm;
  train.seed = seed;
  train.adam.learning_rate = config.learning_rate;
  train.tokenize = config.tokenize;
  return train;
}

void print_epoch(std::ostream& out, const std::string& label, const EpochRecord& e) {
  char line[256];
  std::snprintf(line, sizeof(line), "%sepoch %zu train_loss %.4f valid_loss %.4f valid_acc %.4f (%.1fs)\n",
                label.c_str(), e.epoch, e.train_loss, e.valid_loss, e.valid_acc, e.seconds);
  out << line << std::flush;
}

}  // namespace

int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.validate_for_training();
    const auto train_text = load_tsv(*config.train_path, config.tokenize);
    const auto valid_text = load_tsv(*config.valid_path, config.tokenize);
    const auto data = prepare_data(config, train_text, valid_text);
    auto model = make_model(config, config.model.generator, data.vocab, config.seed);
    std::filesystem::create_directories(*config.output_dir);
    {
      std::ofstream vocab_out(*config.output_dir / "vocab.txt", std::ios::trunc);
      if (!vocab_out) throw IoError("cannot write " + (*config.output_dir / "vocab.txt").string());
      data.vocab->dump(vocab_out);
    }
    out << "vocabulary " << data.vocab->size() << ", candidates " << model.candidates().size() << ", parameters "
        << grouped(model.parameter_count()) << ", " << data.train.size() << " training pairs\n";
    auto train_config = make_train_config(config, config.seed);
    train_config.checkpoint_dir = *config.output_dir;
    train_config.on_epoch = [&](const EpochRecord& e) { print_epoch(out, "", e); };
    const auto log = train(model, data.train, data.valid, train_config);
    log.write_csv(*config.output_dir / "trainlog.csv");
    return kExitOk;
  });
}

int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.beam && *options.beam == 0) throw ConfigError("beam", "must be at least 1");
    auto loaded = load_checkpoint(options.checkpoint);
    if (options.tokenize && *options.tokenize != loaded.tokenize) {
      throw CheckpointError("checkpoint was trained with " + to_string(loaded.tokenize) +
                            " tokens but " + to_string(*options.tokenize) + " was requested");
    }
    const auto lines = read_lines(options.input);
    const Seq2SeqStepper stepper(loaded.model);
    const auto& vocab = loaded.model.vocab();
    std::ofstream output(options.output, std::ios::binary | std::ios::trunc);
    if (!output) throw IoError("cannot write " + options.output.string());
    for (const auto& line : lines) {
      const auto source_text = line.substr(0, line.find('\t'));
      const auto ids = vocab.encode(tokenize(source_text, loaded.tokenize));
      if (ids.empty()) {
        output << '\n';
        continue;
      }
      const std::size_t max_len = options.max_len.value_or(default_max_len(ids.size()));
      const auto result =
          options.beam ? beam_decode(stepper, ids, *options.beam, max_len) : greedy_decode(stepper, ids, max_len);
      Tokens words;
      for (TokenId id : result.words) {
        if (id != kPadId && id != kSosId) words.push_back(vocab.token(id));
      }
      output << detokenize(words, loaded.tokenize) << '\n';
    }
    if (!output) throw IoError("error while writing " + options.output.string());
    out << "decoded " << lines.size() << " lines to " << options.output.string() << '\n';
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.references.empty()) throw ConfigError("references", "at least one reference file is required");
    const auto cand_lines = read_lines(options.candidates);
    std::vector<Tokens> candidates;
    for (const auto& l : cand_lines) candidates.push_back(tokenize(l, options.tokenize));
    std::vector<std::vector<Tokens>> references(candidates.size());
    for (const auto& path : options.references) {
      const auto lines = read_lines(path);
      if (lines.size() != candidates.size()) {
        throw AlignmentError(options.candidates.string() + " has " + std::to_string(candidates.size()) +
                             " lines but " + path.string() + " has " + std::to_string(lines.size()));
      }
      for (std::size_t i = 0; i < lines.size(); ++i) references[i].push_back(tokenize(lines[i], options.tokenize));
    }
    if (candidates.empty()) throw AlignmentError("no sentences to evaluate");
    std::vector<Tokens> first_refs;
    for (const auto& r : references) first_refs.push_back(r.front());
    for (const auto& name : options.metrics) {
      ScoreReport report;
      if (name == "bleu") {
        report = bleu(candidates, references);
      } else if (name == "rouge1") {
        report = rouge(candidates, first_refs, RougeVariant::kRouge1);
      } else if (name == "rouge2") {
        report = rouge(candidates, first_refs, RougeVariant::kRouge2);
      } else if (name == "rougeL") {
        report = rouge(candidates, first_refs, RougeVariant::kRougeL);
      } else {
        throw ConfigError("metrics", "unknown metric '" + name + "' (expected bleu, rouge1, rouge2 or rougeL)");
      }
      out << report.summary() << '\n';
      if (options.per_sentence_dir) {
        std::filesystem::create_directories(*options.per_sentence_dir);
        const auto path = *options.per_sentence_dir / (name + (report.per_sentence_smoothed ? ".smoothed.tsv" : ".tsv"));
        std::ofstream per(path, std::ios::trunc);
        if (!per) throw IoError("cannot write " + path.string());
        report.write_per_sentence(per);
      }
    }
    return kExitOk;
  });
}

int cmd_params(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.validate();
    const std::uint64_t v = config.vocab_size, k = config.model.hidden_size;
    const auto linear = count_output_params(GeneratorKind::kSoftmaxLinear, ScoreKind::kGeneral, v, k);
    const auto dot = count_output_params(GeneratorKind::kWean, ScoreKind::kDot, v, k);
    const auto general = count_output_params(GeneratorKind::kWean, ScoreKind::kGeneral, v, k);
    const auto concat = count_output_params(GeneratorKind::kWean, ScoreKind::kConcat, v, k);
    out << "output-layer parameters at V=" << v << " k=" << k << '\n';
    out << "softmax_linear " << grouped(linear) << '\n';
    out << "wean(concat) " << grouped(concat) << '\n';
    out << "wean(general) " << grouped(general) << '\n';
    out << "wean(dot) " << grouped(dot) << '\n';
    char ratio[64];
    std::snprintf(ratio, sizeof(ratio), "%.2f", static_cast<double>(linear) / static_cast<double>(concat));
    out << "ratio softmax_linear/wean(concat) " << ratio << '\n';
    return kExitOk;
  });
}

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.vocab_size == 0) throw ConfigError("vocab_size", "must be positive");
    if (options.max_len == 0) throw ConfigError("max_len", "must be positive");
    const auto corpus = make_synthetic(options.task, options.size, options.vocab_size, options.max_len, options.seed);
    write_tsv(options.output, corpus, TokenizeMode::kWord);
    out << "wrote " << corpus.size() << " " << to_string(options.task) << " pairs to " << options.output.string()
        << '\n';
    return kExitOk;
  });
}

double Comparison::median_epochs(GeneratorKind generator, std::size_t epochs) const {
  std::vector<double> values;
  for (const auto& run : runs) {
    if (run.generator != generator) continue;
    values.push_back(static_cast<double>(run.epochs_to_threshold.value_or(epochs + 1)));
  }
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Comparison run_comparison(const ExperimentConfig& config, const TextCorpus& train_text, const TextCorpus& valid_text,
                          std::ostream* progress) {
  const auto data = prepare_data(config, train_text, valid_text);
  Comparison comparison;
  comparison.threshold = config.threshold;
  for (const auto seed : config.seeds) {
    for (const auto generator : {GeneratorKind::kWean, GeneratorKind::kSoftmaxLinear}) {
      auto model = make_model(config, generator, data.vocab, seed);
      auto train_config = make_train_config(config, seed);
      const std::string label = to_string(generator) + " seed " + std::to_string(seed) + ": ";
      if (progress) train_config.on_epoch = [&](const EpochRecord& e) { print_epoch(*progress, label, e); };
      auto log = train(model, data.train, data.valid, train_config);
      const auto reached = epochs_to_threshold(log, config.threshold);
      comparison.runs.push_back({generator, seed, std::move(log), reached});
    }
  }
  return comparison;
}

int cmd_compare(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.validate_for_training();
    const auto train_text = load_tsv(*config.train_path, config.tokenize);
    const auto valid_text = load_tsv(*config.valid_path, config.tokenize);
    const auto comparison = run_comparison(config, train_text, valid_text, &out);
    std::filesystem::create_directories(*config.output_dir);
    for (const auto& run : comparison.runs) {
      const auto name = "trainlog_" + to_string(run.generator) + "_seed" + std::to_string(run.seed) + ".csv";
      run.log.write_csv(*config.output_dir / name);
      out << to_string(run.generator) << " seed " << run.seed << " epochs_to_threshold("
          << config.threshold << ") = "
          << (run.epochs_to_threshold ? std::to_string(*run.epochs_to_threshold) : std::string("none")) << '\n';
    }
    for (const auto generator : {GeneratorKind::kWean, GeneratorKind::kSoftmaxLinear}) {
      out << to_string(generator) << " median epochs_to_threshold " << comparison.median_epochs(generator, config.epochs)
          << '\n';
    }
    return kExitOk;
  });
}

}  // namespace wean

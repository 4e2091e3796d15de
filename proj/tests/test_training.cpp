#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <sstream>

#include "support.hpp"
#include "wean/checkpoint.hpp"
#include "wean/train.hpp"

namespace wean {
namespace {

namespace fs = std::filesystem;
using testing::numbered_vocab;
using testing::tiny_config;

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "wean_test_training" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Adam, FirstStepIsLearningRate) {
  auto theta = Tensor::zeros({1}, true);
  Adam adam({theta});
  theta.mutable_grad()[0] = 1.0;
  adam.step();
  EXPECT_NEAR(theta.at(0), -0.001, 1e-9);
}

TEST(Adam, ConstantGradientFiveSteps) {
  auto theta = Tensor::zeros({1}, true);
  Adam adam({theta});
  for (int i = 0; i < 5; ++i) {
    adam.zero_grad();
    theta.mutable_grad()[0] = 1.0;
    adam.step();
  }
  EXPECT_NEAR(theta.at(0), -0.005, 1e-6);
  EXPECT_EQ(adam.steps(), 5u);
}

TEST(Adam, ClosedFormRecurrence) {
  // Independent evaluation of the bias-corrected update for g_t = t.
  auto theta = Tensor::zeros({1}, true);
  Adam adam({theta});
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 7; ++t) {
    adam.zero_grad();
    theta.mutable_grad()[0] = t;
    adam.step();
    m = 0.9 * m + 0.1 * t;
    v = 0.999 * v + 0.001 * t * t;
    x -= 0.001 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(theta.at(0), x, 1e-15);
}

TEST(Adam, ZeroOrMissingGradientLeavesParameters) {
  auto a = Tensor::from({2}, {0.5, -0.25}, true);
  auto b = Tensor::from({1}, {3.0}, true);
  Adam adam({a, b});
  a.mutable_grad();
  adam.step();
  EXPECT_EQ(a.at(0), 0.5);
  EXPECT_EQ(a.at(1), -0.25);
  EXPECT_EQ(b.at(0), 3.0);
}

TEST(EpochsToThreshold, Examples) {
  const std::vector<double> acc{0.2, 0.5, 0.95};
  EXPECT_EQ(epochs_to_threshold(acc, 0.9), 2u);
  EXPECT_EQ(epochs_to_threshold(acc, 0.99), std::nullopt);
  EXPECT_EQ(epochs_to_threshold(acc, 0.0), 0u);
}

ParallelCorpus small_corpus(std::size_t vocab_words, std::size_t pairs, std::uint64_t seed) {
  const auto text = make_synthetic(SyntheticTask::kReverse, pairs, vocab_words, 4, seed);
  ParallelCorpus out;
  for (const auto& p : text) {
    SequencePair s;
    for (const auto& w : p.source) s.source.push_back(kNumSpecials + std::stoul(w.substr(1)));
    for (const auto& w : p.target) s.target.push_back(kNumSpecials + std::stoul(w.substr(1)));
    out.push_back(std::move(s));
  }
  return out;
}

TEST(Loss, UniformPredictionsGiveLogCandidates) {
  const auto vocab = numbered_vocab(8);
  for (auto generator : {GeneratorKind::kSoftmaxLinear, GeneratorKind::kWean}) {
    Seq2SeqModel model(tiny_config(generator, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab), 1);
    for (auto& p : model.parameter_tensors()) {
      for (auto& v : p.mutable_values()) v = 0.0;
    }
    const auto corpus = small_corpus(8, 5, 2);
    const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
    EXPECT_NEAR(sequence_loss(model, make_batch(corpus, idx)).item(), std::log(12.0), 1e-12);
  }
}

TEST(Loss, PaddingDoesNotChangeLoss) {
  const auto vocab = numbered_vocab(8);
  const Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kConcat), vocab, CandidateSet::all(*vocab),
                           3);
  const ParallelCorpus corpus{{{4, 5}, {5, 4}}, {{6, 7, 8, 9, 10}, {10, 9, 8, 7, 6, 5}}};
  const std::vector<std::size_t> both{0, 1}, first{0}, second{1};
  const double joint = batch_loss(model, make_batch(corpus, both)).total.item();
  const double alone = batch_loss(model, make_batch(corpus, first)).total.item() +
                       batch_loss(model, make_batch(corpus, second)).total.item();
  EXPECT_NEAR(joint, alone, 1e-12);
}

TEST(Loss, OutOfCandidateGoldScoresAsUnknown) {
  const auto vocab = numbered_vocab(8);
  const Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kDot), vocab,
                           CandidateSet::most_frequent(*vocab, 2), 3);
  const TokenId outside = 9;
  ASSERT_FALSE(model.candidates().contains(outside));
  const ParallelCorpus corpus{{{4}, {outside}}};
  const std::vector<std::size_t> idx{0};

  // Step by step: the gold word is scored at the unknown slot but is still
  // what the decoder reads next.
  const std::vector<TokenId> source{4};
  const std::vector<std::size_t> lengths{1};
  const auto encoded = model.encode_batch(source, 1, 1, lengths, RunMode::kEval, nullptr);
  const TokenId sos[] = {kSosId};
  const TokenId next[] = {outside};
  const auto first = model.decode_step(model.embed(sos), model.initial_decoder_state(encoded), encoded,
                                       RunMode::kEval, nullptr);
  const auto second = model.decode_step(model.embed(next), first.state, encoded, RunMode::kEval, nullptr);
  const auto p1 = model.word_distribution(first.s, first.c);
  const auto p2 = model.word_distribution(second.s, second.c);
  const double expected =
      -(std::log(p1.at(0, model.candidates().slot_of(kUnkId))) + std::log(p2.at(0, model.candidates().slot_of(kEosId)))) /
      2.0;
  EXPECT_NEAR(sequence_loss(model, make_batch(corpus, idx)).item(), expected, 1e-14);
}

TEST(Loss, GradientOnTwoPairBatch) {
  const auto vocab = numbered_vocab(8);
  Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab), 4);
  const auto corpus = small_corpus(8, 2, 5);
  const std::vector<std::size_t> idx{0, 1};
  const auto batch = make_batch(corpus, idx);
  Rng rng(6);
  const auto params = model.parameter_tensors();
  const auto coords = testing::sample_coordinates(params, 3, rng);
  const auto r = testing::check_gradients([&] { return sequence_loss(model, batch); }, params, coords);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 4;
  config.seed = seed;
  config.adam.learning_rate = 0.01;
  return config;
}

TEST(Train, RepeatedPairLossDecreases) {
  const auto vocab = numbered_vocab(8);
  Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab), 7);
  const ParallelCorpus corpus(16, SequencePair{{4, 5, 6}, {6, 5, 4}});
  auto config = quick_config(1);
  config.epochs = 1;
  config.batch_size = 2;
  const auto log = train(model, corpus, corpus, config);
  ASSERT_EQ(log.epochs.size(), 2u);
  EXPECT_LT(log.epochs[1].train_loss, log.epochs[0].train_loss);
  EXPECT_LT(log.epochs[1].valid_loss, log.epochs[0].valid_loss);
}

TEST(Train, DeterministicAndFinite) {
  const auto vocab = numbered_vocab(10);
  const auto corpus = small_corpus(10, 24, 8);
  std::vector<TrainLog> logs;
  std::vector<std::vector<double>> finals;
  for (int run = 0; run < 2; ++run) {
    auto config = tiny_config(GeneratorKind::kWean, ScoreKind::kConcat);
    config.dropout = 0.3;
    Seq2SeqModel model(config, vocab, CandidateSet::all(*vocab), 9);
    logs.push_back(train(model, corpus, corpus, quick_config(11)));
    std::vector<double> values;
    for (const auto& p : model.parameter_tensors()) {
      for (double v : p.values()) {
        EXPECT_TRUE(std::isfinite(v));
        values.push_back(v);
      }
    }
    finals.push_back(values);
  }
  ASSERT_EQ(logs[0].epochs.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(logs[0].epochs[e].train_loss, logs[1].epochs[e].train_loss);
    EXPECT_EQ(logs[0].epochs[e].valid_loss, logs[1].epochs[e].valid_loss);
    EXPECT_EQ(logs[0].epochs[e].valid_acc, logs[1].epochs[e].valid_acc);
  }
  EXPECT_EQ(logs[0].applied_grad_norms, logs[1].applied_grad_norms);
  EXPECT_EQ(finals[0], finals[1]);
  for (double n : logs[0].applied_grad_norms) EXPECT_LE(n, 5.0 + 1e-12);
}

TEST(Train, NonFiniteLossRaises) {
  const auto vocab = numbered_vocab(8);
  Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab), 1);
  model.embedding.mutable_values()[5 * 8] = std::nan("");
  const ParallelCorpus corpus{{{5}, {5}}};
  EXPECT_THROW(train(model, corpus, corpus, quick_config(1)), TrainingError);
}

TEST(TrainLog, CsvRoundTripIsExact) {
  TrainLog log;
  log.epochs.push_back({0, 2.302585092994046, 2.2, 0.1, 0.5});
  log.epochs.push_back({1, 1.0 / 3.0, 0.1 + 0.2, 0.987654321987654321, 12.25});
  std::stringstream buffer;
  log.write_csv(buffer);
  EXPECT_EQ(buffer.str().substr(0, 45), "epoch,train_loss,valid_loss,valid_acc,seconds");
  const auto back = TrainLog::read_csv(buffer);
  ASSERT_EQ(back.epochs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.epochs[i].epoch, log.epochs[i].epoch);
    EXPECT_EQ(back.epochs[i].train_loss, log.epochs[i].train_loss);
    EXPECT_EQ(back.epochs[i].valid_loss, log.epochs[i].valid_loss);
    EXPECT_EQ(back.epochs[i].valid_acc, log.epochs[i].valid_acc);
  }
  std::stringstream bad("nope\n");
  EXPECT_THROW(TrainLog::read_csv(bad), ParseError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch_dir("roundtrip");
  const auto vocab = numbered_vocab(9);
  for (auto generator : {GeneratorKind::kSoftmaxLinear, GeneratorKind::kWean}) {
    const auto candidates =
        generator == GeneratorKind::kWean ? CandidateSet::most_frequent(*vocab, 5) : CandidateSet::all(*vocab);
    const Seq2SeqModel model(tiny_config(generator, ScoreKind::kConcat), vocab, candidates, 12);
    save_checkpoint(dir / "m.ckpt", model, TokenizeMode::kChar);
    const auto loaded = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(loaded.tokenize, TokenizeMode::kChar);
    EXPECT_EQ(loaded.model.vocab(), *vocab);
    EXPECT_EQ(loaded.model.candidates().ids(), candidates.ids());
    EXPECT_EQ(loaded.model.config().generator, generator);
    const auto a = model.parameters(), b = loaded.model.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      ASSERT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
      EXPECT_EQ(0, std::memcmp(a[i].tensor.values().data(), b[i].tensor.values().data(),
                               a[i].tensor.size() * sizeof(double)));
    }
  }
}

TEST(Checkpoint, RejectsDamage) {
  const auto dir = scratch_dir("damage");
  const auto vocab = numbered_vocab(5);
  const Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kDot), vocab, CandidateSet::all(*vocab), 1);
  save_checkpoint(dir / "m.ckpt", model, TokenizeMode::kWord);
  const auto size = fs::file_size(dir / "m.ckpt");
  fs::resize_file(dir / "m.ckpt", size - 8);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt"), CheckpointError);
  {
    std::ofstream out(dir / "junk.ckpt", std::ios::binary);
    out << "NOTACKPTxxxxxxxxxxxxxxxx";
  }
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), CheckpointError);
}

TEST(Train, WritesCheckpoints) {
  const auto dir = scratch_dir("ckpts");
  const auto vocab = numbered_vocab(8);
  Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab), 2);
  const auto corpus = small_corpus(8, 8, 3);
  auto config = quick_config(4);
  config.checkpoint_dir = dir;
  const auto log = train(model, corpus, corpus, config);
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  const auto last = load_checkpoint(dir / "last.ckpt");
  EXPECT_EQ(evaluate(last.model, corpus).loss, log.epochs.back().valid_loss);
}

}  // namespace
}  // namespace wean

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "wean/model.hpp"
#include "wean/train.hpp"

namespace wean {
namespace {

using testing::numbered_vocab;
using testing::random_tensor;
using testing::tiny_config;

TEST(CountOutputParams, TableValues) {
  EXPECT_EQ(count_output_params(GeneratorKind::kSoftmaxLinear, ScoreKind::kConcat, 50000, 256), 12800000u);
  EXPECT_EQ(count_output_params(GeneratorKind::kWean, ScoreKind::kConcat, 50000, 256), 131328u);
  EXPECT_EQ(count_output_params(GeneratorKind::kSoftmaxLinear, ScoreKind::kConcat, 4000, 512), 2048000u);
  EXPECT_EQ(count_output_params(GeneratorKind::kWean, ScoreKind::kConcat, 4000, 512), 524800u);
  EXPECT_EQ(count_output_params(GeneratorKind::kWean, ScoreKind::kGeneral, 4000, 512), 262144u);
  EXPECT_EQ(count_output_params(GeneratorKind::kWean, ScoreKind::kDot, 4000, 512), 0u);
}

TEST(CountOutputParams, DependenceOnVocabulary) {
  for (auto kind : {ScoreKind::kDot, ScoreKind::kGeneral, ScoreKind::kConcat}) {
    EXPECT_EQ(count_output_params(GeneratorKind::kWean, kind, 10, 64),
              count_output_params(GeneratorKind::kWean, kind, 1000000, 64));
  }
  const auto linear = [](std::uint64_t v) {
    return count_output_params(GeneratorKind::kSoftmaxLinear, ScoreKind::kDot, v, 64);
  };
  EXPECT_EQ(linear(300) - linear(200), linear(200) - linear(100));
}

TEST(CountOutputParams, MatchesInstantiatedModel) {
  const auto vocab = numbered_vocab(20);
  for (auto relevance : {ScoreKind::kDot, ScoreKind::kGeneral, ScoreKind::kConcat}) {
    for (auto generator : {GeneratorKind::kSoftmaxLinear, GeneratorKind::kWean}) {
      const Seq2SeqModel model(tiny_config(generator, relevance, 6), vocab, CandidateSet::all(*vocab), 1);
      std::size_t head = 0;
      for (const auto& p : model.parameters()) {
        if (p.name.rfind("head.", 0) == 0 && p.name != "head.query_projection") head += p.tensor.size();
      }
      EXPECT_EQ(head, count_output_params(generator, relevance, vocab->size(), 6));
    }
  }
}

TEST(CandidateSet, SpecialsFirstAndUnknownFallback) {
  const auto vocab = numbered_vocab(10);
  const auto set = CandidateSet::most_frequent(*vocab, 3);
  ASSERT_EQ(set.size(), 7u);
  for (TokenId id = 0; id < kNumSpecials; ++id) EXPECT_EQ(set.word(id), id);
  EXPECT_EQ(set.word(4), vocab->id("t0"));
  EXPECT_TRUE(set.contains(vocab->id("t2")));
  EXPECT_FALSE(set.contains(vocab->id("t3")));
  EXPECT_EQ(set.slot_of(vocab->id("t9")), kUnkId);
  EXPECT_FALSE(set.is_identity());
  EXPECT_TRUE(CandidateSet::all(*vocab).is_identity());
  EXPECT_THROW(CandidateSet::from_ids({1, 0, 2, 3}, 14), ContractError);
  EXPECT_THROW(CandidateSet::from_ids({0, 1, 2, 3, 5, 5}, 14), ContractError);
}

TEST(Model, SoftmaxHeadNeedsFullVocabulary) {
  const auto vocab = numbered_vocab(10);
  EXPECT_THROW(Seq2SeqModel(tiny_config(GeneratorKind::kSoftmaxLinear, ScoreKind::kDot), vocab,
                            CandidateSet::most_frequent(*vocab, 3), 1),
               ContractError);
}

TEST(Model, ConfigValidation) {
  auto config = tiny_config(GeneratorKind::kWean, ScoreKind::kDot);
  config.embedding_size = 5;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config = tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral);
  config.embedding_size = 5;
  EXPECT_NO_THROW(config.validate());
  config.dropout = 1.0;
  EXPECT_THROW(config.validate(), std::invalid_argument);
}

TEST(Tying, OneStorageForAllReaders) {
  const auto vocab = numbered_vocab(8);
  const Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab),
                           1);
  EXPECT_TRUE(model.candidate_values().same_storage(model.embedding));
  std::size_t tables = 0;
  for (const auto& p : model.parameters()) {
    if (p.tensor.same_storage(model.embedding)) ++tables;
    EXPECT_FALSE(p.tensor.shape() == model.embedding.shape() && !p.tensor.same_storage(model.embedding)) << p.name;
  }
  EXPECT_EQ(tables, 1u);
  const TokenId ids[] = {5};
  const auto row = model.embed(ids);
  EXPECT_TRUE(row.inputs().at(0).same_storage(model.embedding));
}

TEST(Tying, ThreeSourceGradientDecomposition) {
  const auto vocab = numbered_vocab(8);
  ParallelCorpus corpus{{{4, 5, 6}, {6, 5}}, {{7, 4}, {4, 7, 9}}};
  const std::vector<std::size_t> idx{0, 1};
  const auto batch = make_batch(corpus, idx);
  for (auto relevance : {ScoreKind::kDot, ScoreKind::kGeneral, ScoreKind::kConcat}) {
    Seq2SeqModel model(tiny_config(GeneratorKind::kWean, relevance), vocab, CandidateSet::all(*vocab), 3);
    const Tensor e = model.embedding;
    const Tensor frozen = e.detach();

    auto full = testing::tied_paths_loss(model, batch, e, e, e);
    EXPECT_NEAR(full.item(), sequence_loss(model, batch).item(), 1e-14);
    backward(full);
    const auto g_full = e.grad();
    e.node()->grad.clear();

    std::vector<double> g_sum(g_full.size(), 0.0);
    const std::vector<std::vector<Tensor>> paths{{e, frozen, frozen}, {frozen, e, frozen}, {frozen, frozen, e}};
    for (const auto& p : paths) {
      backward(testing::tied_paths_loss(model, batch, p[0], p[1], p[2]));
      const auto g = e.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g_sum[i] += g[i];
      e.node()->grad.clear();
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < g_sum.size(); ++i) worst = std::max(worst, std::abs(g_sum[i] - g_full[i]));
    EXPECT_LT(worst, 1e-10) << to_string(relevance);
  }
}

TEST(Encoder, ShapeZeroParamsAndCausality) {
  const auto vocab = numbered_vocab(8);
  Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab), 4);
  const std::vector<TokenId> seq{4, 9, 5, 6};
  const auto full = model.encode(seq);
  EXPECT_EQ(full.shape(), (Shape{4, 8}));
  const auto prefix = model.encode(std::span(seq).first(2));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(prefix.at(i), full.at(i));
  EXPECT_EQ(model.encode(seq).values()[7], full.values()[7]);

  for (auto& p : model.parameter_tensors()) {
    if (p.same_storage(model.embedding)) continue;
    for (auto& v : p.mutable_values()) v = 0.0;
  }
  const auto zeroed = model.encode(seq);
  for (double v : zeroed.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, PaddingDoesNotLeak) {
  const auto vocab = numbered_vocab(8);
  const Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kGeneral), vocab, CandidateSet::all(*vocab),
                           4);
  // Same batch shape with different tokens in the padded tail: bit-identical.
  const std::vector<TokenId> padded{4, 5, 0, 0, 6, 7, 8, 9};
  const std::vector<TokenId> junk{4, 5, 11, 7, 6, 7, 8, 9};
  const std::vector<std::size_t> lengths{2, 4};
  const auto a = model.encode_batch(padded, 2, 4, lengths, RunMode::kEval, nullptr);
  const auto b = model.encode_batch(junk, 2, 4, lengths, RunMode::kEval, nullptr);
  // Alone in its own batch the row goes through different matrix kernels, so
  // only rounding may differ.
  const std::vector<TokenId> alone{4, 5};
  const std::vector<std::size_t> one{2};
  const auto c = model.encode_batch(alone, 1, 2, one, RunMode::kEval, nullptr);
  const auto same = [](const Tensor& x, const Tensor& y) {
    return std::equal(x.values().begin(), x.values().end(), y.values().begin(), y.values().end());
  };
  for (std::size_t layer = 0; layer < a.final_state.size(); ++layer) {
    EXPECT_TRUE(same(a.final_state[layer].h, b.final_state[layer].h));
    EXPECT_TRUE(same(a.final_state[layer].c, b.final_state[layer].c));
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_NEAR(a.final_state[layer].h.at(0, j), c.final_state[layer].h.at(0, j), 1e-15);
      EXPECT_NEAR(a.final_state[layer].c.at(0, j), c.final_state[layer].c.at(0, j), 1e-15);
    }
  }
  for (std::size_t i = 0; i < 2 * 8; ++i) EXPECT_EQ(a.states.at(i), b.states.at(i));
}

TEST(Head, QueryRangeAndZero) {
  GeneratorHead head(GeneratorKind::kWean, ScoreKind::kDot, 4, 4, 10);
  Rng rng(5);
  head.initialize_shared(1.0, rng);
  head.initialize_own(1.0, rng);
  const auto zero = head.make_query(Tensor::zeros({2, 4}), Tensor::zeros({2, 4}));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const auto q = head.make_query(random_tensor({3, 4}, rng, 5.0, false), random_tensor({3, 4}, rng, 5.0, false));
  for (double v : q.values()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
  GeneratorHead linear(GeneratorKind::kSoftmaxLinear, ScoreKind::kDot, 4, 4, 10);
  EXPECT_THROW(linear.make_query(Tensor::zeros({1, 4}), Tensor::zeros({1, 4})), ContractError);
}

TEST(Head, QueryGradient) {
  GeneratorHead head(GeneratorKind::kWean, ScoreKind::kDot, 3, 3, 10);
  Rng rng(6);
  head.initialize_shared(0.5, rng);
  const auto s = random_tensor({2, 3}, rng);
  const auto c = random_tensor({2, 3}, rng);
  const std::vector<Tensor> params{head.query_projection};
  const auto r = testing::check_gradients([&] { return sum(head.make_query(s, c)); }, params,
                                          testing::all_coordinates(params), 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Head, RelevanceExamples) {
  const auto e = Tensor::from({2, 2}, {1, 0, 0, 1});
  const auto q = Tensor::from({1, 2}, {1, 0});
  GeneratorHead dot(GeneratorKind::kWean, ScoreKind::kDot, 2, 2, 2);
  const auto s = dot.relevance(q, e);
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_EQ(s.at(1), 0.0);

  Rng rng(7);
  GeneratorHead general(GeneratorKind::kWean, ScoreKind::kGeneral, 3, 3, 5);
  general.relevance_weight = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, true);
  const auto qq = random_tensor({2, 3}, rng, 1.0, false);
  const auto ee = random_tensor({5, 3}, rng, 1.0, false);
  const auto a = general.relevance(qq, ee);
  const auto b = dot.relevance(Tensor::zeros({1, 2}), e);  // shape sanity on dot
  EXPECT_EQ(b.shape(), (Shape{1, 2}));
  GeneratorHead dot3(GeneratorKind::kWean, ScoreKind::kDot, 3, 3, 5);
  const auto ref = dot3.relevance(qq, ee);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.at(i), ref.at(i), 1e-15);

  GeneratorHead concat(GeneratorKind::kWean, ScoreKind::kConcat, 3, 3, 5);
  concat.initialize_own(1.0, rng);
  for (auto& v : concat.energy.mutable_values()) v = 0.0;
  const auto flat = concat.relevance(qq, ee);
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);

  EXPECT_THROW(dot3.relevance(qq, Tensor::zeros({0, 3})), ContractError);
  EXPECT_THROW(dot3.relevance(qq, Tensor::zeros({4, 2})), DimensionError);
}

TEST(Generator, DistributionProperties) {
  const auto vocab = numbered_vocab(6);
  for (auto relevance : {ScoreKind::kDot, ScoreKind::kGeneral, ScoreKind::kConcat}) {
    Seq2SeqModel model(tiny_config(GeneratorKind::kWean, relevance, 4), vocab, CandidateSet::all(*vocab), 8);
    Rng rng(9);
    const auto p = model.word_distribution(random_tensor({1, 4}, rng, 1.0, false),
                                           random_tensor({1, 4}, rng, 1.0, false));
    double total = 0;
    for (double v : p.values()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);

    for (auto& v : model.embedding.mutable_values()) v = 0.25;
    const auto uniform = model.word_distribution(random_tensor({1, 4}, rng, 1.0, false),
                                                 random_tensor({1, 4}, rng, 1.0, false));
    for (double v : uniform.values()) EXPECT_NEAR(v, 1.0 / 10.0, 1e-15);
  }
}

TEST(Generator, OrthonormalDotPicksMatchingCandidate) {
  GeneratorHead head(GeneratorKind::kWean, ScoreKind::kDot, 4, 4, 4);
  const auto e = Tensor::from({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  const auto p = softmax(head.relevance(Tensor::from({1, 4}, {0, 0, 1, 0}), e));
  for (std::size_t i = 0; i < 4; ++i) {
    if (i != 2) EXPECT_LT(p.at(i), p.at(2));
  }
}

TEST(Generator, SelectWord) {
  const auto vocab = numbered_vocab(4);
  const Seq2SeqModel model(tiny_config(GeneratorKind::kWean, ScoreKind::kDot, 4), vocab,
                           CandidateSet::from_ids({0, 1, 2, 3, 6, 5}, vocab->size()), 2);
  const std::vector<double> onehot{0, 0, 0, 0, 1, 0};
  const auto [word, row] = model.select_word(onehot);
  EXPECT_EQ(word, 6u);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(row.at(j), model.embedding.at(6, j));

  const std::vector<double> tie{0.1, 0.1, 0.1, 0.1, 0.3, 0.3};
  EXPECT_EQ(model.select_word(tie).first, 6u);
  const std::vector<double> wrong{1.0};
  EXPECT_THROW(model.select_word(wrong), DimensionError);
}

TEST(Model, SameSeedSameParameters) {
  const auto vocab = numbered_vocab(6);
  const auto config = tiny_config(GeneratorKind::kWean, ScoreKind::kConcat);
  const Seq2SeqModel a(config, vocab, CandidateSet::all(*vocab), 42);
  const Seq2SeqModel b(config, vocab, CandidateSet::all(*vocab), 42);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()));
  }
}

TEST(Model, HeadsShareTheirCommonInitialization) {
  const auto vocab = numbered_vocab(6);
  const Seq2SeqModel wean(tiny_config(GeneratorKind::kWean, ScoreKind::kConcat), vocab, CandidateSet::all(*vocab), 5);
  const Seq2SeqModel linear(tiny_config(GeneratorKind::kSoftmaxLinear, ScoreKind::kConcat), vocab,
                            CandidateSet::all(*vocab), 5);
  std::size_t compared = 0;
  for (const auto& p : wean.parameters()) {
    for (const auto& q : linear.parameters()) {
      if (p.name != q.name) continue;
      EXPECT_TRUE(std::equal(p.tensor.values().begin(), p.tensor.values().end(), q.tensor.values().begin()))
          << p.name;
      ++compared;
    }
  }
  EXPECT_GE(compared, 8u);
}

}  // namespace
}  // namespace wean

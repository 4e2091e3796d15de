#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wean/data.hpp"
#include "wean/tensor.hpp"
#include "wean/vocab.hpp"

namespace wean {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "wean_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

TEST(Tokenize, WordAndChar) {
  EXPECT_EQ(tokenize("a b  c", TokenizeMode::kWord), (Tokens{"a", "b", "c"}));
  EXPECT_EQ(tokenize("  ", TokenizeMode::kWord), Tokens{});
  EXPECT_EQ(tokenize("ab c", TokenizeMode::kChar), (Tokens{"a", "b", "c"}));
  EXPECT_EQ(tokenize("北京", TokenizeMode::kChar), (Tokens{"北", "京"}));
  const Tokens chars{"北", "京"};
  EXPECT_EQ(detokenize(chars, TokenizeMode::kChar), "北京");
  const Tokens words{"a", "b"};
  EXPECT_EQ(detokenize(words, TokenizeMode::kWord), "a b");
}

TEST(Vocab, FrequencyOrderAndTies) {
  const std::vector<Tokens> corpus{{"a", "a", "b", "c"}, {"a", "b"}};
  const auto v = build_vocab(corpus, 2);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.frequency(4), 3u);
  EXPECT_EQ(v.token(5), "b");
  EXPECT_EQ(v.id("c"), kUnkId);

  const std::vector<Tokens> tie{{"x", "c", "b", "b", "c"}};
  const auto t = build_vocab(tie, 1);
  EXPECT_EQ(t.token(4), "c");

  EXPECT_EQ(build_vocab(corpus, 100).size(), 7u);
  EXPECT_EQ(build_vocab(corpus, 100), build_vocab(corpus, 100));
  EXPECT_THROW(build_vocab(corpus, 0), ContractError);
  EXPECT_THROW(build_vocab(std::vector<Tokens>{}, 3), ContractError);
}

TEST(Vocab, SpecialsAndRoundTrip) {
  const std::vector<Tokens> corpus{{"x", "y", "x"}};
  const auto v = build_vocab(corpus, 10);
  EXPECT_EQ(v.token(kPadId), "<pad>");
  EXPECT_EQ(v.token(kSosId), "<s>");
  EXPECT_EQ(v.token(kEosId), "</s>");
  EXPECT_EQ(v.token(kUnkId), "<unk>");
  const Tokens words{"y", "zzz", "x"};
  EXPECT_EQ(v.decode(v.encode(words)), (Tokens{"y", "<unk>", "x"}));
  std::stringstream buffer;
  v.dump(buffer);
  EXPECT_EQ(Vocabulary::load(buffer), v);
  EXPECT_THROW(v.token(99), IndexError);
}

TEST(LoadTsv, Format) {
  const auto path = scratch("one.tsv");
  write_file(path, "x y\tx z\n\n");
  const auto corpus = load_tsv(path, TokenizeMode::kWord);
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].source, (Tokens{"x", "y"}));
  EXPECT_EQ(corpus[0].target, (Tokens{"x", "z"}));
}

TEST(LoadTsv, EmptyFile) {
  const auto path = scratch("empty.tsv");
  write_file(path, "");
  EXPECT_TRUE(load_tsv(path, TokenizeMode::kWord).empty());
}

TEST(LoadTsv, ErrorsNameTheLine) {
  const auto path = scratch("bad.tsv");
  write_file(path, "a\tb\nc\td\te\n");
  try {
    load_tsv(path, TokenizeMode::kWord);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  write_file(path, "a\t \n");
  EXPECT_THROW(load_tsv(path, TokenizeMode::kWord), ParseError);
  EXPECT_THROW(load_tsv(scratch("missing.tsv"), TokenizeMode::kWord), IoError);
}

TEST(LoadTsv, WriteRoundTrip) {
  const auto corpus = make_synthetic(SyntheticTask::kReverse, 20, 15, 5, 3);
  const auto path = scratch("round.tsv");
  write_tsv(path, corpus, TokenizeMode::kWord);
  const auto back = load_tsv(path, TokenizeMode::kWord);
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].source, corpus[i].source);
    EXPECT_EQ(back[i].target, corpus[i].target);
  }
}

TEST(Synthetic, Tasks) {
  for (const auto& p : make_synthetic(SyntheticTask::kCopy, 50, 20, 6, 1)) EXPECT_EQ(p.source, p.target);
  for (const auto& p : make_synthetic(SyntheticTask::kReverse, 50, 20, 6, 1)) {
    ASSERT_EQ(p.source.size(), p.target.size());
    EXPECT_TRUE(std::equal(p.source.begin(), p.source.end(), p.target.rbegin()));
  }
  const auto table = make_synonym_table(20);
  for (const auto& p : make_synthetic(SyntheticTask::kSynonym, 50, 20, 6, 1)) {
    ASSERT_EQ(p.source.size(), p.target.size());
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      const auto s = std::stoul(p.source[i].substr(1));
      const auto t = std::stoul(p.target[i].substr(1));
      EXPECT_EQ(table.class_of[s], table.class_of[t]);
      EXPECT_NE(s, t);
    }
  }
}

TEST(Synthetic, LengthsAndDeterminism) {
  const auto a = make_synthetic(SyntheticTask::kCopy, 200, 30, 4, 9);
  const auto b = make_synthetic(SyntheticTask::kCopy, 200, 30, 4, 9);
  std::vector<bool> seen(5, false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].source, b[i].source);
    ASSERT_GE(a[i].source.size(), 1u);
    ASSERT_LE(a[i].source.size(), 4u);
    seen[a[i].source.size()] = true;
  }
  EXPECT_TRUE(seen[1] && seen[4]);
  const auto other = make_synthetic(SyntheticTask::kCopy, 200, 30, 4, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || other[i].source != a[i].source;
  EXPECT_TRUE(differs);
  EXPECT_TRUE(make_synthetic(SyntheticTask::kCopy, 0, 30, 4, 9).empty());
}

TEST(Synthetic, SynonymTablePartition) {
  const auto table = make_synonym_table(11);
  ASSERT_EQ(table.class_of.size(), 11u);
  std::vector<std::size_t> sizes(*std::max_element(table.class_of.begin(), table.class_of.end()) + 1, 0);
  for (auto c : table.class_of) ++sizes[c];
  for (std::size_t c = 0; c + 1 < sizes.size(); ++c) EXPECT_EQ(sizes[c], kSynonymClassSize);
  EXPECT_EQ(sizes.back(), kSynonymClassSize + 11 % kSynonymClassSize);
  EXPECT_EQ(make_synonym_table(11).substitute, table.substitute);
}

TEST(Batch, PaddingArithmetic) {
  const ParallelCorpus corpus{{{4, 5}, {4, 5}}, {{4, 5, 6, 7}, {7, 6, 5, 4}}};
  const std::vector<std::size_t> idx{0, 1};
  const auto batch = make_batch(corpus, idx);
  EXPECT_EQ(batch.source_width, 4u);
  EXPECT_EQ(batch.target_width, 5u);
  double row0 = 0, row1 = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    row0 += batch.mask[t];
    row1 += batch.mask[5 + t];
  }
  EXPECT_EQ(row0, 3.0);
  EXPECT_EQ(row1, 5.0);
  EXPECT_EQ(batch.target_tokens(), 8u);
  EXPECT_EQ(batch.decoder_inputs[0], kSosId);
  EXPECT_EQ(batch.targets[2], kEosId);
  EXPECT_EQ(batch.source[2], kPadId);
  EXPECT_EQ(batch.source_lengths, (std::vector<std::size_t>{2, 4}));
}

TEST(Batch, BatchifyCoversAndIsSeeded) {
  const auto text = make_synthetic(SyntheticTask::kCopy, 10, 20, 3, 1);
  const auto vocab = build_vocab(source_side(text), 100);
  const auto corpus = index_corpus(text, vocab);
  EXPECT_EQ(batchify(corpus, 64, nullptr).size(), 1u);
  Rng r1(5), r2(5);
  const auto a = batchify(corpus, 3, &r1);
  const auto b = batchify(corpus, 3, &r2);
  ASSERT_EQ(a.size(), 4u);
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pair_indices, b[i].pair_indices);
    all.insert(all.end(), a[i].pair_indices.begin(), a[i].pair_indices.end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

TEST(IndexCorpus, TruncatesAndMapsUnknown) {
  TextCorpus text{{{"a", "b", "c"}, {"a", "zz"}}};
  const auto vocab = build_vocab(source_side(text), 10);
  const auto corpus = index_corpus(text, vocab, 2, 1);
  EXPECT_EQ(corpus[0].source.size(), 2u);
  EXPECT_EQ(corpus[0].target, (std::vector<TokenId>{vocab.id("a")}));
  const auto full = index_corpus(text, vocab);
  EXPECT_EQ(full[0].target[1], kUnkId);
}

}  // namespace
}  // namespace wean

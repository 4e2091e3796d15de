#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wean/rng.hpp"
#include "wean/vocab.hpp"

namespace wean {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TextPair {
  Tokens source;
  Tokens target;
};
using TextCorpus = std::vector<TextPair>;

struct SequencePair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};
using ParallelCorpus = std::vector<SequencePair>;

inline constexpr std::size_t kDefaultMaxSourceLength = 100;
inline constexpr std::size_t kDefaultMaxTargetLength = 100;

/// Reads "source<TAB>target" lines. Blank lines are skipped; a line without
/// exactly one tab, or with an empty side, is a ParseError carrying its line
/// number. An empty file yields an empty corpus and a warning on stderr.
TextCorpus load_tsv(const std::filesystem::path& path, TokenizeMode mode);
void write_tsv(const std::filesystem::path& path, const TextCorpus& corpus, TokenizeMode mode);

std::vector<Tokens> source_side(const TextCorpus& corpus);

/// Maps tokens to ids (unknowns become <unk>) and truncates long sequences.
ParallelCorpus index_corpus(const TextCorpus& corpus, const Vocabulary& vocab,
                            std::size_t max_source = kDefaultMaxSourceLength,
                            std::size_t max_target = kDefaultMaxTargetLength);

enum class SyntheticTask { kCopy, kReverse, kSynonym };
std::string to_string(SyntheticTask task);
SyntheticTask parse_synthetic_task(const std::string& name);

inline constexpr std::size_t kSynonymClassSize = 3;

/// Partition of the synthetic vocabulary "w0".."w{V-1}" into synonym classes
/// of kSynonymClassSize words (the last class absorbs any remainder). Every
/// word has one fixed substitute drawn from the other members of its class.
/// The table depends only on the vocabulary size, so corpora generated with
/// different seeds share it.
struct SynonymTable {
  std::vector<std::size_t> class_of;
  std::vector<std::size_t> substitute;
};
SynonymTable make_synonym_table(std::size_t vocab_size);

std::string synthetic_word(std::size_t index);

/// Pairs with source lengths uniform in [1, max_len] over `vocab_size`
/// synthetic words. Reproducible bit-exactly from the arguments.
TextCorpus make_synthetic(SyntheticTask task, std::size_t size, std::size_t vocab_size, std::size_t max_len,
                          std::uint64_t seed);

/// Padded, batch-major view of some pairs. Decoder inputs are "<s> y...";
/// targets are "y... </s>"; mask is 1 exactly on real target positions.
struct Batch {
  std::size_t size = 0;
  std::size_t source_width = 0;
  std::size_t target_width = 0;
  std::vector<TokenId> source;  // size x source_width
  std::vector<std::size_t> source_lengths;
  std::vector<TokenId> decoder_inputs;  // size x target_width
  std::vector<TokenId> targets;         // size x target_width
  std::vector<double> mask;             // size x target_width
  std::vector<std::size_t> pair_indices;

  std::size_t target_tokens() const;
};

Batch make_batch(const ParallelCorpus& corpus, std::span<const std::size_t> indices);

/// Splits the corpus into batches of at most `batch_size` pairs, shuffling
/// the pair order with `rng` when one is given.
std::vector<Batch> batchify(const ParallelCorpus& corpus, std::size_t batch_size, Rng* rng);

}  // namespace wean

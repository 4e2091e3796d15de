#include "wean/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include "wean/tensor.hpp"

namespace wean {

TextCorpus load_tsv(const std::filesystem::path& path, TokenizeMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file " + path.string());
  TextCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected exactly one tab", line_no);
    }
    TextPair pair{tokenize(line.substr(0, tab), mode), tokenize(line.substr(tab + 1), mode)};
    if (pair.source.empty() || pair.target.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty source or target", line_no);
    }
    corpus.push_back(std::move(pair));
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  if (corpus.empty()) std::cerr << "warning: corpus " << path.string() << " is empty\n";
  return corpus;
}

void write_tsv(const std::filesystem::path& path, const TextCorpus& corpus, TokenizeMode mode) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& pair : corpus) {
    out << detokenize(pair.source, mode) << '\t' << detokenize(pair.target, mode) << '\n';
  }
  if (!out) throw IoError("error while writing " + path.string());
}

std::vector<Tokens> source_side(const TextCorpus& corpus) {
  std::vector<Tokens> out;
  out.reserve(corpus.size());
  for (const auto& pair : corpus) out.push_back(pair.source);
  return out;
}

ParallelCorpus index_corpus(const TextCorpus& corpus, const Vocabulary& vocab, std::size_t max_source,
                            std::size_t max_target) {
  ParallelCorpus out;
  out.reserve(corpus.size());
  for (const auto& pair : corpus) {
    SequencePair ids{vocab.encode(pair.source), vocab.encode(pair.target)};
    if (ids.source.size() > max_source) ids.source.resize(max_source);
    if (ids.target.size() > max_target) ids.target.resize(max_target);
    out.push_back(std::move(ids));
  }
  return out;
}

std::string to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::kCopy:
      return "copy";
    case SyntheticTask::kReverse:
      return "reverse";
    case SyntheticTask::kSynonym:
      return "synonym";
  }
  return "?";
}

SyntheticTask parse_synthetic_task(const std::string& name) {
  if (name == "copy") return SyntheticTask::kCopy;
  if (name == "reverse") return SyntheticTask::kReverse;
  if (name == "synonym") return SyntheticTask::kSynonym;
  throw std::invalid_argument("unknown synthetic task '" + name + "' (expected copy, reverse or synonym)");
}

SynonymTable make_synonym_table(std::size_t vocab_size) {
  SynonymTable table;
  table.class_of.assign(vocab_size, 0);
  table.substitute.assign(vocab_size, 0);
  std::vector<std::size_t> order(vocab_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(0x5EEDC1A55ULL ^ vocab_size);
  rng.shuffle(order);
  const std::size_t classes = std::max<std::size_t>(1, vocab_size / kSynonymClassSize);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const std::size_t c = std::min(i / kSynonymClassSize, classes - 1);
    members[c].push_back(order[i]);
    table.class_of[order[i]] = c;
  }
  for (const auto& group : members) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group.size() == 1) {
        table.substitute[group[i]] = group[i];
        continue;
      }
      const std::size_t pick = rng.index(group.size() - 1);
      table.substitute[group[i]] = group[pick < i ? pick : pick + 1];
    }
  }
  return table;
}

std::string synthetic_word(std::size_t index) { return "w" + std::to_string(index); }

TextCorpus make_synthetic(SyntheticTask task, std::size_t size, std::size_t vocab_size, std::size_t max_len,
                          std::uint64_t seed) {
  if (vocab_size == 0 || max_len == 0) throw ContractError("synthetic corpus needs vocab_size, max_len >= 1");
  const SynonymTable synonyms = task == SyntheticTask::kSynonym ? make_synonym_table(vocab_size) : SynonymTable{};
  Rng rng(seed);
  TextCorpus corpus;
  corpus.reserve(size);
  for (std::size_t n = 0; n < size; ++n) {
    const std::size_t length = 1 + rng.index(max_len);
    std::vector<std::size_t> words(length);
    for (auto& w : words) w = rng.index(vocab_size);
    std::vector<std::size_t> target = words;
    if (task == SyntheticTask::kReverse) std::reverse(target.begin(), target.end());
    if (task == SyntheticTask::kSynonym) {
      for (auto& w : target) w = synonyms.substitute[w];
    }
    TextPair pair;
    for (auto w : words) pair.source.push_back(synthetic_word(w));
    for (auto w : target) pair.target.push_back(synthetic_word(w));
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (double m : mask) n += m != 0.0;
  return n;
}

Batch make_batch(const ParallelCorpus& corpus, std::span<const std::size_t> indices) {
  Batch batch;
  batch.size = indices.size();
  for (auto i : indices) {
    const auto& pair = corpus.at(i);
    if (pair.source.empty()) throw ContractError("pair " + std::to_string(i) + " has an empty source");
    batch.source_width = std::max(batch.source_width, pair.source.size());
    batch.target_width = std::max(batch.target_width, pair.target.size() + 1);
  }
  batch.source.assign(batch.size * batch.source_width, kPadId);
  batch.decoder_inputs.assign(batch.size * batch.target_width, kPadId);
  batch.targets.assign(batch.size * batch.target_width, kPadId);
  batch.mask.assign(batch.size * batch.target_width, 0.0);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto& pair = corpus[indices[b]];
    std::copy(pair.source.begin(), pair.source.end(), batch.source.begin() + b * batch.source_width);
    batch.source_lengths.push_back(pair.source.size());
    const std::size_t row = b * batch.target_width;
    batch.decoder_inputs[row] = kSosId;
    for (std::size_t t = 0; t < pair.target.size(); ++t) {
      batch.decoder_inputs[row + t + 1] = pair.target[t];
      batch.targets[row + t] = pair.target[t];
    }
    batch.targets[row + pair.target.size()] = kEosId;
    std::fill_n(batch.mask.begin() + row, pair.target.size() + 1, 1.0);
  }
  batch.pair_indices.assign(indices.begin(), indices.end());
  return batch;
}

std::vector<Batch> batchify(const ParallelCorpus& corpus, std::size_t batch_size, Rng* rng) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  if (rng != nullptr) rng->shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.push_back(make_batch(corpus, std::span(order).subspan(start, end - start)));
  }
  return batches;
}

}  // namespace wean

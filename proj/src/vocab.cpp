#include "wean/vocab.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "wean/tensor.hpp"

namespace wean {
namespace {

const char* const kSpecialTokens[kNumSpecials] = {"<pad>", "<s>", "</s>", "<unk>"};

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Byte length of the UTF-8 sequence introduced by `lead`; stray bytes count as one.
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

std::string to_string(TokenizeMode mode) { return mode == TokenizeMode::kWord ? "word" : "char"; }

TokenizeMode parse_tokenize_mode(const std::string& name) {
  if (name == "word") return TokenizeMode::kWord;
  if (name == "char") return TokenizeMode::kChar;
  throw std::invalid_argument("unknown tokenization mode '" + name + "' (expected word or char)");
}

Tokens tokenize(const std::string& text, TokenizeMode mode) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (mode == TokenizeMode::kChar) {
      const std::size_t len = std::min(utf8_length(c), text.size() - i);
      out.push_back(text.substr(i, len));
      i += len;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens, TokenizeMode mode) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && mode == TokenizeMode::kWord) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* token : kSpecialTokens) append(token, 0);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::vector<std::size_t> frequencies) {
  if (tokens.size() < kNumSpecials) throw std::invalid_argument("vocabulary is missing the special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw std::invalid_argument("vocabulary id " + std::to_string(i) + " must be " + kSpecialTokens[i] +
                                  ", found '" + tokens[i] + "'");
    }
  }
  if (!frequencies.empty() && frequencies.size() != tokens.size()) {
    throw std::invalid_argument("vocabulary frequencies do not match tokens");
  }
  Vocabulary vocab;
  for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw std::invalid_argument("duplicate vocabulary token '" + tokens[i] + "'");
    vocab.append(tokens[i], frequencies.empty() ? 0 : frequencies[i]);
  }
  return vocab;
}

void Vocabulary::append(const std::string& token, std::size_t frequency) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
  frequencies_.push_back(frequency);
}

TokenId Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const TokenId> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(token(id));
  return out;
}

void Vocabulary::dump(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

Vocabulary build_vocab(std::span<const Tokens> source_texts, std::size_t n) {
  if (n == 0) throw ContractError("build_vocab needs n >= 1");
  if (source_texts.empty()) throw ContractError("build_vocab on an empty corpus");
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> order;
  std::vector<std::size_t> counts;
  for (const auto& sentence : source_texts) {
    for (const auto& token : sentence) {
      auto [it, inserted] = slot.emplace(token, order.size());
      if (inserted) {
        order.push_back(token);
        counts.push_back(0);
      }
      ++counts[it->second];
    }
  }
  std::vector<std::size_t> rank(order.size());
  std::iota(rank.begin(), rank.end(), 0);
  // Stable sort keeps first-occurrence order among equal counts.
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  Vocabulary vocab;
  for (std::size_t i = 0; i < std::min(n, rank.size()); ++i) {
    const auto& token = order[rank[i]];
    if (vocab.contains(token)) continue;  // a literal "<unk>" in the text
    vocab.append(token, counts[rank[i]]);
  }
  return vocab;
}

}  // namespace wean

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace wean {

using TokenId = std::size_t;
using Tokens = std::vector<std::string>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kSosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kNumSpecials = 4;

enum class TokenizeMode { kWord, kChar };

std::string to_string(TokenizeMode mode);
TokenizeMode parse_tokenize_mode(const std::string& name);

/// word: split on whitespace. char: one token per non-whitespace UTF-8
/// scalar value.
Tokens tokenize(const std::string& text, TokenizeMode mode);
std::string detokenize(std::span<const std::string> tokens, TokenizeMode mode);

/// Bidirectional token <-> id map. Ids 0-3 are <pad>, <s>, </s>, <unk>;
/// the remaining tokens follow in descending frequency with ties broken by
/// first occurrence.
class Vocabulary {
 public:
  Vocabulary();

  /// Rebuilds a vocabulary from tokens already in id order (specials first).
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::vector<std::size_t> frequencies = {});

  std::size_t size() const { return tokens_.size(); }
  /// Id of `token`, or kUnkId when unknown.
  TokenId id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(TokenId id) const;
  std::size_t frequency(TokenId id) const { return frequencies_.at(id); }
  static bool is_special(TokenId id) { return id < kNumSpecials; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::size_t>& frequencies() const { return frequencies_; }

  /// One token per line in id order.
  void dump(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  friend Vocabulary build_vocab(std::span<const Tokens> source_texts, std::size_t n);
  void append(const std::string& token, std::size_t frequency);

  std::vector<std::string> tokens_;
  std::vector<std::size_t> frequencies_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Specials plus the `n` most frequent source-side tokens.
Vocabulary build_vocab(std::span<const Tokens> source_texts, std::size_t n);

}  // namespace wean

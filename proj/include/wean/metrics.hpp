#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wean/vocab.hpp"

namespace wean {

struct ScoreReport {
  std::string metric;
  double corpus = 0.0;                // in [0, 1]
  std::vector<double> per_sentence;   // one value per candidate
  bool per_sentence_smoothed = false;

  /// "METRIC corpus=<value x 100, 2 decimals>"
  std::string summary() const;
  /// "index<TAB>value" lines, value x 100 with 4 decimals.
  void write_per_sentence(std::ostream& out) const;
};

/// Corpus BLEU: modified n-gram precision clipped by the maximum count in any
/// reference, geometric mean over orders 1..max_ngram, brevity penalty
/// against the closest reference length (shorter wins ties). Orders for
/// which the candidates contain no n-grams at all are left out of the mean;
/// any remaining order with zero matches gives 0. Per-sentence values use
/// add-one smoothing for orders above 1 and are flagged as smoothed.
ScoreReport bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references,
                 std::size_t max_ngram = 4);

enum class RougeVariant { kRouge1, kRouge2, kRougeL };
std::string to_string(RougeVariant variant);

/// Mean per-sentence ROUGE F1 with one reference per candidate. ROUGE-N
/// counts clipped n-gram overlap; ROUGE-L uses the longest common
/// subsequence. When neither side has any n-gram of order N, the sentence
/// falls back to order N-1 (and an empty pair scores 1).
ScoreReport rouge(std::span<const Tokens> candidates, std::span<const Tokens> references, RougeVariant variant);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace wean

#include "wean/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_map>

#include "wean/tensor.hpp"

namespace wean {
namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t ngram_total(std::size_t length, std::size_t n) { return length >= n ? length - n + 1 : 0; }

double f1(double overlap, double candidate_total, double reference_total) {
  if (overlap == 0.0) return 0.0;
  const double p = overlap / candidate_total;
  const double r = overlap / reference_total;
  return 2.0 * p * r / (p + r);
}

void check_sizes(std::size_t candidates, std::size_t references, const char* metric) {
  if (candidates == 0) throw ContractError(std::string(metric) + ": no candidate sentences");
  if (candidates != references) {
    throw ContractError(std::string(metric) + ": " + std::to_string(candidates) + " candidates but " +
                        std::to_string(references) + " reference sets");
  }
}

double rouge_n(std::span<const std::string> cand, std::span<const std::string> ref, std::size_t n) {
  if (n == 0) return 1.0;
  const std::size_t tc = ngram_total(cand.size(), n), tr = ngram_total(ref.size(), n);
  if (tc == 0 && tr == 0) return rouge_n(cand, ref, n - 1);
  if (tc == 0 || tr == 0) return 0.0;
  const auto cc = count_ngrams(cand, n);
  const auto rc = count_ngrams(ref, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cc) {
    if (const auto it = rc.find(gram); it != rc.end()) overlap += std::min(count, it->second);
  }
  return f1(static_cast<double>(overlap), static_cast<double>(tc), static_cast<double>(tr));
}

std::string percent(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value * 100.0);
  return buf;
}

}  // namespace

std::string ScoreReport::summary() const { return metric + " corpus=" + percent(corpus, 2); }

void ScoreReport::write_per_sentence(std::ostream& out) const {
  for (std::size_t i = 0; i < per_sentence.size(); ++i) out << i << '\t' << percent(per_sentence[i], 4) << '\n';
}

ScoreReport bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references,
                 std::size_t max_ngram) {
  check_sizes(candidates.size(), references.size(), "BLEU");
  if (max_ngram == 0) throw ContractError("BLEU needs max_ngram >= 1");
  ScoreReport report;
  report.metric = "BLEU";
  report.per_sentence_smoothed = true;
  std::vector<std::size_t> matched(max_ngram + 1, 0), total(max_ngram + 1, 0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw ContractError("BLEU: sentence " + std::to_string(i) + " has no reference");
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto gap = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (gap(r.size()) < gap(closest) || (gap(r.size()) == gap(closest) && r.size() < closest)) closest = r.size();
    }
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(closest);

    double log_sentence = 0.0;
    bool sentence_zero = cand.empty();
    for (std::size_t n = 1; n <= max_ngram; ++n) {
      const auto cc = count_ngrams(cand, n);
      NgramCounts clip;
      for (const auto& r : refs) {
        for (const auto& [gram, count] : count_ngrams(r, n)) clip[gram] = std::max(clip[gram], count);
      }
      std::size_t m = 0;
      for (const auto& [gram, count] : cc) {
        if (const auto it = clip.find(gram); it != clip.end()) m += std::min(count, it->second);
      }
      const std::size_t t = ngram_total(cand.size(), n);
      matched[n] += m;
      total[n] += t;
      if (n == 1) {
        if (m == 0) sentence_zero = true;
        else log_sentence += std::log(static_cast<double>(m) / static_cast<double>(t));
      } else {
        log_sentence += std::log((static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0));
      }
    }
    double sentence = 0.0;
    if (!sentence_zero) {
      const double c = static_cast<double>(cand.size()), r = static_cast<double>(closest);
      const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
      sentence = bp * std::exp(log_sentence / static_cast<double>(max_ngram));
    }
    report.per_sentence.push_back(sentence);
  }

  if (cand_len == 0.0) return report;
  double log_mean = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= max_ngram; ++n) {
    if (total[n] == 0) continue;
    if (matched[n] == 0) return report;
    log_mean += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    ++orders;
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  report.corpus = bp * std::exp(log_mean / static_cast<double>(orders));
  return report;
}

std::string to_string(RougeVariant variant) {
  switch (variant) {
    case RougeVariant::kRouge1:
      return "ROUGE-1";
    case RougeVariant::kRouge2:
      return "ROUGE-2";
    case RougeVariant::kRougeL:
      return "ROUGE-L";
  }
  return "ROUGE";
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

ScoreReport rouge(std::span<const Tokens> candidates, std::span<const Tokens> references, RougeVariant variant) {
  check_sizes(candidates.size(), references.size(), "ROUGE");
  ScoreReport report;
  report.metric = to_string(variant);
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& ref = references[i];
    double score = 0.0;
    switch (variant) {
      case RougeVariant::kRouge1:
        score = rouge_n(cand, ref, 1);
        break;
      case RougeVariant::kRouge2:
        score = rouge_n(cand, ref, 2);
        break;
      case RougeVariant::kRougeL:
        if (cand.empty() && ref.empty()) {
          score = 1.0;
        } else if (!cand.empty() && !ref.empty()) {
          score = f1(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(cand.size()),
                     static_cast<double>(ref.size()));
        }
        break;
    }
    report.per_sentence.push_back(score);
    sum += score;
  }
  report.corpus = sum / static_cast<double>(candidates.size());
  return report;
}

}  // namespace wean

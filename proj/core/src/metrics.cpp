#include "ssacl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ssacl/errors.hpp"
#include "ssacl/tokenizer.hpp"

namespace ssacl {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const std::vector<std::string>& words, int n) {
  std::map<Ngram, int> counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    counts[Ngram(words.begin() + i, words.begin() + i + n)]++;
  }
  return counts;
}

}  // namespace

double bleu4(const std::vector<std::string>& candidates,
             const std::vector<std::string>& references) {
  if (candidates.empty() || candidates.size() != references.size()) {
    throw ValidationError("bleu4 needs equal-size nonempty candidate/reference lists");
  }
  double cand_len = 0, ref_len = 0;
  double log_sum = 0;
  for (int n = 1; n <= 4; ++n) {
    long matches = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto cw = Tokenizer::split_words(candidates[i]);
      auto rw = Tokenizer::split_words(references[i]);
      if (n == 1) {
        cand_len += static_cast<double>(cw.size());
        ref_len += static_cast<double>(rw.size());
      }
      auto cc = ngram_counts(cw, n);
      auto rc = ngram_counts(rw, n);
      for (const auto& [gram, count] : cc) {
        total += count;
        auto it = rc.find(gram);
        if (it != rc.end()) matches += std::min(count, it->second);
      }
    }
    if (total == 0) return 0.0;
    const double p = std::max(static_cast<double>(matches), 1e-9) / total;
    log_sum += 0.25 * std::log(p);
  }
  const double bp = cand_len >= ref_len || cand_len == 0
                        ? 1.0
                        : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum);
}

namespace {
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}
}  // namespace

double rouge_l(const std::vector<std::string>& candidates,
               const std::vector<std::string>& references) {
  if (candidates.empty() || candidates.size() != references.size()) {
    throw ValidationError("rouge_l needs equal-size nonempty candidate/reference lists");
  }
  constexpr double beta = 1.2;
  double sum = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto cw = Tokenizer::split_words(candidates[i]);
    auto rw = Tokenizer::split_words(references[i]);
    if (cw.empty() || rw.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(cw, rw));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(cw.size());
    const double r = lcs / static_cast<double>(rw.size());
    sum += (1 + beta * beta) * p * r / (r + beta * beta * p);
  }
  return sum / static_cast<double>(candidates.size());
}

CeScores ce_scores(const WorldSpec& spec, const std::vector<std::string>& pred_reports,
                   const std::vector<std::string>& ref_reports) {
  if (pred_reports.size() != ref_reports.size()) {
    throw ValidationError("ce_scores needs aligned prediction/reference lists");
  }
  const auto& order = spec.graph->pathology_order();
  const auto N = pred_reports.size();

  // Presence per (sample, pathology); anatomy assignments are not scored
  // (pathology-level efficacy, matching the report-labeler protocol).
  auto presence = [&](const std::string& report) {
    std::set<std::string> set;
    for (const auto& [p, leaf] : extract_entities(spec, report)) set.insert(p);
    return set;
  };
  std::vector<std::set<std::string>> pred_sets, ref_sets;
  pred_sets.reserve(N);
  ref_sets.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    pred_sets.push_back(presence(pred_reports[i]));
    ref_sets.push_back(presence(ref_reports[i]));
  }

  double p_sum = 0, r_sum = 0, f_sum = 0;
  int counted = 0;
  for (const auto& pathology : order) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const bool in_pred = pred_sets[i].count(pathology) > 0;
      const bool in_ref = ref_sets[i].count(pathology) > 0;
      tp += in_pred && in_ref;
      fp += in_pred && !in_ref;
      fn += !in_pred && in_ref;
    }
    if (tp + fp + fn == 0) continue;  // no signal for this pathology
    const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    p_sum += p;
    r_sum += r;
    f_sum += f;
    ++counted;
  }
  if (counted == 0) return {1.0, 1.0, 1.0};  // both corpora report nothing
  return {p_sum / counted, r_sum / counted, f_sum / counted};
}

json MetricReport::to_json() const {
  return json{{"bleu4", bleu4},       {"rouge_l", rouge_l},
              {"ce_precision", ce_precision}, {"ce_recall", ce_recall},
              {"ce_f1", ce_f1},       {"cnr_mean", cnr_mean},
              {"miou", miou}};
}

}  // namespace ssacl

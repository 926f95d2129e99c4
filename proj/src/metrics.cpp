#include "lcmlai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lcmlai/diagnostics.hpp"

namespace lcmlai::metrics {

double gain(int grade, Gain g) {
  if (grade <= 0) return 0.0;
  return g == Gain::kExponential ? std::exp2(static_cast<double>(grade)) - 1.0 : static_cast<double>(grade);
}

double dcg_at(const std::vector<int>& ranked, int k, Gain g) {
  double dcg = 0.0;
  const std::size_t n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < n; ++i) dcg += gain(ranked[i], g) / std::log2(static_cast<double>(i) + 2.0);
  return dcg;
}

double ndcg_at(const std::vector<int>& ranked, int k, Gain g) {
  std::vector<int> ideal = ranked;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double best = dcg_at(ideal, k, g);
  return best > 0.0 ? dcg_at(ranked, k, g) / best : 0.0;
}

double precision_at(const std::vector<int>& ranked, int k, int min_grade) {
  if (k <= 0) return 0.0;
  const std::size_t n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  const auto hits = std::count_if(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n),
                                  [&](int r) { return r >= min_grade; });
  return static_cast<double>(hits) / static_cast<double>(k);
}

std::optional<double> average_precision(const std::vector<int>& ranked, int min_grade) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i] >= min_grade) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

RankingReport ranking_report(const std::vector<std::vector<int>>& ranked_lists, int min_grade, Gain g,
                             const std::vector<int>& cutoffs) {
  RankingReport r;
  r.queries = ranked_lists.size();
  for (int k : cutoffs) {
    r.ndcg[k] = 0.0;
    r.precision[k] = 0.0;
  }
  if (ranked_lists.empty()) return r;
  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (const auto& list : ranked_lists) {
    for (int k : cutoffs) {
      r.ndcg[k] += ndcg_at(list, k, g);
      r.precision[k] += precision_at(list, k, min_grade);
    }
    if (auto ap = average_precision(list, min_grade)) {
      ap_sum += *ap;
      ++ap_count;
    } else {
      ++r.excluded_from_map;
    }
  }
  const auto n = static_cast<double>(ranked_lists.size());
  for (int k : cutoffs) {
    r.ndcg[k] /= n;
    r.precision[k] /= n;
  }
  r.map = ap_count > 0 ? ap_sum / static_cast<double>(ap_count) : 0.0;
  diagnostics().queries_without_relevant += r.excluded_from_map;
  return r;
}

MatchingReport matching_report(const std::vector<int>& gold, const std::vector<int>& predicted, int classes) {
  if (gold.size() != predicted.size()) throw DimensionError("gold and predicted label counts differ");
  if (classes < 1) throw ValidationError("need at least one class");
  MatchingReport r;
  const auto z = static_cast<std::size_t>(classes);
  r.confusion.assign(z, std::vector<std::size_t>(z, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw ValidationError("label outside the class range");
    }
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
    if (gold[i] == predicted[i]) ++correct;
  }
  r.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  for (std::size_t c = 0; c < z; ++c) {
    std::size_t predicted_c = 0;
    std::size_t gold_c = 0;
    for (std::size_t o = 0; o < z; ++o) {
      predicted_c += r.confusion[o][c];
      gold_c += r.confusion[c][o];
    }
    const auto tp = static_cast<double>(r.confusion[c][c]);
    double p = 0.0;
    double rec = 0.0;
    if (predicted_c > 0) p = tp / static_cast<double>(predicted_c);
    else ++r.undefined;
    if (gold_c > 0) rec = tp / static_cast<double>(gold_c);
    else ++r.undefined;
    r.precision.push_back(p);
    r.recall.push_back(rec);
    r.f1.push_back(p + rec > 0.0 ? 2.0 * p * rec / (p + rec) : 0.0);
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  r.macro_precision = mean(r.precision);
  r.macro_recall = mean(r.recall);
  r.macro_f1 = mean(r.f1);
  diagnostics().undefined_class_metrics += r.undefined;
  return r;
}

}  // namespace lcmlai::metrics

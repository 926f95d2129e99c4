#pragma once

// Ranking metrics over graded relevance lists and macro-averaged
// classification metrics. A ranking is given as the relevance grades of the
// candidates in ranked order.

#include <map>
#include <optional>
#include <vector>

#include "lcmlai/config.hpp"

namespace lcmlai::metrics {

inline const std::vector<int> kCutoffs{5, 10, 20, 30};

double gain(int grade, Gain g);

/// DCG over the first k entries with a log2(rank + 1) discount.
double dcg_at(const std::vector<int>& ranked, int k, Gain g = Gain::kExponential);

/// DCG normalised by the DCG of the same grades sorted descending. A list
/// with no positive grade scores 0.
double ndcg_at(const std::vector<int>& ranked, int k, Gain g = Gain::kExponential);

/// Fraction of the first k positions holding a grade >= min_grade; the
/// denominator is always k.
double precision_at(const std::vector<int>& ranked, int k, int min_grade);

/// Mean of precision at each relevant position; nullopt when nothing is
/// relevant.
std::optional<double> average_precision(const std::vector<int>& ranked, int min_grade);

struct RankingReport {
  std::map<int, double> ndcg;
  std::map<int, double> precision;
  double map = 0.0;
  std::size_t queries = 0;
  /// Queries left out of MAP because none of their candidates is relevant.
  std::size_t excluded_from_map = 0;
};

/// Means over queries; every query counts for NDCG and P@k.
RankingReport ranking_report(const std::vector<std::vector<int>>& ranked_lists, int min_grade,
                             Gain g = Gain::kExponential, const std::vector<int>& cutoffs = kCutoffs);

struct MatchingReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  ///< per class
  std::vector<double> recall;
  std::vector<double> f1;
  /// confusion[gold][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  /// Per-class precision or recall values that were 0/0 and set to 0.
  std::size_t undefined = 0;
};

MatchingReport matching_report(const std::vector<int>& gold, const std::vector<int>& predicted, int classes);

}  // namespace lcmlai::metrics

#pragma once

#include <atomic>
#include <cstdint>

namespace lcmlai {

/// Process-wide counters for degenerate inputs that are handled rather than
/// rejected. Tests reset them before asserting on a count.
struct Diagnostics {
  std::atomic<std::uint64_t> zero_norm_cosine{0};
  std::atomic<std::uint64_t> empty_article_prediction{0};
  std::atomic<std::uint64_t> missing_rationale_labels{0};
  std::atomic<std::uint64_t> empty_alignment{0};
  std::atomic<std::uint64_t> queries_without_relevant{0};
  std::atomic<std::uint64_t> undefined_class_metrics{0};
  std::atomic<std::uint64_t> dropped_article_citations{0};
  std::atomic<std::uint64_t> dropped_pair_references{0};

  void reset() {
    zero_norm_cosine = 0;
    empty_article_prediction = 0;
    missing_rationale_labels = 0;
    empty_alignment = 0;
    queries_without_relevant = 0;
    undefined_class_metrics = 0;
    dropped_article_citations = 0;
    dropped_pair_references = 0;
  }
};

inline Diagnostics& diagnostics() {
  static Diagnostics d;
  return d;
}

}  // namespace lcmlai

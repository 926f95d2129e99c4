#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lcmlai/data.hpp"

namespace lcmlai {

/// Inverted index scored with Okapi BM25,
///   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)),
///   w(t, d) = idf(t) * tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl)),
/// summed over the distinct query terms. Terms are the project tokens with
/// ASCII letters lower-cased.
class Bm25Index {
 public:
  explicit Bm25Index(double k1 = 1.2, double b = 0.75);

  /// Builds an index over every case, one document per case (sentences
  /// joined by newlines).
  static Bm25Index from_corpus(const Corpus& corpus, double k1 = 1.2, double b = 0.75);

  void add(std::string id, std::string_view text);
  std::size_t size() const { return ids_.size(); }

  double score(std::string_view query, const std::string& id) const;

  /// Top-k documents that share at least one term with the query, by
  /// descending score then ascending id. Ids in `exclude` are skipped.
  std::vector<std::pair<std::string, double>> search(std::string_view query, std::size_t k,
                                                     const std::vector<std::string>& exclude = {}) const;

  static std::vector<std::string> terms(std::string_view text);

 private:
  double idf(std::size_t df) const;
  double avgdl() const;

  double k1_;
  double b_;
  std::vector<std::string> ids_;
  std::vector<std::size_t> lengths_;
  std::size_t total_length_ = 0;
  /// term -> (doc index, term frequency)
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> postings_;
  std::unordered_map<std::string, std::size_t> doc_index_;
};

/// Joined text of a case as indexed and queried.
std::string case_text(const Case& c);

/// Ranked candidate ids for a query text.
std::vector<std::string> bm25_retrieve(std::string_view query_text, const Corpus& corpus, std::size_t k,
                                       double k1 = 1.2, double b = 0.75);

}  // namespace lcmlai

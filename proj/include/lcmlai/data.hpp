#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lcmlai/types.hpp"

namespace lcmlai {

struct Case {
  std::string id;
  std::vector<std::string> sentences;
  std::set<std::string> cited_article_ids;
  /// Optional per-sentence rationale classes in {0..3}; empty when unlabelled.
  std::vector<int> rationales;

  bool operator==(const Case&) const = default;
};

struct LawArticle {
  std::string id;
  std::string text;
  int support_count = 0;

  bool operator==(const LawArticle&) const = default;
};

struct CasePair {
  std::string query_id;
  std::string candidate_id;
  int label = 0;
  /// Optional aligned sentence index pairs (query sentence, candidate sentence).
  std::vector<std::pair<int, int>> alignment;

  bool operator==(const CasePair&) const = default;
};

struct GradedCandidate {
  std::string id;
  int relevance = 0;

  bool operator==(const GradedCandidate&) const = default;
};

struct RankingQuery {
  std::string query_id;
  std::vector<GradedCandidate> candidates;

  bool operator==(const RankingQuery&) const = default;
};

/// Counts of references removed while loading or filtering.
struct LoadStats {
  std::size_t dropped_citations = 0;
  std::size_t dropped_pairs = 0;
  std::size_t dropped_query_candidates = 0;
  std::size_t dropped_queries = 0;
  std::size_t removed_articles = 0;

  bool operator==(const LoadStats&) const = default;
};

struct Corpus {
  std::map<std::string, Case> cases;
  std::map<std::string, LawArticle> articles;
  std::vector<CasePair> pairs;
  std::vector<RankingQuery> queries;
  int label_levels = 0;
  LoadStats stats;

  /// Article ids in the fixed row order used by every article matrix.
  std::vector<std::string> article_ids() const;
  const Case& case_by_id(const std::string& id) const;

  /// Equality of content; load statistics are ignored.
  bool same_content(const Corpus& other) const;
};

/// Dataset kind; fixes the label-level count for known exports.
enum class Schema { kGeneric, kLecard, kLecardV2, kElam, kEcail };
Schema parse_schema(std::string_view tag);
/// Declared level count, or nullopt for kGeneric.
std::optional<int> label_levels_of(Schema s);

struct TruncationOptions {
  int max_sentences = 15;
  int max_tokens = 150;
};

// ----------------------------------------------------------------- text

/// Whitespace-separated tokens; every CJK ideograph or CJK punctuation mark
/// is a token of its own. Views point into `text`.
std::vector<std::string_view> tokenize(std::string_view text);

/// Longest prefix of `sentence` holding at most `max_tokens` tokens, with
/// trailing whitespace removed.
std::string truncate_tokens(std::string_view sentence, int max_tokens);

/// Splits after terminal punctuation (。！？ always; . ! ? when followed by
/// whitespace or the end) and at newlines, keeps the first `max_sentences`
/// nonempty sentences and truncates each to `max_tokens`. Throws
/// ValidationError on empty input.
std::vector<std::string> split_and_truncate(std::string_view raw_text, int max_sentences = 15, int max_tokens = 150);

// ---------------------------------------------------------------- corpus

/// Reads cases.jsonl, articles.jsonl and pairs.jsonl and/or queries.jsonl
/// (plus meta.json when present) from `dir`.
Corpus load_corpus(const std::filesystem::path& dir, Schema schema = Schema::kGeneric,
                   const TruncationOptions& truncation = {});

/// Writes the normalised corpus; the inverse of load_corpus.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Recomputes support counts from the cases' citations.
void recount_support(Corpus& corpus);

/// Removes articles cited by fewer than `min_support` cases together with
/// their citations. Throws ValidationError when nothing remains.
Corpus filter_articles(Corpus corpus, int min_support = 10);

// ------------------------------------------------------------- synthetic

struct SyntheticOptions {
  std::uint64_t seed = 7;
  int n_cases = 240;
  int n_articles = 8;
  /// Match level = number of thresholds t with |overlap| >= t.
  std::vector<int> thresholds{1, 2};
  int n_pairs = 600;
  int n_queries = 20;
  int candidates_per_query = 20;
  int background_topics = 12;
  int background_sentences_min = 3;
  int background_sentences_max = 5;
};

/// Match level implied by an article overlap under `thresholds`.
int overlap_level(std::size_t overlap, const std::vector<int>& thresholds);

/// Deterministic corpus whose match labels are a function of article overlap.
Corpus make_synthetic_corpus(const SyntheticOptions& options);

/// Tab-separated summary of corpus statistics.
std::string corpus_summary(const Corpus& corpus);

}  // namespace lcmlai

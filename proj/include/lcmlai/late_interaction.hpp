#pragma once

// Candidate-side precomputation. Everything a candidate contributes before it
// meets a query (sentence embeddings, raw article scores Λ and value vectors)
// is stored once per model; re-ranking then encodes only the query.

#include <filesystem>
#include <string>
#include <vector>

#include "lcmlai/pipeline.hpp"

namespace lcmlai {

struct CandidateCache {
  std::string candidate_id;
  std::string fingerprint;
  Matrix<float> embeddings;  ///< n_y x d_b
  Matrix<float> lambda;      ///< n_y x n_L (empty without the legal module)
  Matrix<float> values;      ///< n_y x d_h (empty without the legal module)

  bool operator==(const CandidateCache&) const = default;
};

/// Tensors of one candidate under `model`, computed from its embeddings.
/// Pass the model fingerprint when known; hashing large models is not free.
CandidateCache candidate_tensors(const std::string& id, const MatrixXd& embeddings, const Model& model,
                                 const std::string& fingerprint = {});

std::filesystem::path cache_file(const std::filesystem::path& dir, const std::string& candidate_id);

void save_cache(const std::filesystem::path& dir, const CandidateCache& cache);

/// Throws StaleCacheError when the stored fingerprint is not `fingerprint`,
/// LoadError when the file is missing or damaged.
CandidateCache load_cache(const std::filesystem::path& dir, const std::string& candidate_id,
                          const std::string& fingerprint);

/// Reuses a stored cache when its fingerprint matches, otherwise encodes the
/// case and writes a fresh one.
CandidateCache precompute_candidate(const Case& c, const Model& model, const Encoder& enc,
                                    const std::filesystem::path& dir, const std::string& fingerprint = {});

/// Precomputes many candidates on `jobs` threads and writes manifest.json
/// (fingerprint plus candidate ids).
std::vector<CandidateCache> precompute_candidates(const std::vector<const Case*>& cases, const Model& model,
                                                  const Encoder& enc, const std::filesystem::path& dir, int jobs = 1);

/// Fingerprint recorded in dir/manifest.json, empty when there is none.
std::string manifest_fingerprint(const std::filesystem::path& dir);

/// Scores cached candidates against a query: one query encoding, no
/// candidate encoding. Throws StaleCacheError on a fingerprint mismatch.
std::vector<ScoredCandidate> rerank_cached(const Case& query, const std::vector<CandidateCache>& caches,
                                           const Model& model, const Encoder& enc);

/// The same scores computed without any cache.
std::vector<ScoredCandidate> rerank_online(const Case& query, const std::vector<const Case*>& candidates,
                                           const Model& model, const Encoder& enc);

}  // namespace lcmlai

#include "lcmlai/late_interaction.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace lcmlai {

namespace fs = std::filesystem;

CandidateCache candidate_tensors(const std::string& id, const MatrixXd& embeddings, const Model& model,
                                 const std::string& fingerprint) {
  ad::NoGradGuard guard;
  CandidateCache c;
  c.candidate_id = id;
  c.fingerprint = fingerprint.empty() ? model.fingerprint() : fingerprint;
  const CaseSide<float> side = model.case_side(embeddings);
  c.embeddings = side.embeddings.value();
  if (side.has_lim) {
    c.lambda = side.distribution.lambda.value();
    c.values = side.distribution.values.value();
  }
  return c;
}

fs::path cache_file(const fs::path& dir, const std::string& candidate_id) {
  // Ids may hold any character, so files are named by a digest.
  return dir / (to_hex(sha256(candidate_id)).substr(0, 32) + ".lcc");
}

namespace {

constexpr char kMagic[8] = {'L', 'C', 'M', 'C', 'A', 'N', 'D', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

bool get_u64(std::istream& in, std::uint64_t& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(v)));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool get_string(std::istream& in, std::string& s) {
  std::uint64_t n = 0;
  if (!get_u64(in, n) || n > (1ULL << 20)) return false;
  s.assign(n, '\0');
  return static_cast<bool>(in.read(s.data(), static_cast<std::streamsize>(n)));
}

void put_matrix(std::ostream& out, const Matrix<float>& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

bool get_matrix(std::istream& in, Matrix<float>& m) {
  std::uint64_t r = 0, c = 0;
  if (!get_u64(in, r) || !get_u64(in, c) || r > (1ULL << 24) || c > (1ULL << 24)) return false;
  m.resize(static_cast<Index>(r), static_cast<Index>(c));
  return static_cast<bool>(in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float))));
}

std::optional<CandidateCache> read_cache(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  CandidateCache c;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0 || !get_string(in, c.fingerprint) ||
      !get_string(in, c.candidate_id) || !get_matrix(in, c.embeddings) || !get_matrix(in, c.lambda) ||
      !get_matrix(in, c.values)) {
    throw LoadError("damaged candidate cache " + file.string());
  }
  return c;
}

}  // namespace

void save_cache(const fs::path& dir, const CandidateCache& cache) {
  fs::create_directories(dir);
  const fs::path file = cache_file(dir, cache.candidate_id);
  // Write-then-rename keeps concurrent readers from seeing a torn file.
  const fs::path tmp = file.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + tmp.string());
    out.write(kMagic, 8);
    put_string(out, cache.fingerprint);
    put_string(out, cache.candidate_id);
    put_matrix(out, cache.embeddings);
    put_matrix(out, cache.lambda);
    put_matrix(out, cache.values);
    if (!out.flush()) throw LoadError("short write to " + tmp.string());
  }
  fs::rename(tmp, file);
}

CandidateCache load_cache(const fs::path& dir, const std::string& candidate_id, const std::string& fingerprint) {
  const fs::path file = cache_file(dir, candidate_id);
  auto c = read_cache(file);
  if (!c) throw LoadError("no cache for candidate '" + candidate_id + "' in " + dir.string());
  if (c->candidate_id != candidate_id) throw LoadError("cache file " + file.string() + " belongs to another candidate");
  if (c->fingerprint != fingerprint) {
    throw StaleCacheError("cache for candidate '" + candidate_id + "' was built by model " +
                          c->fingerprint.substr(0, 12) + ", not " + fingerprint.substr(0, 12));
  }
  return *c;
}

CandidateCache precompute_candidate(const Case& c, const Model& model, const Encoder& enc, const fs::path& dir,
                                    const std::string& fingerprint) {
  const std::string fp = fingerprint.empty() ? model.fingerprint() : fingerprint;
  if (auto existing = read_cache(cache_file(dir, c.id)); existing && existing->fingerprint == fp &&
                                                         existing->candidate_id == c.id) {
    return *existing;
  }
  CandidateCache cache = candidate_tensors(c.id, encode_case(c, enc), model, fp);
  save_cache(dir, cache);
  return cache;
}

std::vector<CandidateCache> precompute_candidates(const std::vector<const Case*>& cases, const Model& model,
                                                  const Encoder& enc, const fs::path& dir, int jobs) {
  fs::create_directories(dir);
  const std::string fp = model.fingerprint();
  std::vector<CandidateCache> out(cases.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= cases.size()) return;
      try {
        out[i] = precompute_candidate(*cases[i], model, enc, dir, fp);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cases.size();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cases.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  nlohmann::json manifest;
  manifest["fingerprint"] = fp;
  std::vector<std::string> ids;
  for (const auto* c : cases) ids.push_back(c->id);
  std::sort(ids.begin(), ids.end());
  manifest["candidates"] = ids;
  std::ofstream m(dir / "manifest.json", std::ios::trunc);
  m << manifest.dump(2) << '\n';
  return out;
}

std::string manifest_fingerprint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) return {};
  try {
    return nlohmann::json::parse(in).at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw LoadError("damaged cache manifest in " + dir.string());
  }
}

std::vector<ScoredCandidate> rerank_cached(const Case& query, const std::vector<CandidateCache>& caches,
                                           const Model& model, const Encoder& enc) {
  const std::string fp = model.fingerprint();
  for (const auto& c : caches) {
    if (c.fingerprint != fp) throw StaleCacheError("candidate '" + c.candidate_id + "' was cached by another model");
  }
  ad::NoGradGuard guard;
  const CaseSide<float> x = model.case_side(encode_case(query, enc));
  std::vector<ScoredCandidate> ranking;
  for (const auto& c : caches) {
    const CaseSide<float> y = model.case_side_from_cache(c.embeddings, c.lambda, c.values);
    ranking.push_back({c.candidate_id, static_cast<double>(model.retrieval_score(model.interact(x, y)).item())});
  }
  sort_ranking(ranking);
  return ranking;
}

std::vector<ScoredCandidate> rerank_online(const Case& query, const std::vector<const Case*>& candidates,
                                           const Model& model, const Encoder& enc) {
  ad::NoGradGuard guard;
  const CaseSide<float> x = model.case_side(encode_case(query, enc));
  std::vector<ScoredCandidate> ranking;
  for (const auto* c : candidates) {
    const CaseSide<float> y = model.case_side(encode_case(*c, enc));
    ranking.push_back({c->id, static_cast<double>(model.retrieval_score(model.interact(x, y)).item())});
  }
  sort_ranking(ranking);
  return ranking;
}

}  // namespace lcmlai

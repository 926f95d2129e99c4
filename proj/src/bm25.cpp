#include "lcmlai/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace lcmlai {

Bm25Index::Bm25Index(double k1, double b) : k1_(k1), b_(b) {
  if (k1 < 0.0 || b < 0.0 || b > 1.0) throw ConfigError("BM25 needs k1 >= 0 and b in [0, 1]");
}

std::vector<std::string> Bm25Index::terms(std::string_view text) {
  std::vector<std::string> out;
  for (auto tok : tokenize(text)) {
    std::string t(tok);
    for (char& c : t) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string case_text(const Case& c) {
  std::string text;
  for (const auto& s : c.sentences) {
    if (!text.empty()) text.push_back('\n');
    text += s;
  }
  return text;
}

Bm25Index Bm25Index::from_corpus(const Corpus& corpus, double k1, double b) {
  Bm25Index index(k1, b);
  for (const auto& [id, c] : corpus.cases) index.add(id, case_text(c));
  return index;
}

void Bm25Index::add(std::string id, std::string_view text) {
  if (doc_index_.count(id)) throw ValidationError("document '" + id + "' indexed twice");
  const std::size_t doc = ids_.size();
  std::map<std::string, std::size_t> tf;
  const auto ts = terms(text);
  for (const auto& t : ts) ++tf[t];
  for (const auto& [t, f] : tf) postings_[t].emplace_back(doc, f);
  doc_index_.emplace(id, doc);
  ids_.push_back(std::move(id));
  lengths_.push_back(ts.size());
  total_length_ += ts.size();
}

double Bm25Index::idf(std::size_t df) const {
  const auto n = static_cast<double>(ids_.size());
  const auto d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double Bm25Index::avgdl() const {
  return ids_.empty() ? 0.0 : static_cast<double>(total_length_) / static_cast<double>(ids_.size());
}

namespace {

std::set<std::string> distinct(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

double Bm25Index::score(std::string_view query, const std::string& id) const {
  if (ids_.empty()) throw ValidationError("BM25 index is empty");
  auto it = doc_index_.find(id);
  if (it == doc_index_.end()) throw ValidationError("document '" + id + "' is not indexed");
  const std::size_t doc = it->second;
  const double norm = avgdl() > 0.0 ? static_cast<double>(lengths_[doc]) / avgdl() : 0.0;
  double s = 0.0;
  for (const auto& t : distinct(terms(query))) {
    auto p = postings_.find(t);
    if (p == postings_.end()) continue;
    for (const auto& [d, f] : p->second) {
      if (d != doc) continue;
      const auto tf = static_cast<double>(f);
      s += idf(p->second.size()) * tf * (k1_ + 1.0) / (tf + k1_ * (1.0 - b_ + b_ * norm));
    }
  }
  return s;
}

std::vector<std::pair<std::string, double>> Bm25Index::search(std::string_view query, std::size_t k,
                                                              const std::vector<std::string>& exclude) const {
  if (ids_.empty()) throw ValidationError("BM25 index is empty");
  std::vector<double> scores(ids_.size(), 0.0);
  std::vector<bool> matched(ids_.size(), false);
  const double mean_len = avgdl();
  for (const auto& t : distinct(terms(query))) {
    auto p = postings_.find(t);
    if (p == postings_.end()) continue;
    const double w = idf(p->second.size());
    for (const auto& [d, f] : p->second) {
      const auto tf = static_cast<double>(f);
      const double norm = mean_len > 0.0 ? static_cast<double>(lengths_[d]) / mean_len : 0.0;
      scores[d] += w * tf * (k1_ + 1.0) / (tf + k1_ * (1.0 - b_ + b_ * norm));
      matched[d] = true;
    }
  }
  const std::set<std::string> skip(exclude.begin(), exclude.end());
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    if (matched[d] && !skip.count(ids_[d])) out.emplace_back(ids_[d], scores[d]);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<std::string> bm25_retrieve(std::string_view query_text, const Corpus& corpus, std::size_t k, double k1,
                                       double b) {
  const auto index = Bm25Index::from_corpus(corpus, k1, b);
  std::vector<std::string> ids;
  for (auto& [id, _] : index.search(query_text, k)) ids.push_back(id);
  return ids;
}

}  // namespace lcmlai

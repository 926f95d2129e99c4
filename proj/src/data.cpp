#include "lcmlai/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lcmlai/diagnostics.hpp"

namespace lcmlai {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ corpus

std::vector<std::string> Corpus::article_ids() const {
  std::vector<std::string> ids;
  ids.reserve(articles.size());
  for (const auto& [id, _] : articles) ids.push_back(id);
  return ids;
}

const Case& Corpus::case_by_id(const std::string& id) const {
  auto it = cases.find(id);
  if (it == cases.end()) throw ValidationError("unknown case id '" + id + "'");
  return it->second;
}

bool Corpus::same_content(const Corpus& o) const {
  return cases == o.cases && articles == o.articles && pairs == o.pairs && queries == o.queries &&
         label_levels == o.label_levels;
}

Schema parse_schema(std::string_view tag) {
  if (tag == "generic") return Schema::kGeneric;
  if (tag == "lecard") return Schema::kLecard;
  if (tag == "lecardv2") return Schema::kLecardV2;
  if (tag == "elam") return Schema::kElam;
  if (tag == "ecail") return Schema::kEcail;
  throw ConfigError("unknown schema '" + std::string(tag) + "'");
}

std::optional<int> label_levels_of(Schema s) {
  switch (s) {
    case Schema::kLecard:
    case Schema::kLecardV2: return 4;
    case Schema::kElam:
    case Schema::kEcail: return 3;
    default: return std::nullopt;
  }
}

// -------------------------------------------------------------------- text

namespace {

// Decodes one UTF-8 code point at `i`; invalid bytes decode as themselves.
char32_t decode(std::string_view s, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) { return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80; };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    len = 2;
    return ((b0 & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return ((b0 & 0x0Fu) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6) |
           (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return ((b0 & 0x07u) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12) |
           ((static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6) | (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
  }
  len = 1;
  return b0;
}

bool is_space(char32_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v' || c == 0x3000; }

bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0xF900 && c <= 0xFAFF) ||
         (c >= 0x3001 && c <= 0x303F) || (c >= 0xFF01 && c <= 0xFF65);
}

bool is_cjk_terminal(char32_t c) { return c == 0x3002 || c == 0xFF01 || c == 0xFF1F; }

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  while (b < s.size()) {
    std::size_t len = 0;
    if (!is_space(decode(s, b, len))) break;
    b += len;
  }
  std::size_t e = s.size();
  while (e > b) {
    // Step back to the start of the previous code point.
    std::size_t p = e - 1;
    while (p > b && (static_cast<unsigned char>(s[p]) & 0xC0) == 0x80) --p;
    std::size_t len = 0;
    if (!is_space(decode(s, p, len))) break;
    e = p;
  }
  return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t start = std::string_view::npos;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = 0;
    const char32_t c = decode(text, i, len);
    if (is_space(c) || is_cjk(c)) {
      if (start != std::string_view::npos) {
        tokens.push_back(text.substr(start, i - start));
        start = std::string_view::npos;
      }
      if (is_cjk(c)) tokens.push_back(text.substr(i, len));
    } else if (start == std::string_view::npos) {
      start = i;
    }
    i += len;
  }
  if (start != std::string_view::npos) tokens.push_back(text.substr(start));
  return tokens;
}

std::string truncate_tokens(std::string_view sentence, int max_tokens) {
  const auto tokens = tokenize(sentence);
  if (max_tokens < 0) max_tokens = 0;
  if (static_cast<int>(tokens.size()) <= max_tokens) return std::string(trim(sentence));
  if (max_tokens == 0) return {};
  const auto& last = tokens[static_cast<std::size_t>(max_tokens - 1)];
  const std::size_t end = static_cast<std::size_t>(last.data() - sentence.data()) + last.size();
  return std::string(trim(sentence.substr(0, end)));
}

std::vector<std::string> split_and_truncate(std::string_view raw_text, int max_sentences, int max_tokens) {
  if (trim(raw_text).empty()) throw ValidationError("cannot split empty text");
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto piece = trim(raw_text.substr(start, end - start));
    if (!piece.empty() && static_cast<int>(out.size()) < max_sentences) {
      out.push_back(truncate_tokens(piece, max_tokens));
      if (out.back().empty()) out.pop_back();
    }
    start = end;
  };
  std::size_t i = 0;
  while (i < raw_text.size()) {
    std::size_t len = 0;
    const char32_t c = decode(raw_text, i, len);
    const std::size_t next = i + len;
    if (c == '\n') {
      emit(i);
      start = next;
    } else if (is_cjk_terminal(c)) {
      emit(next);
    } else if (c == '.' || c == '!' || c == '?') {
      std::size_t nlen = 0;
      if (next >= raw_text.size() || is_space(decode(raw_text, next, nlen))) emit(next);
    }
    i = next;
  }
  emit(raw_text.size());
  if (out.empty()) throw ValidationError("text contains no sentences");
  return out;
}

// ----------------------------------------------------------------- loading

namespace {

struct JsonlRecord {
  std::size_t line;
  json value;
};

std::vector<JsonlRecord> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<JsonlRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back({n, json::parse(line)});
    } catch (const json::exception& e) {
      throw ParseError(path.string(), n, std::string("malformed JSON: ") + e.what());
    }
    if (!out.back().value.is_object()) throw ParseError(path.string(), n, "record is not an object");
  }
  return out;
}

template <typename T>
T field(const JsonlRecord& r, const fs::path& file, const char* key) {
  auto it = r.value.find(key);
  if (it == r.value.end()) throw ParseError(file.string(), r.line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(file.string(), r.line, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

Corpus load_corpus(const fs::path& dir, Schema schema, const TruncationOptions& truncation) {
  if (!fs::is_directory(dir)) throw LoadError("corpus directory not found: " + dir.string());
  const fs::path cases_path = dir / "cases.jsonl";
  const fs::path articles_path = dir / "articles.jsonl";
  const fs::path pairs_path = dir / "pairs.jsonl";
  const fs::path queries_path = dir / "queries.jsonl";
  for (const auto& p : {cases_path, articles_path}) {
    if (!fs::exists(p)) throw LoadError("missing required file " + p.string());
  }
  const bool has_pairs = fs::exists(pairs_path);
  const bool has_queries = fs::exists(queries_path);
  if (!has_pairs && !has_queries) {
    throw LoadError("missing " + pairs_path.string() + " and " + queries_path.string() + " (need at least one)");
  }

  Corpus corpus;

  for (const auto& r : read_jsonl(articles_path)) {
    LawArticle a;
    a.id = field<std::string>(r, articles_path, "id");
    a.text = field<std::string>(r, articles_path, "text");
    if (trim(a.text).empty()) throw ParseError(articles_path.string(), r.line, "article text is empty");
    if (!corpus.articles.emplace(a.id, a).second) throw ValidationError("duplicate article id '" + a.id + "'");
  }

  const auto case_records = read_jsonl(cases_path);
  if (case_records.empty()) throw LoadError(cases_path.string() + " contains no cases");
  for (const auto& r : case_records) {
    Case c;
    c.id = field<std::string>(r, cases_path, "id");
    try {
      if (r.value.contains("sentences")) {
        auto raw = field<std::vector<std::string>>(r, cases_path, "sentences");
        for (const auto& s : raw) {
          if (static_cast<int>(c.sentences.size()) >= truncation.max_sentences) break;
          auto t = truncate_tokens(s, truncation.max_tokens);
          if (!t.empty()) c.sentences.push_back(std::move(t));
        }
        if (c.sentences.empty()) throw ValidationError("case has no sentences");
      } else if (r.value.contains("text")) {
        c.sentences =
            split_and_truncate(field<std::string>(r, cases_path, "text"), truncation.max_sentences, truncation.max_tokens);
      } else {
        throw ParseError(cases_path.string(), r.line, "case needs 'sentences' or 'text'");
      }
    } catch (const ValidationError& e) {
      throw ParseError(cases_path.string(), r.line, e.what());
    }
    if (r.value.contains("articles")) {
      for (auto& a : field<std::vector<std::string>>(r, cases_path, "articles")) c.cited_article_ids.insert(std::move(a));
    }
    if (r.value.contains("rationales")) {
      c.rationales = field<std::vector<int>>(r, cases_path, "rationales");
      if (c.rationales.size() < c.sentences.size()) {
        throw ParseError(cases_path.string(), r.line, "fewer rationale labels than sentences");
      }
      c.rationales.resize(c.sentences.size());
    }
    if (!corpus.cases.emplace(c.id, c).second) throw ValidationError("duplicate case id '" + c.id + "'");
  }

  // Dangling citations are dropped and counted.
  for (auto& [_, c] : corpus.cases) {
    for (auto it = c.cited_article_ids.begin(); it != c.cited_article_ids.end();) {
      if (!corpus.articles.count(*it)) {
        it = c.cited_article_ids.erase(it);
        ++corpus.stats.dropped_citations;
      } else {
        ++it;
      }
    }
  }

  int max_label = 0;
  if (has_pairs) {
    for (const auto& r : read_jsonl(pairs_path)) {
      CasePair p;
      p.query_id = field<std::string>(r, pairs_path, "query");
      p.candidate_id = field<std::string>(r, pairs_path, "candidate");
      p.label = field<int>(r, pairs_path, "label");
      if (r.value.contains("alignment")) p.alignment = field<std::vector<std::pair<int, int>>>(r, pairs_path, "alignment");
      if (p.label < 0) throw ParseError(pairs_path.string(), r.line, "negative label");
      if (!corpus.cases.count(p.query_id) || !corpus.cases.count(p.candidate_id)) {
        ++corpus.stats.dropped_pairs;
        continue;
      }
      max_label = std::max(max_label, p.label);
      corpus.pairs.push_back(std::move(p));
    }
  }
  if (has_queries) {
    for (const auto& r : read_jsonl(queries_path)) {
      RankingQuery q;
      q.query_id = field<std::string>(r, queries_path, "query");
      auto it = r.value.find("candidates");
      if (it == r.value.end() || !it->is_array()) {
        throw ParseError(queries_path.string(), r.line, "missing array field 'candidates'");
      }
      for (const auto& c : *it) {
        if (!c.is_object() || !c.contains("id") || !c.contains("rel")) {
          throw ParseError(queries_path.string(), r.line, "candidate needs 'id' and 'rel'");
        }
        GradedCandidate g;
        try {
          g.id = c.at("id").get<std::string>();
          g.relevance = c.at("rel").get<int>();
        } catch (const json::exception&) {
          throw ParseError(queries_path.string(), r.line, "candidate field has the wrong type");
        }
        if (g.relevance < 0) throw ParseError(queries_path.string(), r.line, "negative relevance");
        if (!corpus.cases.count(g.id)) {
          ++corpus.stats.dropped_query_candidates;
          continue;
        }
        max_label = std::max(max_label, g.relevance);
        q.candidates.push_back(std::move(g));
      }
      if (!corpus.cases.count(q.query_id) || q.candidates.empty()) {
        ++corpus.stats.dropped_queries;
        continue;
      }
      corpus.queries.push_back(std::move(q));
    }
  }

  if (auto declared = label_levels_of(schema)) {
    corpus.label_levels = *declared;
  } else if (fs::exists(dir / "meta.json")) {
    std::ifstream in(dir / "meta.json");
    try {
      corpus.label_levels = json::parse(in).at("label_levels").get<int>();
    } catch (const json::exception& e) {
      throw ParseError((dir / "meta.json").string(), 1, e.what());
    }
  } else {
    corpus.label_levels = std::max(2, max_label + 1);
  }
  if (max_label >= corpus.label_levels) {
    throw ValidationError("label " + std::to_string(max_label) + " outside the " +
                          std::to_string(corpus.label_levels) + " declared levels");
  }

  diagnostics().dropped_article_citations += corpus.stats.dropped_citations;
  diagnostics().dropped_pair_references += corpus.stats.dropped_pairs + corpus.stats.dropped_query_candidates;
  recount_support(corpus);
  return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("cases.jsonl");
    for (const auto& [id, c] : corpus.cases) {
      json j;
      j["id"] = c.id;
      j["sentences"] = c.sentences;
      j["articles"] = std::vector<std::string>(c.cited_article_ids.begin(), c.cited_article_ids.end());
      if (!c.rationales.empty()) j["rationales"] = c.rationales;
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open("articles.jsonl");
    for (const auto& [id, a] : corpus.articles) out << json{{"id", a.id}, {"text", a.text}}.dump() << '\n';
  }
  if (!corpus.pairs.empty() || corpus.queries.empty()) {
    auto out = open("pairs.jsonl");
    for (const auto& p : corpus.pairs) {
      json j{{"query", p.query_id}, {"candidate", p.candidate_id}, {"label", p.label}};
      if (!p.alignment.empty()) j["alignment"] = p.alignment;
      out << j.dump() << '\n';
    }
  }
  if (!corpus.queries.empty()) {
    auto out = open("queries.jsonl");
    for (const auto& q : corpus.queries) {
      json cands = json::array();
      for (const auto& c : q.candidates) cands.push_back({{"id", c.id}, {"rel", c.relevance}});
      out << json{{"query", q.query_id}, {"candidates", cands}}.dump() << '\n';
    }
  }
  {
    auto out = open("meta.json");
    out << json{{"label_levels", corpus.label_levels}}.dump() << '\n';
  }
}

void recount_support(Corpus& corpus) {
  for (auto& [_, a] : corpus.articles) a.support_count = 0;
  for (const auto& [_, c] : corpus.cases) {
    for (const auto& id : c.cited_article_ids) {
      auto it = corpus.articles.find(id);
      if (it != corpus.articles.end()) ++it->second.support_count;
    }
  }
}

Corpus filter_articles(Corpus corpus, int min_support) {
  recount_support(corpus);
  for (auto it = corpus.articles.begin(); it != corpus.articles.end();) {
    if (it->second.support_count < min_support) {
      it = corpus.articles.erase(it);
      ++corpus.stats.removed_articles;
    } else {
      ++it;
    }
  }
  if (corpus.articles.empty()) {
    throw ValidationError("no article is cited by at least " + std::to_string(min_support) + " cases");
  }
  for (auto& [_, c] : corpus.cases) {
    for (auto it = c.cited_article_ids.begin(); it != c.cited_article_ids.end();) {
      if (!corpus.articles.count(*it)) {
        it = c.cited_article_ids.erase(it);
      } else {
        ++it;
      }
    }
  }
  return corpus;
}

// --------------------------------------------------------------- synthetic

int overlap_level(std::size_t overlap, const std::vector<int>& thresholds) {
  int level = 0;
  for (int t : thresholds) {
    if (static_cast<int>(overlap) >= t) ++level;
  }
  return level;
}

namespace {

std::string make_word(Rng& rng, std::set<std::string>& used) {
  static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  for (;;) {
    std::string w;
    const int syllables = 2 + static_cast<int>(rng.below(2));
    for (int s = 0; s < syllables; ++s) {
      w.push_back(kOnsets[rng.below(kOnsets.size())]);
      w.push_back(kVowels[rng.below(kVowels.size())]);
      if (rng.below(3) == 0) w.push_back(kOnsets[rng.below(kOnsets.size())]);
    }
    if (used.insert(w).second) return w;
  }
}

std::vector<std::string> make_pool(Rng& rng, std::set<std::string>& used, int n) {
  std::vector<std::string> pool;
  for (int i = 0; i < n; ++i) pool.push_back(make_word(rng, used));
  return pool;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

std::string sentence_from(std::vector<std::string> words, Rng& rng) {
  shuffle(words, rng);
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s.push_back(' ');
    s += w;
  }
  s.push_back('.');
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string case_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%04d", i);
  return buf;
}

std::string article_id(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "a%02d", k);
  return buf;
}

std::size_t overlap_of(const Case& a, const Case& b) {
  std::size_t n = 0;
  for (const auto& id : a.cited_article_ids) n += b.cited_article_ids.count(id);
  return n;
}

}  // namespace

Corpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.n_articles < 2) throw ValidationError("synthetic corpus needs at least 2 articles");
  if (o.n_cases < 2) throw ValidationError("synthetic corpus needs at least 2 cases");
  if (o.thresholds.empty()) throw ValidationError("need at least one overlap threshold");
  for (std::size_t i = 0; i < o.thresholds.size(); ++i) {
    if (o.thresholds[i] < 1 || (i > 0 && o.thresholds[i] <= o.thresholds[i - 1])) {
      throw ValidationError("overlap thresholds must be positive and strictly increasing");
    }
  }
  const int top = o.thresholds.back();
  if (top + 1 > o.n_articles) throw ValidationError("largest threshold leaves no room for article sets");

  Rng rng(o.seed);
  std::set<std::string> used;
  std::vector<std::vector<std::string>> article_words;
  for (int k = 0; k < o.n_articles; ++k) article_words.push_back(make_pool(rng, used, 6));
  std::vector<std::vector<std::string>> topic_words;
  for (int t = 0; t < o.background_topics; ++t) topic_words.push_back(make_pool(rng, used, 8));
  const auto filler = make_pool(rng, used, 30);

  Corpus corpus;
  corpus.label_levels = static_cast<int>(o.thresholds.size()) + 1;
  for (int k = 0; k < o.n_articles; ++k) {
    LawArticle a;
    a.id = article_id(k);
    a.text = sentence_from(article_words[static_cast<std::size_t>(k)], rng);
    corpus.articles.emplace(a.id, a);
  }

  for (int i = 0; i < o.n_cases; ++i) {
    Case c;
    c.id = case_id(i);
    // Sets hold at least `top` articles so identical sets reach the top level.
    const int size = top + static_cast<int>(rng.below(2));
    std::vector<int> order(static_cast<std::size_t>(o.n_articles));
    for (int k = 0; k < o.n_articles; ++k) order[static_cast<std::size_t>(k)] = k;
    shuffle(order, rng);
    std::vector<std::string> sentences;
    for (int s = 0; s < size; ++s) {
      const int k = order[static_cast<std::size_t>(s)];
      c.cited_article_ids.insert(article_id(k));
      const auto& pool = article_words[static_cast<std::size_t>(k)];
      std::vector<std::string> words;
      const int keywords = 2 + static_cast<int>(rng.below(2));
      for (int w = 0; w < keywords; ++w) words.push_back(pick(pool, rng));
      const int fill = 4 + static_cast<int>(rng.below(3));
      for (int w = 0; w < fill; ++w) words.push_back(pick(filler, rng));
      sentences.push_back(sentence_from(words, rng));
    }
    const auto span = static_cast<std::uint64_t>(o.background_sentences_max - o.background_sentences_min + 1);
    const int background = o.background_sentences_min + static_cast<int>(rng.below(span));
    const auto topic_a = rng.below(topic_words.size());
    const auto topic_b = rng.below(topic_words.size());
    for (int s = 0; s < background; ++s) {
      const auto& pool = topic_words[s % 2 == 0 ? topic_a : topic_b];
      std::vector<std::string> words;
      const int topical = 3 + static_cast<int>(rng.below(3));
      for (int w = 0; w < topical; ++w) words.push_back(pick(pool, rng));
      const int fill = 2 + static_cast<int>(rng.below(3));
      for (int w = 0; w < fill; ++w) words.push_back(pick(filler, rng));
      sentences.push_back(sentence_from(words, rng));
    }
    shuffle(sentences, rng);
    c.sentences = std::move(sentences);
    corpus.cases.emplace(c.id, std::move(c));
  }
  recount_support(corpus);

  // Pairs stratified over match levels.
  std::vector<const Case*> cases;
  for (const auto& [_, c] : corpus.cases) cases.push_back(&c);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_level(static_cast<std::size_t>(corpus.label_levels));
  for (std::size_t a = 0; a < cases.size(); ++a) {
    for (std::size_t b = a + 1; b < cases.size(); ++b) {
      by_level[static_cast<std::size_t>(overlap_level(overlap_of(*cases[a], *cases[b]), o.thresholds))].emplace_back(a, b);
    }
  }
  const std::size_t per_level = static_cast<std::size_t>(o.n_pairs) / by_level.size();
  for (std::size_t level = 0; level < by_level.size(); ++level) {
    auto& pool = by_level[level];
    shuffle(pool, rng);
    for (std::size_t i = 0; i < std::min(per_level, pool.size()); ++i) {
      auto [a, b] = pool[i];
      if (rng.below(2) == 1) std::swap(a, b);
      corpus.pairs.push_back({cases[a]->id, cases[b]->id, static_cast<int>(level), {}});
    }
  }
  shuffle(corpus.pairs, rng);

  // Ranking queries over a mixed-relevance candidate list.
  std::vector<std::size_t> query_order(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) query_order[i] = i;
  shuffle(query_order, rng);
  for (int qi = 0; qi < o.n_queries && static_cast<std::size_t>(qi) < cases.size(); ++qi) {
    const Case& q = *cases[query_order[static_cast<std::size_t>(qi)]];
    std::vector<std::vector<std::size_t>> graded(static_cast<std::size_t>(corpus.label_levels));
    for (std::size_t j = 0; j < cases.size(); ++j) {
      if (cases[j]->id == q.id) continue;
      graded[static_cast<std::size_t>(overlap_level(overlap_of(q, *cases[j]), o.thresholds))].push_back(j);
    }
    RankingQuery rq;
    rq.query_id = q.id;
    std::vector<std::size_t> chosen;
    for (auto& g : graded) shuffle(g, rng);
    // Round-robin over levels, top level first, until the list is full.
    std::vector<std::size_t> cursor(graded.size(), 0);
    while (static_cast<int>(chosen.size()) < o.candidates_per_query) {
      bool progressed = false;
      for (std::size_t l = graded.size(); l-- > 0;) {
        if (static_cast<int>(chosen.size()) >= o.candidates_per_query) break;
        if (cursor[l] < graded[l].size()) {
          chosen.push_back(graded[l][cursor[l]++]);
          progressed = true;
        }
      }
      if (!progressed) break;
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto j : chosen) {
      rq.candidates.push_back({cases[j]->id, overlap_level(overlap_of(q, *cases[j]), o.thresholds)});
    }
    if (!rq.candidates.empty()) corpus.queries.push_back(std::move(rq));
  }
  return corpus;
}

std::string corpus_summary(const Corpus& c) {
  std::size_t sentences = 0;
  std::size_t citations = 0;
  for (const auto& [_, k] : c.cases) {
    sentences += k.sentences.size();
    citations += k.cited_article_ids.size();
  }
  std::size_t candidates = 0;
  for (const auto& q : c.queries) candidates += q.candidates.size();
  const double n = c.cases.empty() ? 1.0 : static_cast<double>(c.cases.size());
  std::ostringstream out;
  out << "cases\t" << c.cases.size() << '\n'
      << "queries\t" << c.queries.size() << '\n'
      << "candidates_per_query\t" << (c.queries.empty() ? 0.0 : static_cast<double>(candidates) / static_cast<double>(c.queries.size())) << '\n'
      << "case_pairs\t" << c.pairs.size() << '\n'
      << "label_levels\t" << c.label_levels << '\n'
      << "law_articles\t" << c.articles.size() << '\n'
      << "avg_cited_articles_per_case\t" << static_cast<double>(citations) / n << '\n'
      << "avg_sentences_per_case\t" << static_cast<double>(sentences) / n << '\n'
      << "dropped_citations\t" << c.stats.dropped_citations << '\n'
      << "dropped_pairs\t" << c.stats.dropped_pairs << '\n'
      << "removed_articles\t" << c.stats.removed_articles << '\n';
  return out.str();
}

}  // namespace lcmlai

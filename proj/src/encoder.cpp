#include "lcmlai/encoder.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace lcmlai {

namespace fs = std::filesystem;

MatrixXd Encoder::encode(std::span<const std::string> sentences) const {
  if (sentences.empty()) return MatrixXd(0, dim());
  if (counts_calls()) count(sentences.size());
  MatrixXd out = do_encode(sentences);
  if (out.rows() != static_cast<Index>(sentences.size()) || out.cols() != dim()) {
    throw EncoderError(0, "encoder '" + name() + "' returned a " + std::to_string(out.rows()) + "x" +
                              std::to_string(out.cols()) + " matrix");
  }
  return out;
}

// ------------------------------------------------------------------- hash

namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

// Splits UTF-8 into code points; malformed bytes become single units.
std::vector<std::string_view> code_points(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b = static_cast<unsigned char>(s[i]);
    std::size_t len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 1;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

HashEncoder::HashEncoder(Index dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 2) throw ConfigError("hash encoder dimension must be at least 2");
}

std::string HashEncoder::name() const { return "hash-trigram-" + std::to_string(dim_) + "-" + std::to_string(seed_); }

Vector<double> HashEncoder::features(std::string_view text) const {
  Vector<double> v = Vector<double>::Zero(dim_);
  if (text.empty()) return v;
  // Boundary markers let short strings and word edges contribute grams.
  std::vector<std::string_view> units{"\x02"};
  for (auto cp : code_points(text)) units.push_back(cp);
  units.push_back("\x03");
  for (std::size_t i = 0; i + 3 <= units.size(); ++i) {
    std::uint64_t h = kFnvOffset ^ seed_;
    for (std::size_t k = i; k < i + 3; ++k) {
      for (char c : units[k]) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
      }
      h ^= 0xFF;  // unit separator
      h *= kFnvPrime;
    }
    const auto bucket = static_cast<Index>(h % static_cast<std::uint64_t>(dim_));
    v(bucket) += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

MatrixXd HashEncoder::do_encode(std::span<const std::string> sentences) const {
  MatrixXd out(static_cast<Index>(sentences.size()), dim_);
  for (std::size_t i = 0; i < sentences.size(); ++i) out.row(static_cast<Index>(i)) = features(sentences[i]).transpose();
  return out;
}

// ------------------------------------------------------------------ cache

namespace {

constexpr char kMagic[8] = {'L', 'C', 'M', 'E', 'M', 'B', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  // The store is little-endian; so is every platform this builds on.
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

EmbeddingCache::EmbeddingCache(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw LoadError("cannot open embedding store " + path_.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw LoadError(path_.string() + " is not an embedding store");
  }
  for (;;) {
    std::uint32_t name_len = 0;
    if (!get(in, name_len) || name_len > (1U << 16)) break;
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) break;
    Digest d;
    if (!in.read(reinterpret_cast<char*>(d.data()), 32)) break;
    std::uint32_t dim = 0;
    if (!get(in, dim) || dim > (1U << 20)) break;
    Vector<double> v(dim);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(double)))) break;
    entries_.emplace(key_of(name, d), std::move(v));
    names_.emplace(name, static_cast<Index>(dim));
  }
}

std::string EmbeddingCache::key_of(const std::string& name, const Digest& d) {
  std::string key = name;
  key.push_back('\0');
  key.append(reinterpret_cast<const char*>(d.data()), d.size());
  return key;
}

std::optional<Vector<double>> EmbeddingCache::lookup(const std::string& encoder_name, const Digest& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key_of(encoder_name, key));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<Vector<double>> EmbeddingCache::lookup(const std::string& encoder_name, std::string_view text) const {
  return lookup(encoder_name, sha256(text));
}

void EmbeddingCache::insert(const std::string& encoder_name, std::string_view text, const Vector<double>& v) {
  const Digest d = sha256(text);
  std::lock_guard lock(mutex_);
  const auto key = key_of(encoder_name, d);
  if (entries_.count(key)) return;
  const bool fresh = !fs::exists(path_);
  if (fresh && path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw LoadError("cannot write embedding store " + path_.string());
  if (fresh) out.write(kMagic, 8);
  put(out, static_cast<std::uint32_t>(encoder_name.size()));
  out.write(encoder_name.data(), static_cast<std::streamsize>(encoder_name.size()));
  out.write(reinterpret_cast<const char*>(d.data()), 32);
  put(out, static_cast<std::uint32_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!out.flush()) throw LoadError("short write to " + path_.string());
  entries_.emplace(key, v);
  names_.emplace(encoder_name, v.size());
}

std::optional<Index> EmbeddingCache::dim_of(const std::string& encoder_name) const {
  std::lock_guard lock(mutex_);
  auto it = names_.find(encoder_name);
  if (it == names_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<std::string> EmbeddingCache::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [n, _] : names_) out.push_back(n);
  return out;
}

// ------------------------------------------------------------------ store

StoreEncoder::StoreEncoder(const fs::path& store, std::string encoder_name)
    : store_(store), name_(std::move(encoder_name)) {
  if (!fs::exists(store)) throw LoadError("embedding store not found: " + store.string());
  const auto names = store_.names();
  if (name_.empty()) {
    if (names.size() != 1) throw ConfigError("store holds several encoders; set encoder_name");
    name_ = names.front();
  }
  dim_ = store_.dim_of(name_).value_or(0);
  if (dim_ == 0) throw ConfigError("store " + store.string() + " has no vectors for encoder '" + name_ + "'");
}

MatrixXd StoreEncoder::do_encode(std::span<const std::string> sentences) const {
  MatrixXd out(static_cast<Index>(sentences.size()), dim_);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) {
      out.row(static_cast<Index>(i)).setZero();
      continue;
    }
    auto v = store_.lookup(name_, sentences[i]);
    if (!v) throw EncoderError(i, "no stored embedding for this text under '" + name_ + "'");
    if (v->size() != dim_) throw EncoderError(i, "stored embedding has the wrong width");
    out.row(static_cast<Index>(i)) = v->transpose();
  }
  return out;
}

// ---------------------------------------------------------------- caching

CachingEncoder::CachingEncoder(std::shared_ptr<const Encoder> inner, fs::path cache_file)
    : inner_(std::move(inner)), cache_(std::move(cache_file)) {
  if (!inner_) throw ConfigError("caching encoder needs an inner encoder");
}

MatrixXd CachingEncoder::do_encode(std::span<const std::string> sentences) const {
  const std::string n = inner_->name();
  MatrixXd out(static_cast<Index>(sentences.size()), dim());
  std::vector<std::string> misses;
  std::vector<std::size_t> miss_rows;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (auto v = cache_.lookup(n, sentences[i]); v && v->size() == dim()) {
      out.row(static_cast<Index>(i)) = v->transpose();
    } else {
      misses.push_back(sentences[i]);
      miss_rows.push_back(i);
    }
  }
  if (misses.empty()) return out;
  count(misses.size());
  MatrixXd fresh;
  try {
    fresh = inner_->encode(misses);
  } catch (const EncoderError& e) {
    throw EncoderError(miss_rows[e.sentence_index()], e.what());
  }
  for (std::size_t m = 0; m < misses.size(); ++m) {
    const Vector<double> v = fresh.row(static_cast<Index>(m)).transpose();
    cache_.insert(n, misses[m], v);
    out.row(static_cast<Index>(miss_rows[m])) = fresh.row(static_cast<Index>(m));
  }
  return out;
}

// ---------------------------------------------------------------- helpers

std::shared_ptr<const Encoder> make_encoder(const std::string& spec, Index dim, const std::string& encoder_name,
                                            const fs::path& cache_dir) {
  std::shared_ptr<const Encoder> enc;
  if (spec == "hash") {
    enc = std::make_shared<HashEncoder>(dim);
  } else if (spec.rfind("store:", 0) == 0) {
    enc = std::make_shared<StoreEncoder>(spec.substr(6), encoder_name);
  } else {
    throw ConfigError("unknown encoder '" + spec + "' (expected 'hash' or 'store:<path>')");
  }
  if (enc->dim() != dim) {
    throw ConfigError("encoder dimension " + std::to_string(enc->dim()) + " differs from d_b " + std::to_string(dim));
  }
  if (!cache_dir.empty()) enc = std::make_shared<CachingEncoder>(enc, cache_dir / "embeddings.bin");
  return enc;
}

MatrixXd encode_case(const Case& c, const Encoder& enc) {
  if (c.sentences.empty()) throw ValidationError("case '" + c.id + "' has no sentences");
  return enc.encode(c.sentences);
}

MatrixXd encode_articles(const std::vector<LawArticle>& articles, const Encoder& enc) {
  if (articles.empty()) throw ValidationError("no law articles to encode");
  std::vector<const LawArticle*> sorted;
  for (const auto& a : articles) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  std::vector<std::string> texts;
  for (const auto* a : sorted) texts.push_back(a->text);
  return enc.encode(texts);
}

MatrixXd encode_articles(const Corpus& corpus, const Encoder& enc) {
  std::vector<LawArticle> articles;
  for (const auto& [_, a] : corpus.articles) articles.push_back(a);
  return encode_articles(articles, enc);
}

}  // namespace lcmlai

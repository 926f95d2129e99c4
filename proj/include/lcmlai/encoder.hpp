#pragma once

// Sentence encoders. The model consumes frozen sentence embeddings; anything
// that maps a batch of strings to a [batch x dim] matrix deterministically can
// stand in for the pretrained encoder.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcmlai/data.hpp"
#include "lcmlai/sha256.hpp"
#include "lcmlai/types.hpp"

namespace lcmlai {

class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::string name() const = 0;
  virtual Index dim() const = 0;

  /// [batch x dim]. Safe to call concurrently.
  MatrixXd encode(std::span<const std::string> sentences) const;

  /// Number of encode() calls that had to compute at least one embedding.
  std::uint64_t call_count() const { return calls_.load(); }
  /// Number of sentences actually computed (cache hits excluded).
  std::uint64_t sentence_count() const { return sentences_.load(); }
  void reset_counters() const {
    calls_ = 0;
    sentences_ = 0;
  }

 protected:
  virtual MatrixXd do_encode(std::span<const std::string> sentences) const = 0;
  /// Lets wrappers that satisfy a call entirely from a cache not count it.
  virtual bool counts_calls() const { return true; }
  void count(std::size_t sentences) const {
    ++calls_;
    sentences_ += sentences;
  }

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
  mutable std::atomic<std::uint64_t> sentences_{0};
};

/// Hashed bag of character trigrams, signed into `dim` buckets and
/// L2-normalised. No parameters; the empty string maps to the zero vector.
class HashEncoder final : public Encoder {
 public:
  explicit HashEncoder(Index dim, std::uint64_t seed = 0x5EED5EEDULL);

  std::string name() const override;
  Index dim() const override { return dim_; }

  /// Features of one string; exposed for tests.
  Vector<double> features(std::string_view text) const;

 protected:
  MatrixXd do_encode(std::span<const std::string> sentences) const override;

 private:
  Index dim_;
  std::uint64_t seed_;
};

/// Append-only single-file store keyed by (encoder name, SHA-256 of text).
///
/// Layout: the 8-byte magic "LCMEMB01", then records of
///   u32 name length, name bytes, 32-byte digest, u32 dim, dim x f64,
/// all little-endian. A torn trailing record is ignored on load.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  std::optional<Vector<double>> lookup(const std::string& encoder_name, std::string_view text) const;
  std::optional<Vector<double>> lookup(const std::string& encoder_name, const Digest& key) const;
  /// Persists immediately; a repeated key is ignored.
  void insert(const std::string& encoder_name, std::string_view text, const Vector<double>& v);
  std::size_t size() const;
  /// Encoder names present in the store.
  std::vector<std::string> names() const;
  /// Width of the first vector stored under `encoder_name`.
  std::optional<Index> dim_of(const std::string& encoder_name) const;

 private:
  static std::string key_of(const std::string& name, const Digest& d);

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, Vector<double>> entries_;
  std::map<std::string, Index> names_;
};

/// Serves embeddings exported offline from a pretrained checkpoint into an
/// EmbeddingCache file. Strings missing from the store are an EncoderError.
class StoreEncoder final : public Encoder {
 public:
  StoreEncoder(const std::filesystem::path& store, std::string encoder_name);

  std::string name() const override { return name_; }
  Index dim() const override { return dim_; }

 protected:
  MatrixXd do_encode(std::span<const std::string> sentences) const override;

 private:
  EmbeddingCache store_;
  std::string name_;
  Index dim_ = 0;
};

/// Memoises another encoder through an EmbeddingCache. Hits are bit-identical
/// to the original computation; only misses reach the inner encoder.
class CachingEncoder final : public Encoder {
 public:
  CachingEncoder(std::shared_ptr<const Encoder> inner, std::filesystem::path cache_file);

  std::string name() const override { return inner_->name(); }
  Index dim() const override { return inner_->dim(); }
  const Encoder& inner() const { return *inner_; }
  const EmbeddingCache& cache() const { return cache_; }

 protected:
  MatrixXd do_encode(std::span<const std::string> sentences) const override;
  bool counts_calls() const override { return false; }

 private:
  std::shared_ptr<const Encoder> inner_;
  mutable EmbeddingCache cache_;
};

/// Builds the encoder named by a run configuration: "hash" or
/// "store:<path>". With a nonempty cache_dir the result is cached on disk.
std::shared_ptr<const Encoder> make_encoder(const std::string& spec, Index dim, const std::string& encoder_name,
                                            const std::filesystem::path& cache_dir = {});

/// Row i embeds sentence i. Encoder failures are rethrown with the index.
MatrixXd encode_case(const Case& c, const Encoder& enc);

/// Rows follow ascending article id (the order of Corpus::articles).
MatrixXd encode_articles(const Corpus& corpus, const Encoder& enc);
MatrixXd encode_articles(const std::vector<LawArticle>& articles, const Encoder& enc);

}  // namespace lcmlai

#include <doctest.h>

#include <thread>

#include "lcmlai/encoder.hpp"
#include "support.hpp"

using namespace lcmlai;
using lcmlai::testing::scratch_dir;

namespace {

// Independent restatement of the hash features: FNV-1a over code-point
// trigrams of STX + text + ETX, unit separator 0xFF, sign from the top bit.
Vector<double> reference_features(const std::string& text, Index dim, std::uint64_t seed) {
  Vector<double> v = Vector<double>::Zero(dim);
  if (text.empty()) return v;
  std::vector<std::string> units{"\x02"};
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    const std::size_t len = lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
    units.push_back(text.substr(i, len));
    i += len;
  }
  units.push_back("\x03");
  for (std::size_t i = 0; i + 2 < units.size(); ++i) {
    std::uint64_t h = 14695981039346656037ULL ^ seed;
    for (std::size_t k = i; k < i + 3; ++k) {
      for (unsigned char c : units[k]) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      h ^= 0xFF;
      h *= 1099511628211ULL;
    }
    v(static_cast<Index>(h % static_cast<std::uint64_t>(dim))) += (h >> 63) ? -1.0 : 1.0;
  }
  return v / v.norm();
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("hash encoder matches independently recomputed features") {
    HashEncoder enc(16);
    for (std::string s : {"The accused stole a phone.", "被告人盗窃", "ab", "x"}) {
      CHECK((enc.features(s) - reference_features(s, 16, 0x5EED5EEDULL)).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  TEST_CASE("same string twice gives equal vectors; empty string gives zero") {
    HashEncoder enc(32);
    std::vector<std::string> batch{"robbery at night", "", "robbery at night"};
    MatrixXd m = enc.encode(batch);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 32);
    CHECK(m.row(0) == m.row(2));
    CHECK(m.row(1).isZero(0.0));
    CHECK(m.row(0).norm() == doctest::Approx(1.0));
  }

  TEST_CASE("unrelated fixture strings stay below cosine 0.99") {
    HashEncoder enc(64);
    const std::vector<std::string> fixture{"theft of a mobile phone", "fraud through online transfer",
                                           "intentional injury in a fight", "drunk driving on the highway",
                                           "被告人盗窃手机", "合同诈骗罪"};
    MatrixXd m = enc.encode(fixture);
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = i + 1; j < m.rows(); ++j) CHECK(m.row(i).dot(m.row(j)) < 0.99);
    }
  }

  TEST_CASE("batch grouping does not change embeddings") {
    HashEncoder enc(24);
    std::vector<std::string> all{"one", "two words", "three word text", "四"};
    MatrixXd whole = enc.encode(all);
    for (std::size_t i = 0; i < all.size(); ++i) {
      MatrixXd single = enc.encode(std::span<const std::string>(&all[i], 1));
      CHECK((single.row(0) - whole.row(static_cast<Index>(i))).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }

  TEST_CASE("encode_case rows follow sentences; repeated sentences give equal rows") {
    HashEncoder enc(16);
    Case c{"c", {"alpha beta.", "gamma.", "alpha beta."}, {}, {}};
    MatrixXd m = encode_case(c, enc);
    CHECK(m.rows() == 3);
    CHECK(m.row(0) == m.row(2));
    CHECK(m.row(1) == enc.features("gamma.").transpose());
  }

  TEST_CASE("encode_articles sorts by id and rejects an empty set") {
    HashEncoder enc(8);
    std::vector<LawArticle> a{{"b", "second", 0}, {"a", "first", 0}, {"c", "third", 0}};
    std::vector<LawArticle> shuffled{a[2], a[0], a[1]};
    MatrixXd m1 = encode_articles(a, enc);
    MatrixXd m2 = encode_articles(shuffled, enc);
    CHECK(m1 == m2);
    CHECK(m1.row(0) == enc.features("first").transpose());
    CHECK(encode_articles(std::vector<LawArticle>{a[0]}, enc).rows() == 1);
    CHECK_THROWS_AS(encode_articles(std::vector<LawArticle>{}, enc), ValidationError);
  }

  TEST_CASE("the embedding cache is transparent and persistent") {
    auto dir = scratch_dir("embcache");
    auto inner = std::make_shared<HashEncoder>(12);
    std::vector<std::string> batch{"first sentence", "second sentence"};
    MatrixXd fresh = inner->encode(batch);
    {
      CachingEncoder cached(inner, dir / "embeddings.bin");
      inner->reset_counters();
      CHECK(cached.encode(batch) == fresh);
      CHECK(inner->sentence_count() == 2);
      CHECK(cached.encode(batch) == fresh);
      CHECK(inner->sentence_count() == 2);  // second call served from the cache
    }
    CachingEncoder reopened(inner, dir / "embeddings.bin");
    inner->reset_counters();
    CHECK(reopened.encode(batch) == fresh);
    CHECK(inner->call_count() == 0);
    CHECK(reopened.cache().size() == 2);
  }

  TEST_CASE("store encoder serves exported vectors and reports missing text") {
    auto dir = scratch_dir("store");
    {
      EmbeddingCache store(dir / "store.bin");
      Vector<double> v(3);
      v << 1, 2, 3;
      store.insert("legal-bert", "known sentence", v);
    }
    StoreEncoder enc(dir / "store.bin", "");
    CHECK(enc.dim() == 3);
    std::vector<std::string> ok{"known sentence", ""};
    MatrixXd m = enc.encode(ok);
    CHECK(m(0, 2) == 3.0);
    CHECK(m.row(1).isZero(0.0));
    std::vector<std::string> bad{"known sentence", "unknown"};
    try {
      enc.encode(bad);
      FAIL("expected EncoderError");
    } catch (const EncoderError& e) {
      CHECK(e.sentence_index() == 1);
    }
  }

  TEST_CASE("concurrent encoding is safe and deterministic") {
    auto dir = scratch_dir("concurrent");
    auto enc = make_encoder("hash", 16, "", dir);
    std::vector<std::string> batch;
    for (int i = 0; i < 50; ++i) batch.push_back("sentence " + std::to_string(i));
    MatrixXd expected = HashEncoder(16).encode(batch);
    std::vector<MatrixXd> results(4);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t) pool.emplace_back([&, t] { results[static_cast<std::size_t>(t)] = enc->encode(batch); });
    for (auto& t : pool) t.join();
    for (const auto& r : results) CHECK(r == expected);
  }

  TEST_CASE("make_encoder checks the dimension") {
    CHECK(make_encoder("hash", 16, "")->dim() == 16);
    CHECK_THROWS_AS(make_encoder("nonsense", 16, ""), ConfigError);
  }
}

#include <doctest.h>

#include "lcmlai/bm25.hpp"

using namespace lcmlai;

namespace {

Bm25Index fixture() {
  Bm25Index idx;
  idx.add("d1", "theft phone night");
  idx.add("d2", "Theft theft fraud");
  idx.add("d3", "phone fraud court court");
  idx.add("d4", "night");
  idx.add("d5", "court theft phone fraud night bail");
  return idx;
}

}  // namespace

TEST_SUITE("bm25") {
  // N = 5, avgdl = 17 / 5 = 3.4, k1 = 1.2, b = 0.75.
  // idf(theft) = idf(fraud) = ln(1 + 2.5 / 3.5) = 0.538997; idf(court) = ln(2.4) = 0.875469.
  // d2, "theft fraud": 0.538997 * 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 3 / 3.4))
  //                  + 0.538997 * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 3 / 3.4)) = 1.332731
  TEST_CASE("five-document fixture matches the hand-computed table") {
    auto idx = fixture();
    auto hits = idx.search("theft fraud", 10);
    const std::vector<std::pair<std::string, double>> table{
        {"d2", 1.332730848663}, {"d5", 0.821118905393}, {"d1", 0.566249132792}, {"d3", 0.502704965771}};
    REQUIRE(hits.size() == table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
      CHECK(hits[i].first == table[i].first);
      CHECK(hits[i].second == doctest::Approx(table[i].second).epsilon(1e-10));
    }
    auto court = idx.search("court", 10);
    REQUIRE(court.size() == 2);
    CHECK(court[0].first == "d3");
    CHECK(court[0].second == doctest::Approx(1.146848713732).epsilon(1e-10));
    CHECK(court[1].second == doctest::Approx(0.666853987312).epsilon(1e-10));
  }

  TEST_CASE("a repeated unique term ranks its document first") {
    auto idx = fixture();
    CHECK(idx.search("bail bail bail", 3).front().first == "d5");
  }

  TEST_CASE("no indexed terms gives an empty result; empty index is an error") {
    auto idx = fixture();
    CHECK(idx.search("unrelated words", 3).empty());
    CHECK_THROWS_AS(Bm25Index().search("theft", 3), ValidationError);
  }

  TEST_CASE("ties break by ascending id, exclusions and k apply") {
    Bm25Index idx;
    idx.add("b", "same text");
    idx.add("a", "same text");
    idx.add("c", "other");
    auto hits = idx.search("same", 5);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].first == "a");
    CHECK(hits[0].second == hits[1].second);
    CHECK(idx.search("same", 1).size() == 1);
    CHECK(idx.search("same", 5, {"a"}).front().first == "b");
  }

  TEST_CASE("bm25_retrieve over a corpus") {
    Corpus c;
    c.cases["x"] = Case{"x", {"The theft of a phone."}, {}, {}};
    c.cases["y"] = Case{"y", {"A fraud case."}, {}, {}};
    CHECK(bm25_retrieve("phone theft", c, 5) == std::vector<std::string>{"x"});
  }
}

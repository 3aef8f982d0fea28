#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>
#include <tuple>

#include "rtfe/dataset.hpp"
#include "test_util.hpp"

using namespace rtfe;
using rtfe_test::TempDir;

TEST_CASE("ingest dedups exact duplicates within a split") {
  TempDir dir;
  auto p = dir.file("train.txt", "a\tp\tb\t1\na\tp\tb\t1\n");
  auto ds = ingest_quadruples(p);
  REQUIRE(ds.split_size(Split::Train) == 1);
}

TEST_CASE("ingest sorts timestamps ascending by numeric label") {
  TempDir dir;
  auto p = dir.file("train.txt", "a\tp\tb\t2\nc\tq\ta\t1\n");
  auto ds = ingest_quadruples(p);
  REQUIRE(ds.timestamp_labels == std::vector<std::string>{"1", "2"});
  REQUIRE(ds.train[0].size() == 1);
  const Quadruple& q = ds.train[0][0];
  CHECK(ds.entities.name(q.s) == "c");
  CHECK(ds.relations.name(q.r) == "q");
  CHECK(ds.entities.name(q.o) == "a");
  CHECK(q.t == 0);
}

TEST_CASE("ingest sorts non-numeric labels lexicographically") {
  TempDir dir;
  auto p = dir.file("train.txt", "a\tp\tb\t2014-05-01\na\tp\tb\t2014-01-02\n");
  auto ds = ingest_quadruples(p);
  REQUIRE(ds.timestamp_labels ==
          std::vector<std::string>{"2014-01-02", "2014-05-01"});
}

TEST_CASE("ingest rejects malformed lines with the line number") {
  TempDir dir;
  auto p = dir.file("train.txt", "a\tp\tb\n");
  REQUIRE_THROWS_WITH(ingest_quadruples(p), Catch::Matchers::ContainsSubstring(":1:"));
}

TEST_CASE("ingest rejects empty files") {
  TempDir dir;
  auto p = dir.file("train.txt", "# only a comment\n");
  REQUIRE_THROWS_AS(ingest_quadruples(p), InputError);
}

TEST_CASE("vocabulary spans all splits jointly") {
  TempDir dir;
  dir.file("train.txt", "a\tp\tb\t1\n");
  dir.file("test.txt", "zz\tq\ta\t1\n");
  auto ds = load_dataset(dir.str());
  CHECK(ds.entities.find("zz").has_value());
  CHECK(ds.relations.find("q").has_value());
  for (const auto& g : ds.test) {
    for (const auto& q : g) {
      CHECK(q.s < ds.entities.size());
      CHECK(q.r < ds.relations.size());
      CHECK(q.o < ds.entities.size());
    }
  }
}

TEST_CASE("write then re-ingest yields index-isomorphic splits") {
  TempDir src;
  src.file("train.txt", "a\tp\tb\t3\nb\tp\tc\t1\na\tq\tc\t1\n");
  src.file("valid.txt", "c\tp\ta\t3\n");
  src.file("test.txt", "b\tq\ta\t1\n");
  auto ds = load_dataset(src.str());

  TempDir dst;
  write_dataset(ds, dst.str());
  auto ds2 = load_dataset(dst.str());

  REQUIRE(ds2.num_timestamps() == ds.num_timestamps());
  for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
    for (size_t t = 0; t < ds.num_timestamps(); ++t) {
      auto names = [&](const TemporalDataset& d, const std::vector<Quadruple>& g) {
        std::set<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& q : g) {
          out.insert({d.entities.name(q.s), d.relations.name(q.r), d.entities.name(q.o)});
        }
        return out;
      };
      CHECK(names(ds, ds.split(sp)[t]) == names(ds2, ds2.split(sp)[t]));
    }
  }
}

TEST_CASE("collapse_static unions and dedups") {
  TempDir dir;
  dir.file("train.txt", "a\tp\tb\t1\na\tp\tb\t2\nc\tq\ta\t2\n");
  auto ds = load_dataset(dir.str());
  auto g = collapse_static(ds);
  REQUIRE(g.triples.size() == 2);
}

TEST_CASE("collapse_static of a single-timestamp dataset is the identity") {
  TempDir dir;
  dir.file("train.txt", "a\tp\tb\t1\nb\tp\tc\t1\n");
  auto ds = load_dataset(dir.str());
  auto g = collapse_static(ds);
  REQUIRE(g.triples.size() == ds.train[0].size());
}

TEST_CASE("collapse_static on a 3-timestamp set with shared facts") {
  // 10 facts per timestamp, 4 shared across all three: union has
  // 4 + 3*6 = 22 distinct triples.
  std::ostringstream content;
  for (int t = 1; t <= 3; ++t) {
    for (int i = 0; i < 4; ++i) content << "s" << i << "\tp\to" << i << '\t' << t << '\n';
    for (int i = 0; i < 6; ++i) {
      content << "t" << t << "s" << i << "\tp\to" << i << '\t' << t << '\n';
    }
  }
  TempDir dir;
  dir.file("train.txt", content.str());
  auto ds = load_dataset(dir.str());
  REQUIRE(ds.split_size(Split::Train) == 30);

  // Independent enumeration of the union.
  std::set<std::tuple<std::string, std::string, std::string>> expected;
  for (int t = 1; t <= 3; ++t) {
    for (int i = 0; i < 4; ++i) expected.insert({"s" + std::to_string(i), "p", "o" + std::to_string(i)});
    for (int i = 0; i < 6; ++i) {
      expected.insert({"t" + std::to_string(t) + "s" + std::to_string(i), "p",
                       "o" + std::to_string(i)});
    }
  }
  REQUIRE(expected.size() == 22);
  auto g = collapse_static(ds);
  CHECK(g.triples.size() == expected.size());
}

TEST_CASE("collapse_static is idempotent over repeated application") {
  TempDir dir;
  dir.file("train.txt", "a\tp\tb\t1\nb\tq\tc\t2\na\tp\tb\t3\n");
  auto ds = load_dataset(dir.str());
  auto g1 = collapse_static(ds);
  auto g2 = collapse_static(ds);
  CHECK(g1.triples == g2.triples);
}

TEST_CASE("bin_timestamps: single interval spans all bins at threshold 0") {
  std::vector<IntervalFact> facts{{"a", "p", "b", 2000, 2002}};
  auto binned = bin_timestamps(facts, 0);
  REQUIRE(binned.bin_labels.size() == 3);
  for (const auto& bin : binned.facts_per_bin) {
    REQUIRE(bin.size() == 1);
  }
}

TEST_CASE("bin_timestamps: facts within one bin give one timestamp") {
  std::vector<IntervalFact> facts;
  for (int i = 0; i < 5; ++i) facts.push_back({"a" + std::to_string(i), "p", "b", 2000, 2000});
  auto binned = bin_timestamps(facts, 3);
  REQUIRE(binned.bin_labels.size() == 1);
  REQUIRE(binned.facts_per_bin[0].size() == 5);
}

TEST_CASE("bin_timestamps: threshold too high is an error") {
  std::vector<IntervalFact> facts{{"a", "p", "b", 2000, 2001}};
  REQUIRE_THROWS_WITH(bin_timestamps(facts, 300),
                      Catch::Matchers::ContainsSubstring("threshold"));
}

TEST_CASE("bin_timestamps conserves fact copies") {
  // Sum over bins >= number of facts, equality iff no interval crosses a
  // boundary.
  std::vector<IntervalFact> facts;
  for (int i = 0; i < 10; ++i) facts.push_back({"x" + std::to_string(i), "p", "y", 2000, 2000});
  for (int i = 0; i < 10; ++i) facts.push_back({"z" + std::to_string(i), "p", "y", 2001, 2001});
  auto binned = bin_timestamps(facts, 5);
  size_t total = 0;
  for (const auto& b : binned.facts_per_bin) total += b.size();
  REQUIRE(total == facts.size());  // no interval crosses a boundary here

  facts.push_back({"span", "p", "y", 2000, 2001});
  auto binned2 = bin_timestamps(facts, 5);
  total = 0;
  for (const auto& b : binned2.facts_per_bin) total += b.size();
  REQUIRE(total == facts.size() + 1);  // the spanning fact lands in both bins
}

TEST_CASE("open end years clamp to the corpus maximum") {
  std::vector<IntervalFact> facts;
  for (int i = 0; i < 5; ++i) facts.push_back({"a" + std::to_string(i), "p", "b", 2000, 2000});
  for (int i = 0; i < 5; ++i) facts.push_back({"c" + std::to_string(i), "p", "b", 2005, 2005});
  facts.push_back({"open", "p", "b", 2000, std::nullopt});
  auto binned = bin_timestamps(facts, 4);
  // The open fact must reach the last bin.
  bool found = false;
  for (const auto& f : binned.facts_per_bin.back()) {
    if (f.s == "open") found = true;
  }
  CHECK(found);
}

TEST_CASE("interval file parsing handles #### and rejects bad rows") {
  TempDir dir;
  auto p = dir.file("facts.txt", "a\tp\tb\t1990\t####\nc\tq\td\t1980\t1985\n");
  auto facts = read_interval_facts(p);
  REQUIRE(facts.size() == 2);
  CHECK(!facts[0].end_year.has_value());
  CHECK(facts[1].end_year == 1985);

  auto bad = dir.file("bad.txt", "a\tp\tb\t1990\t1980\n");
  REQUIRE_THROWS_AS(read_interval_facts(bad), InputError);
}

#include <catch2/catch_amalgamated.hpp>

#include "rtfe/evaluator.hpp"
#include "rtfe/synth.hpp"
#include "test_util.hpp"

using namespace rtfe;
using rtfe_test::TempDir;

namespace {

/// 5 entities, 2 relations, 1 timestamp, hand-set embeddings.
struct ToyWorld {
  TemporalDataset ds;
  ScorerSpec spec;
  StateVector st;

  ToyWorld() {
    for (int i = 0; i < 5; ++i) ds.entities.intern("e" + std::to_string(i));
    ds.relations.intern("r0");
    ds.relations.intern("r1");
    ds.timestamp_labels = {"0"};
    ds.train = {{{0, 0, 1, 0}, {1, 0, 2, 0}, {2, 1, 3, 0}}};
    ds.valid = {{{3, 0, 4, 0}}};
    ds.test = {{{0, 1, 4, 0}, {4, 0, 0, 0}}};

    spec.family = Family::TransE;
    spec.d = 4;
    st = init_state(spec, 5, 2, 1, 31);
  }
};

}  // namespace

TEST_CASE("rank 1 when the query outscores every candidate") {
  ToyWorld w;
  // Make e0 + r1 == e4 exactly, and push all other entities far away.
  for (size_t j = 0; j < 4; ++j) {
    w.st.entity_features.at(4, j) = w.st.entity_features.at(0, j) +
                                    w.st.relation_features.at(1, j);
  }
  for (size_t i : {1, 2, 3}) {
    for (size_t j = 0; j < 4; ++j) w.st.entity_features.at(i, j) = 100.0 + 10.0 * i;
  }
  FilterIndex filter(w.ds);
  CHECK(rank_query(w.st, w.spec, {0, 1, 4, 0}, Slot::Tail, filter) == 1);
}

TEST_CASE("all-equal scores give the expected tie rank") {
  // Constant-score state: every entity row identical, relation zero.
  ToyWorld w;
  for (size_t i = 0; i < 5; ++i) {
    for (size_t j = 0; j < 4; ++j) w.st.entity_features.at(i, j) = 0.5;
  }
  for (size_t i = 0; i < 2; ++i) {
    for (size_t j = 0; j < 4; ++j) w.st.relation_features.at(i, j) = 0.0;
  }
  TemporalDataset empty_ds;  // nothing filtered
  for (int i = 0; i < 5; ++i) empty_ds.entities.intern("e" + std::to_string(i));
  empty_ds.relations.intern("r0");
  empty_ds.relations.intern("r1");
  empty_ds.timestamp_labels = {"0"};
  empty_ds.train.resize(1);
  empty_ds.valid.resize(1);
  empty_ds.test.resize(1);
  FilterIndex filter(empty_ds);
  // m = 4 candidates all tie -> rank 1 + floor(4/2) = 3.
  CHECK(rank_query(w.st, w.spec, {0, 1, 4, 0}, Slot::Tail, filter) == 3);
}

TEST_CASE("evaluator ranks match the brute-force oracle on the toy world") {
  ToyWorld w;
  FilterIndex filter(w.ds);
  for (const auto& q : w.ds.test[0]) {
    for (Slot slot : {Slot::Head, Slot::Tail, Slot::Relation}) {
      CHECK(rank_query(w.st, w.spec, q, slot, filter) ==
            oracle_rank(w.st, w.spec, q, slot, w.ds));
    }
  }
}

TEST_CASE("adding a true quadruple to the filter never increases a rank") {
  ToyWorld w;
  FilterIndex sparse(w.ds);
  TemporalDataset more = w.ds;
  more.train[0].push_back({1, 1, 4, 0});
  more.train[0].push_back({2, 1, 4, 0});
  FilterIndex dense(more);
  for (const auto& q : w.ds.test[0]) {
    for (Slot slot : {Slot::Head, Slot::Tail, Slot::Relation}) {
      CHECK(rank_query(w.st, w.spec, q, slot, dense) <=
            rank_query(w.st, w.spec, q, slot, sparse));
    }
  }
}

TEST_CASE("rank bounds hold") {
  ToyWorld w;
  FilterIndex filter(w.ds);
  for (const auto& q : w.ds.test[0]) {
    uint32_t r = rank_query(w.st, w.spec, q, Slot::Tail, filter);
    CHECK(r >= 1);
    CHECK(r <= 5);  // |V| - nothing filtered beyond own = 4 candidates + 1
  }
}

TEST_CASE("filter scope: global excludes candidates true at any timestamp") {
  TemporalDataset ds;
  ds.entities.intern("a");
  ds.entities.intern("b");
  ds.entities.intern("c");
  ds.relations.intern("p");
  ds.timestamp_labels = {"0", "1"};
  // (a,p,b) true at t=0 only; query (a,p,c) at t=1.
  ds.train = {{{0, 0, 1, 0}}, {{0, 0, 2, 1}}};
  ds.valid.resize(2);
  ds.test.resize(2);

  ScorerSpec spec;
  spec.family = Family::TransE;
  spec.d = 4;
  auto st = init_state(spec, 3, 1, 2, 3);
  // b = a + p exactly (best tail), c = a + p + 0.01 (close second),
  // and a far from both.
  for (size_t j = 0; j < 4; ++j) {
    st.entity_features.at(0, j) = 0.0;
    st.relation_features.at(0, j) = 5.0;
    st.entity_features.at(1, j) = 5.0;
    st.entity_features.at(2, j) = 5.01;
  }
  Quadruple q{0, 0, 2, 1};
  FilterIndex per_t(ds, FilterScope::Timestamp);
  FilterIndex global(ds, FilterScope::Global);
  uint32_t rank_t = rank_query(st, spec, q, Slot::Tail, per_t);
  uint32_t rank_g = rank_query(st, spec, q, Slot::Tail, global);
  CHECK(rank_t == 2);  // b counts against the query at t=1
  CHECK(rank_g == 1);  // b is filtered because (a,p,b) is true somewhere
}

TEST_CASE("metric arithmetic for ranks [1, 3, 11]") {
  detail::RankTriple r1{1, 1, 1}, r2{3, 3, 1}, r3{11, 11, 2};
  auto rec = detail::record_from_ranks(0, {r1, r2, r3});
  CHECK(rec.hits10_head == Catch::Approx(2.0 / 3));
  CHECK(rec.hits1_head == Catch::Approx(1.0 / 3));
  CHECK(rec.mrr_head == Catch::Approx((1.0 + 1.0 / 3 + 1.0 / 11) / 3));
  CHECK(rec.mr_head == Catch::Approx(5.0));
  CHECK(rec.hits3_head == Catch::Approx(2.0 / 3));
  CHECK(rec.rel_mr == Catch::Approx(4.0 / 3));
}

TEST_CASE("perfect ranks give perfect metrics") {
  detail::RankTriple r{1, 1, 1};
  auto rec = detail::record_from_ranks(0, {r, r});
  CHECK(rec.mrr() == 1.0);
  CHECK(rec.hits1() == 1.0);
  CHECK(rec.hits10() == 1.0);
  CHECK(rec.mr_head == 1.0);
}

TEST_CASE("weighted aggregation follows the size-weighted formula") {
  TimestampRecord a, b;
  a.count = 2;
  a.mrr_head = a.mrr_tail = 0.5;
  b.count = 3;
  b.mrr_head = b.mrr_tail = 1.0;
  auto agg = aggregate({a, b});
  CHECK(agg.mrr() == Catch::Approx(0.8).margin(1e-15));
  CHECK(agg.count == 5);
}

TEST_CASE("aggregate of one record is that record") {
  TimestampRecord a;
  a.count = 4;
  a.mrr_head = 0.25;
  a.hits10_tail = 0.75;
  a.rel_mr = 2.5;
  auto agg = aggregate({a});
  CHECK(agg.mrr_head == a.mrr_head);
  CHECK(agg.hits10_tail == a.hits10_tail);
  CHECK(agg.rel_mr == a.rel_mr);
}

TEST_CASE("aggregate rejects all-empty records") {
  TimestampRecord a;
  a.count = 0;
  CHECK_THROWS_AS(aggregate({a}), InputError);
}

TEST_CASE("aggregate equals pooled-rank computation") {
  // Build per-timestamp records from explicit rank lists, then compare with
  // the metrics over all ranks pooled.
  std::vector<std::vector<detail::RankTriple>> per_t = {
      {{1, 2, 1}, {4, 1, 2}},
      {{2, 7, 1}, {1, 1, 1}, {12, 3, 2}},
      {{5, 5, 3}},
  };
  std::vector<TimestampRecord> records;
  std::vector<detail::RankTriple> pooled;
  for (uint32_t t = 0; t < per_t.size(); ++t) {
    records.push_back(detail::record_from_ranks(t, per_t[t]));
    pooled.insert(pooled.end(), per_t[t].begin(), per_t[t].end());
  }
  auto agg = aggregate(records);
  auto direct = detail::record_from_ranks(0, pooled);
  CHECK(agg.mrr_head == Catch::Approx(direct.mrr_head).margin(1e-12));
  CHECK(agg.mrr_tail == Catch::Approx(direct.mrr_tail).margin(1e-12));
  CHECK(agg.mr_head == Catch::Approx(direct.mr_head).margin(1e-12));
  CHECK(agg.hits10_head == Catch::Approx(direct.hits10_head).margin(1e-12));
  CHECK(agg.hits1_tail == Catch::Approx(direct.hits1_tail).margin(1e-12));
  CHECK(agg.rel_mr == Catch::Approx(direct.rel_mr).margin(1e-12));
  CHECK(agg.rel_hits1 == Catch::Approx(direct.rel_hits1).margin(1e-12));
}

TEST_CASE("empty test graph yields a zero-count record excluded from aggregation") {
  ToyWorld w;
  FilterIndex filter(w.ds);
  auto rec = evaluate_timestamp(w.st, w.spec, {}, filter);
  CHECK(rec.count == 0);
  auto rep = make_report({rec});
  CHECK(rep.empty());
}

TEST_CASE("hits is non-decreasing in n and MRR bounded by hits ordering") {
  ToyWorld w;
  FilterIndex filter(w.ds);
  auto rec = evaluate_timestamp(w.st, w.spec, w.ds.test[0], filter);
  CHECK(rec.hits1() <= rec.hits3());
  CHECK(rec.hits3() <= rec.hits10());
  CHECK(rec.mrr() > 0.0);
  CHECK(rec.mrr() <= 1.0);
  CHECK(rec.hits1() <= rec.mrr());
}

TEST_CASE("score-shift invariance of ranks") {
  // Adding a constant to every entity row leaves TransE candidate scores,
  // and therefore ranks, unchanged.
  ToyWorld w;
  FilterIndex filter(w.ds);
  StateVector shifted = w.st;
  for (size_t i = 0; i < shifted.entity_features.rows(); ++i) {
    for (size_t j = 0; j < 4; ++j) shifted.entity_features.at(i, j) += 1.23;
  }
  for (const auto& q : w.ds.test[0]) {
    for (Slot slot : {Slot::Head, Slot::Tail, Slot::Relation}) {
      CHECK(rank_query(w.st, w.spec, q, slot, filter) ==
            rank_query(shifted, w.spec, q, slot, filter));
    }
  }
}

TEST_CASE("parallel evaluation matches serial") {
  SynthProfile p;
  p.seed = 4;
  auto ds = generate(p);
  ScorerSpec spec;
  spec.family = Family::ComplEx;
  spec.d = 16;
  auto st = init_state(spec, ds.entities.size(), ds.relations.size(), ds.num_timestamps(), 8);
  FilterIndex filter(ds);
  auto serial = evaluate_timestamp(st, spec, ds.test[0], filter, 1);
  auto parallel = evaluate_timestamp(st, spec, ds.test[0], filter, 4);
  CHECK(serial.mrr_head == parallel.mrr_head);
  CHECK(serial.mrr_tail == parallel.mrr_tail);
  CHECK(serial.rel_mr == parallel.rel_mr);
}

TEST_CASE("report round-trips through the TSV format") {
  TempDir dir;
  detail::RankTriple r1{1, 2, 1}, r2{4, 1, 2};
  auto rep = make_report({detail::record_from_ranks(0, {r1, r2}),
                          detail::record_from_ranks(1, {r2})});
  std::string path = (dir.path / "report.tsv").string();
  write_report(rep, path);
  auto rep2 = read_report(path);
  REQUIRE(rep2.records.size() == 2);
  CHECK(rep2.aggregate.mrr_head == rep.aggregate.mrr_head);
  CHECK(rep2.records[0].mrr_tail == rep.records[0].mrr_tail);
  CHECK(rep2.records[1].count == rep.records[1].count);

  // write -> read -> write is byte-identical
  std::string path2 = (dir.path / "report2.tsv").string();
  write_report(rep2, path2);
  CHECK(rtfe_test::read_bytes(path) == rtfe_test::read_bytes(path2));
}

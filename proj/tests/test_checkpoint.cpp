#include <catch2/catch_amalgamated.hpp>

#include "rtfe/checkpoint.hpp"
#include "rtfe/synth.hpp"
#include "test_util.hpp"

using namespace rtfe;
using rtfe_test::TempDir;

namespace {

StateVector make_state(Family f, uint64_t seed, bool with_opt) {
  ScorerSpec spec;
  spec.family = f;
  spec.d = 8;
  auto st = init_state(spec, 7, 3, 4, seed);
  if (with_opt) {
    // Run one adagrad step so accumulators exist and are non-trivial.
    Rng rng(seed + 1);
    SampleBatch b;
    b.positives.push_back({0, 0, 1, 0});
    Quadruple neg{0, 0, 2, 0};
    b.negatives.push_back({{neg, Slot::Tail}});
    auto [loss, grad] = loss_and_grad(st, spec, b);
    sgd_step(st, grad, 0.1, Optimizer::Adagrad);
  }
  return st;
}

}  // namespace

TEST_CASE("write -> read -> write produces byte-identical files") {
  TempDir dir;
  int i = 0;
  for (Family f : {Family::TransE, Family::RotatE, Family::ComplEx, Family::TComplEx,
                   Family::DESimplE}) {
    for (bool with_opt : {false, true}) {
      auto st = make_state(f, 100 + i, with_opt);
      std::string p1 = (dir.path / ("a" + std::to_string(i) + ".rtfe")).string();
      std::string p2 = (dir.path / ("b" + std::to_string(i) + ".rtfe")).string();
      write_checkpoint(st, p1);
      auto st2 = read_checkpoint(p1);
      write_checkpoint(st2, p2);
      INFO(family_name(f) << " with_opt=" << with_opt);
      CHECK(rtfe_test::read_bytes(p1) == rtfe_test::read_bytes(p2));
      ++i;
    }
  }
}

TEST_CASE("read recovers the spec and shapes") {
  TempDir dir;
  auto st = make_state(Family::TComplEx, 9, true);
  st.fitted_timestamp = 2;
  std::string p = (dir.path / "c.rtfe").string();
  write_checkpoint(st, p);
  auto st2 = read_checkpoint(p);
  CHECK(st2.spec.family == Family::TComplEx);
  CHECK(st2.spec.d == 8);
  CHECK(st2.fitted_timestamp == 2);
  CHECK(st2.num_timestamps == st.num_timestamps);
  CHECK(st2.entity_features.rows() == st.entity_features.rows());
  CHECK(st2.entity_features.cols() == st.entity_features.cols());
  CHECK(st2.timestamp_features.rows() == st.timestamp_features.rows());
  CHECK(!st2.optimizer_state.empty());
}

TEST_CASE("values survive the float32 round trip within float precision") {
  TempDir dir;
  auto st = make_state(Family::ComplEx, 4, false);
  std::string p = (dir.path / "d.rtfe").string();
  write_checkpoint(st, p);
  auto st2 = read_checkpoint(p);
  for (size_t i = 0; i < st.entity_features.data().size(); ++i) {
    double a = st.entity_features.data()[i];
    double b = st2.entity_features.data()[i];
    CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("RotatE phases are wrapped into (-pi, pi] on write") {
  TempDir dir;
  auto st = make_state(Family::RotatE, 5, false);
  // Push some phases far out of range; the file must still hold the same
  // rotation.
  st.relation_features.at(0, 0) = 7.5 * M_PI;
  st.relation_features.at(1, 1) = -11.0;
  std::string p = (dir.path / "e.rtfe").string();
  write_checkpoint(st, p);
  auto st2 = read_checkpoint(p);
  for (size_t i = 0; i < st2.relation_features.rows(); ++i) {
    for (size_t j = 0; j < st2.relation_features.cols(); ++j) {
      double v = st2.relation_features.at(i, j);
      CHECK(v > -M_PI - 1e-9);
      CHECK(v <= M_PI + 1e-9);
      double orig = st.relation_features.at(i, j);
      CHECK(std::abs(std::remainder(orig - v, 2.0 * M_PI)) < 1e-6);
    }
  }
  // Wrapping must not change scores.
  Quadruple q{0, 0, 1, 0};
  CHECK(score(st2, st2.spec, q) == Catch::Approx(score(st, st.spec, q)).margin(1e-5));
}

TEST_CASE("garbage and truncated files are rejected") {
  TempDir dir;
  auto bad = dir.file("bad.rtfe", "not a checkpoint at all");
  CHECK_THROWS_AS(read_checkpoint(bad), InputError);

  auto st = make_state(Family::TransE, 6, false);
  std::string p = (dir.path / "f.rtfe").string();
  write_checkpoint(st, p);
  std::string bytes = rtfe_test::read_bytes(p);
  auto trunc = dir.file("trunc.rtfe", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(trunc), InputError);

  CHECK_THROWS_AS(read_checkpoint((dir.path / "missing.rtfe").string()), InputError);
}

TEST_CASE("vocab sidecar lists every symbol with kind and index") {
  TempDir dir;
  SynthProfile prof;
  prof.num_entities = 5;
  prof.num_relations = 2;
  prof.num_timestamps = 2;
  prof.facts_per_timestamp = 10;
  auto ds = generate(prof);
  std::string p = (dir.path / "vocab.tsv").string();
  write_vocab_sidecar(ds, p);
  std::string text = rtfe_test::read_bytes(p);
  size_t lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == ds.entities.size() + ds.relations.size() + ds.timestamp_labels.size());
  CHECK(text.find("entity\t0\te0") != std::string::npos);
  CHECK(text.find("relation\t1\tr1") != std::string::npos);
  CHECK(text.find("timestamp\t1\t1") != std::string::npos);
}

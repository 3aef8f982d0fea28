#pragma once

#include <algorithm>
#include <set>
#include <unordered_set>
#include <vector>

#include "rtfe/dataset.hpp"
#include "rtfe/evaluator.hpp"
#include "rtfe/scorers.hpp"

namespace rtfe {

/// Controls the synthetic temporal KG generator: world size, how many facts
/// persist between adjacent timestamps, and how fast the planted latent
/// embeddings drift.
struct SynthProfile {
  size_t num_entities = 50;
  size_t num_relations = 5;
  size_t num_timestamps = 10;
  size_t facts_per_timestamp = 200;
  double continuity = 0.8;     // fraction of facts copied forward per step
  double drift_step = 0.02;    // latent random-walk step size
  double test_fraction = 0.1;  // valid gets the same fraction
  size_t latent_dim = 16;      // planted embedding dimension (complex pairs)
  uint64_t seed = 0;

  void validate() const {
    if (num_entities < 2 || num_relations < 1 || num_timestamps < 1) {
      throw InputError("synth profile: world too small");
    }
    if (continuity < 0.0 || continuity > 1.0) throw InputError("continuity must lie in [0,1]");
    if (test_fraction < 0.0 || test_fraction > 0.4) {
      throw InputError("test_fraction must lie in [0, 0.4]");
    }
    if (facts_per_timestamp < 1) throw InputError("facts_per_timestamp must be positive");
    if (facts_per_timestamp > num_entities * num_entities * num_relations / 2) {
      throw InputError("facts_per_timestamp infeasible for this world size");
    }
    if (latent_dim % 2 != 0) throw InputError("latent_dim must be even");
  }
};

namespace synth_detail {

/// Planted scoring model: ComplEx over latent embeddings, chosen because it
/// realizes both symmetric and antisymmetric relations.
struct Latents {
  Matrix entities;   // |V| x latent_dim (first half real, second half imag)
  Matrix relations;  // |R| x latent_dim

  double score(uint32_t s, uint32_t r, uint32_t o) const {
    auto es = entities.row(s);
    auto er = relations.row(r);
    auto eo = entities.row(o);
    size_t nc = es.size() / 2;
    double acc = 0.0;
    for (size_t j = 0; j < nc; ++j) {
      double ar = es[j] * er[j] - es[nc + j] * er[nc + j];
      double ai = es[j] * er[nc + j] + es[nc + j] * er[j];
      acc += ar * eo[j] + ai * eo[nc + j];
    }
    return acc;
  }
};

inline Latents init_latents(const SynthProfile& p, Rng& rng) {
  Latents l;
  l.entities = Matrix(p.num_entities, p.latent_dim);
  l.relations = Matrix(p.num_relations, p.latent_dim);
  double scale = 1.0 / std::sqrt(static_cast<double>(p.latent_dim / 2));
  for (double& v : l.entities.data()) v = rng.normal() * scale;
  for (double& v : l.relations.data()) v = rng.normal() * scale;
  return l;
}

inline void drift(Latents& l, double step, Rng& rng) {
  for (double& v : l.entities.data()) v += rng.normal() * step;
  for (double& v : l.relations.data()) v += rng.normal() * step;
}

/// Top facts_per_timestamp triples by planted score, excluding self-loops.
inline std::vector<Triple> top_triples(const SynthProfile& p, const Latents& l) {
  std::vector<std::pair<double, Triple>> scored;
  scored.reserve(p.num_entities * p.num_entities * p.num_relations);
  for (uint32_t s = 0; s < p.num_entities; ++s) {
    for (uint32_t r = 0; r < p.num_relations; ++r) {
      for (uint32_t o = 0; o < p.num_entities; ++o) {
        if (s == o) continue;
        scored.emplace_back(l.score(s, r, o), Triple{s, r, o});
      }
    }
  }
  size_t k = std::min(p.facts_per_timestamp, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<Triple> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace synth_detail

/// Generates a temporal KG from planted latent embeddings that random-walk
/// across timestamps. Each timestamp keeps a `continuity` fraction of the
/// previous timestamp's facts and fills the rest from the current latents'
/// highest-scoring triples. Deterministic per seed. When `planted` is given
/// it receives a snapshot of the latents at every timestamp.
inline TemporalDataset generate(const SynthProfile& profile,
                                std::vector<synth_detail::Latents>* planted = nullptr) {
  profile.validate();
  Rng rng(profile.seed);
  synth_detail::Latents latents = synth_detail::init_latents(profile, rng);

  TemporalDataset ds;
  for (uint32_t v = 0; v < profile.num_entities; ++v) ds.entities.intern("e" + std::to_string(v));
  for (uint32_t r = 0; r < profile.num_relations; ++r) {
    ds.relations.intern("r" + std::to_string(r));
  }
  size_t n = profile.num_timestamps;
  size_t width = std::to_string(n).size();
  for (size_t t = 0; t < n; ++t) {
    std::string label = std::to_string(t);
    ds.timestamp_labels.push_back(std::string(width - label.size(), '0') + label);
  }
  ds.train.resize(n);
  ds.valid.resize(n);
  ds.test.resize(n);

  std::vector<Triple> prev;
  for (uint32_t t = 0; t < n; ++t) {
    if (t > 0) synth_detail::drift(latents, profile.drift_step, rng);
    if (planted) planted->push_back(latents);
    std::set<Triple> facts;
    if (t > 0 && profile.continuity > 0.0) {
      size_t keep = static_cast<size_t>(std::llround(profile.continuity *
                                                     static_cast<double>(prev.size())));
      std::vector<Triple> pool = prev;
      rng.shuffle(pool);
      for (size_t i = 0; i < keep && i < pool.size(); ++i) facts.insert(pool[i]);
    }
    for (const Triple& tr : synth_detail::top_triples(profile, latents)) {
      if (facts.size() >= profile.facts_per_timestamp) break;
      facts.insert(tr);
    }
    prev.assign(facts.begin(), facts.end());

    // Split: test and valid each get test_fraction of the facts; an entity
    // must stay covered by train somewhere, so held-out facts whose subject
    // or object would otherwise vanish from train are kept in train.
    std::vector<Triple> order = prev;
    rng.shuffle(order);
    size_t n_test = static_cast<size_t>(profile.test_fraction * order.size());
    std::vector<size_t> use_count(profile.num_entities, 0);
    for (const Triple& tr : order) {
      ++use_count[tr.s];
      ++use_count[tr.o];
    }
    size_t held = 0;
    for (const Triple& tr : order) {
      Quadruple q{tr.s, tr.r, tr.o, t};
      bool can_hold = held < 2 * n_test && use_count[tr.s] > 1 && use_count[tr.o] > 1;
      if (can_hold) {
        (held < n_test ? ds.test[t] : ds.valid[t]).push_back(q);
        ++held;
        --use_count[tr.s];
        --use_count[tr.o];
      } else {
        ds.train[t].push_back(q);
      }
    }
    detail::sort_dedup(ds.train[t]);
    detail::sort_dedup(ds.valid[t]);
    detail::sort_dedup(ds.test[t]);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Independent oracles. These deliberately re-derive ranking and gradients
// from scratch and share no scoring or filtering shortcuts with the
// evaluator beyond the public score() function they are checking against.

/// Brute-force filtered rank: enumerates every candidate quadruple, asks the
/// dataset-derived truth set directly, and applies the expected-rank tie
/// rule. |V| must stay within the enumeration budget.
inline uint32_t oracle_rank(const StateVector& st, const ScorerSpec& spec, const Quadruple& q,
                            Slot slot, const TemporalDataset& ds,
                            FilterScope scope = FilterScope::Timestamp) {
  if (st.entity_features.rows() > 1000) throw InputError("oracle_rank: vocabulary too large");

  // Truth lookup straight off the dataset, no index structure.
  auto is_true = [&](const Quadruple& c) {
    for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
      for (const auto& g : ds.split(sp)) {
        for (const auto& f : g) {
          bool same_t = scope == FilterScope::Timestamp ? f.t == c.t : true;
          if (f.s == c.s && f.r == c.r && f.o == c.o && same_t) return true;
        }
      }
    }
    return false;
  };

  double target = score(st, spec, q);
  size_t ncand = slot == Slot::Relation ? st.relation_features.rows() : st.entity_features.rows();
  uint32_t original = slot == Slot::Head ? q.s : (slot == Slot::Tail ? q.o : q.r);
  uint32_t better = 0, ties = 0;
  for (uint32_t cand = 0; cand < ncand; ++cand) {
    if (cand == original) continue;
    Quadruple c = q;
    if (slot == Slot::Head) c.s = cand;
    if (slot == Slot::Tail) c.o = cand;
    if (slot == Slot::Relation) c.r = cand;
    if (is_true(c)) continue;
    double sc = score(st, spec, c);
    if (sc > target) ++better;
    if (sc == target) ++ties;
  }
  return 1 + better + ties / 2;
}

/// Central finite differences of the batch loss over every touched
/// coordinate: (l(x+h) - l(x-h)) / 2h.
inline SparseGrad fd_gradient(const StateVector& st, const ScorerSpec& spec,
                              const SampleBatch& batch, double h = 1e-5) {
  if (h < 1e-7 || h > 1e-3) throw InputError("fd_gradient: h out of range");
  auto [_, analytic] = loss_and_grad(st, spec, batch);
  StateVector work = st;
  SparseGrad fd;
  for (const auto& [key, row] : analytic.entries()) {
    MatId m = SparseGrad::key_mat(key);
    uint32_t r = SparseGrad::key_row(key);
    auto& out = fd.row(m, r, row.size());
    for (size_t j = 0; j < row.size(); ++j) {
      double saved = work.mat(m).row(r)[j];
      work.mat(m).row(r)[j] = saved + h;
      double up = loss_and_grad(work, spec, batch).first;
      work.mat(m).row(r)[j] = saved - h;
      double down = loss_and_grad(work, spec, batch).first;
      work.mat(m).row(r)[j] = saved;
      out[j] = (up - down) / (2.0 * h);
    }
  }
  return fd;
}

}  // namespace rtfe

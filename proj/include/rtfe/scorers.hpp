#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtfe/core.hpp"

namespace rtfe {

enum class Family { TransE, RotatE, ComplEx, TComplEx, DESimplE };
enum class Norm { L1, L2 };
enum class Optimizer { Sgd, Adagrad };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::TransE: return "TransE";
    case Family::RotatE: return "RotatE";
    case Family::ComplEx: return "ComplEx";
    case Family::TComplEx: return "TComplEx";
    default: return "DE-SimplE";
  }
}

inline std::optional<Family> family_from_name(const std::string& s) {
  for (Family f : {Family::TransE, Family::RotatE, Family::ComplEx, Family::TComplEx,
                   Family::DESimplE}) {
    if (family_name(f) == s) return f;
  }
  if (s == "DESimplE" || s == "DE_SimplE" || s == "de-simple") return Family::DESimplE;
  return std::nullopt;
}

/// Model family plus the knobs that fix its score and loss.
struct ScorerSpec {
  Family family = Family::TransE;
  uint32_t d = 64;
  Norm norm = Norm::L2;             // TransE only
  double margin = 6.0;              // translational families
  double temporal_fraction = 0.64;  // DE-SimplE only
  double n3_weight = 0.0;           // ComplEx / TComplEx
  double adv_temperature = 0.0;     // >0 enables self-adversarial negative weighting

  bool complex_valued() const {
    return family == Family::RotatE || family == Family::ComplEx || family == Family::TComplEx;
  }
  bool softmax_loss() const {
    return family == Family::ComplEx || family == Family::TComplEx || family == Family::DESimplE;
  }
  uint32_t temporal_dims() const {
    return static_cast<uint32_t>(std::ceil(temporal_fraction * d));
  }
  uint32_t entity_dim() const { return family == Family::DESimplE ? 2 * d : d; }
  uint32_t relation_dim() const {
    if (family == Family::RotatE) return d / 2;
    if (family == Family::DESimplE) return 2 * d;
    return d;
  }
  uint32_t timestamp_dim() const { return family == Family::TComplEx ? d : 0; }

  void validate() const {
    if (d == 0) throw InputError("dimension must be positive");
    if (complex_valued() && d % 2 != 0) {
      throw InputError(family_name(family) + " requires an even dimension");
    }
    if (temporal_fraction < 0.0 || temporal_fraction > 1.0) {
      throw InputError("temporal_fraction must lie in [0,1]");
    }
    if (n3_weight < 0.0) throw InputError("n3_weight must be non-negative");
  }
};

enum class MatId : uint8_t { Entity = 0, Relation = 1, Timestamp = 2, DeAmp = 3, DeFreq = 4, DePhase = 5 };
constexpr size_t kNumMats = 6;

/// The state vector [theta, X]: scorer parameters plus feature matrices,
/// tagged with the timestamp it fits.
struct StateVector {
  ScorerSpec spec;
  Matrix entity_features;     // |V| x entity_dim
  Matrix relation_features;   // |R| x relation_dim
  Matrix timestamp_features;  // |T| x d (TComplEx only)
  Matrix de_amplitude;        // |V| x 2*dt (DE-SimplE only)
  Matrix de_frequency;
  Matrix de_phase;
  std::vector<Matrix> optimizer_state;  // adagrad accumulators, one per matrix, lazily allocated
  int64_t fitted_timestamp = -1;        // -1 = "static"
  uint32_t num_timestamps = 1;          // |T|; scales DE-SimplE time input

  Matrix& mat(MatId id) {
    switch (id) {
      case MatId::Entity: return entity_features;
      case MatId::Relation: return relation_features;
      case MatId::Timestamp: return timestamp_features;
      case MatId::DeAmp: return de_amplitude;
      case MatId::DeFreq: return de_frequency;
      default: return de_phase;
    }
  }
  const Matrix& mat(MatId id) const { return const_cast<StateVector*>(this)->mat(id); }

  std::vector<MatId> active_mats() const {
    std::vector<MatId> out{MatId::Entity, MatId::Relation};
    if (spec.family == Family::TComplEx) out.push_back(MatId::Timestamp);
    if (spec.family == Family::DESimplE) {
      out.push_back(MatId::DeAmp);
      out.push_back(MatId::DeFreq);
      out.push_back(MatId::DePhase);
    }
    return out;
  }

  bool all_finite() const {
    for (MatId id : active_mats()) {
      if (!mat(id).all_finite()) return false;
    }
    return true;
  }
};

/// Draws an initial state: real coordinates uniform in [-6/sqrt(d), 6/sqrt(d)],
/// RotatE phases uniform in [-pi, pi]. Bit-identical for a given seed.
inline StateVector init_state(const ScorerSpec& spec, size_t num_entities, size_t num_relations,
                              size_t num_timestamps, uint64_t seed) {
  spec.validate();
  if (num_entities == 0 || num_relations == 0 || num_timestamps == 0) {
    throw InputError("init_state: sizes must be positive");
  }
  StateVector st;
  st.spec = spec;
  st.num_timestamps = static_cast<uint32_t>(num_timestamps);
  st.entity_features = Matrix(num_entities, spec.entity_dim());
  st.relation_features = Matrix(num_relations, spec.relation_dim());
  if (spec.family == Family::TComplEx) {
    st.timestamp_features = Matrix(num_timestamps, spec.timestamp_dim());
  }
  if (spec.family == Family::DESimplE) {
    uint32_t dt = spec.temporal_dims();
    st.de_amplitude = Matrix(num_entities, 2 * dt);
    st.de_frequency = Matrix(num_entities, 2 * dt);
    st.de_phase = Matrix(num_entities, 2 * dt);
  }

  Rng rng(seed);
  double bound = 6.0 / std::sqrt(static_cast<double>(spec.d));
  for (MatId id : st.active_mats()) {
    Matrix& m = st.mat(id);
    bool phases = (id == MatId::Relation && spec.family == Family::RotatE);
    double lo = phases ? -M_PI : -bound;
    double hi = phases ? M_PI : bound;
    for (double& v : m.data()) v = rng.uniform(lo, hi);
  }
  return st;
}

/// Grows the entity axis (and timestamp axis for TComplEx) for entities and
/// timestamps first seen after the state was fitted. New rows are drawn from
/// the init distribution under the given seed; existing rows are untouched.
inline void grow_state(StateVector& st, size_t num_entities, size_t num_timestamps,
                       uint64_t seed) {
  Rng rng(seed);
  double bound = 6.0 / std::sqrt(static_cast<double>(st.spec.d));
  auto grow = [&](MatId id, size_t new_rows) {
    Matrix& m = st.mat(id);
    if (m.empty() || new_rows <= m.rows()) return;
    size_t old_rows = m.rows();
    m.append_rows(new_rows - old_rows);
    for (size_t i = old_rows; i < new_rows; ++i) {
      for (double& v : m.row(i)) v = rng.uniform(-bound, bound);
    }
    if (!st.optimizer_state.empty()) {
      st.optimizer_state[static_cast<size_t>(id)].append_rows(new_rows - old_rows);
    }
  };
  grow(MatId::Entity, num_entities);
  grow(MatId::DeAmp, num_entities);
  grow(MatId::DeFreq, num_entities);
  grow(MatId::DePhase, num_entities);
  if (st.spec.family == Family::TComplEx) grow(MatId::Timestamp, num_timestamps);
  if (num_timestamps > st.num_timestamps) st.num_timestamps = static_cast<uint32_t>(num_timestamps);
}

/// Sparse gradient over the rows a batch touched.
class SparseGrad {
 public:
  std::vector<double>& row(MatId m, uint32_t r, size_t cols) {
    auto& v = rows_[key(m, r)];
    if (v.empty()) v.assign(cols, 0.0);
    return v;
  }

  const std::unordered_map<uint64_t, std::vector<double>>& entries() const { return rows_; }

  static uint64_t key(MatId m, uint32_t r) {
    return (static_cast<uint64_t>(m) << 56) | r;
  }
  static MatId key_mat(uint64_t k) { return static_cast<MatId>(k >> 56); }
  static uint32_t key_row(uint64_t k) { return static_cast<uint32_t>(k & 0xffffffffULL); }

  void scale(double a) {
    for (auto& [k, v] : rows_) {
      for (double& x : v) x *= a;
    }
  }

  bool all_finite() const {
    for (const auto& [k, v] : rows_) {
      for (double x : v) {
        if (!std::isfinite(x)) return false;
      }
    }
    return true;
  }

 private:
  std::unordered_map<uint64_t, std::vector<double>> rows_;
};

namespace detail {

// Complex layout for RotatE/ComplEx/TComplEx entity rows: the first d/2
// coordinates are real parts, the last d/2 imaginary parts.

struct ScoreCtx {
  const StateVector& st;
  const ScorerSpec& spec;
};

inline double transe_score(const StateVector& st, const Quadruple& q) {
  auto es = st.entity_features.row(q.s);
  auto er = st.relation_features.row(q.r);
  auto eo = st.entity_features.row(q.o);
  double acc = 0.0;
  if (st.spec.norm == Norm::L1) {
    for (size_t j = 0; j < es.size(); ++j) acc += std::abs(es[j] + er[j] - eo[j]);
    return -acc;
  }
  for (size_t j = 0; j < es.size(); ++j) {
    double d = es[j] + er[j] - eo[j];
    acc += d * d;
  }
  return -std::sqrt(acc);
}

inline void transe_grad(const StateVector& st, const Quadruple& q, double coeff, SparseGrad& g) {
  auto es = st.entity_features.row(q.s);
  auto er = st.relation_features.row(q.r);
  auto eo = st.entity_features.row(q.o);
  size_t d = es.size();
  auto& gs = g.row(MatId::Entity, q.s, d);
  auto& gr = g.row(MatId::Relation, q.r, d);
  auto& go = g.row(MatId::Entity, q.o, d);
  if (st.spec.norm == Norm::L1) {
    for (size_t j = 0; j < d; ++j) {
      double diff = es[j] + er[j] - eo[j];
      double sg = (diff > 0.0) - (diff < 0.0);
      double v = -coeff * sg;  // d score / d es[j] = -sign(diff)
      gs[j] += v;
      gr[j] += v;
      go[j] -= v;
    }
    return;
  }
  double nrm = 0.0;
  for (size_t j = 0; j < d; ++j) {
    double diff = es[j] + er[j] - eo[j];
    nrm += diff * diff;
  }
  nrm = std::sqrt(nrm);
  if (nrm < 1e-12) return;  // score gradient vanishes at the cusp
  for (size_t j = 0; j < d; ++j) {
    double diff = es[j] + er[j] - eo[j];
    double v = -coeff * diff / nrm;
    gs[j] += v;
    gr[j] += v;
    go[j] -= v;
  }
}

inline double rotate_score(const StateVector& st, const Quadruple& q) {
  auto es = st.entity_features.row(q.s);
  auto ph = st.relation_features.row(q.r);
  auto eo = st.entity_features.row(q.o);
  size_t nc = ph.size();
  double acc = 0.0;
  for (size_t j = 0; j < nc; ++j) {
    double c = std::cos(ph[j]), s = std::sin(ph[j]);
    double rr = es[j] * c - es[nc + j] * s;
    double ri = es[j] * s + es[nc + j] * c;
    double u = rr - eo[j];
    double v = ri - eo[nc + j];
    acc += u * u + v * v;
  }
  return -std::sqrt(acc);
}

inline void rotate_grad(const StateVector& st, const Quadruple& q, double coeff, SparseGrad& g) {
  auto es = st.entity_features.row(q.s);
  auto ph = st.relation_features.row(q.r);
  auto eo = st.entity_features.row(q.o);
  size_t nc = ph.size();
  double nrm = -rotate_score(st, q);
  if (nrm < 1e-12) return;
  auto& gs = g.row(MatId::Entity, q.s, 2 * nc);
  auto& gr = g.row(MatId::Relation, q.r, nc);
  auto& go = g.row(MatId::Entity, q.o, 2 * nc);
  for (size_t j = 0; j < nc; ++j) {
    double c = std::cos(ph[j]), s = std::sin(ph[j]);
    double rr = es[j] * c - es[nc + j] * s;
    double ri = es[j] * s + es[nc + j] * c;
    double u = rr - eo[j];
    double v = ri - eo[nc + j];
    // d score / d component = -(component of diff projected) / nrm
    gs[j] += coeff * (-(u * c + v * s) / nrm);
    gs[nc + j] += coeff * ((u * s - v * c) / nrm);
    go[j] += coeff * (u / nrm);
    go[nc + j] += coeff * (v / nrm);
    gr[j] += coeff * ((u * ri - v * rr) / nrm);
  }
}

// ComplEx / TComplEx share the trilinear form Re<s, r (.tau), conj(o)>.

inline double complex_score(const StateVector& st, const Quadruple& q) {
  auto es = st.entity_features.row(q.s);
  auto er = st.relation_features.row(q.r);
  auto eo = st.entity_features.row(q.o);
  size_t nc = es.size() / 2;
  bool temporal = st.spec.family == Family::TComplEx;
  std::span<const double> tau;
  if (temporal) tau = st.timestamp_features.row(q.t);
  double acc = 0.0;
  for (size_t j = 0; j < nc; ++j) {
    double rr = er[j], ri = er[nc + j];
    if (temporal) {
      double tr = tau[j], ti = tau[nc + j];
      double nr = rr * tr - ri * ti;
      double ni = rr * ti + ri * tr;
      rr = nr;
      ri = ni;
    }
    double ar = es[j] * rr - es[nc + j] * ri;
    double ai = es[j] * ri + es[nc + j] * rr;
    acc += ar * eo[j] + ai * eo[nc + j];
  }
  return acc;
}

inline void complex_grad(const StateVector& st, const Quadruple& q, double coeff, SparseGrad& g) {
  auto es = st.entity_features.row(q.s);
  auto er = st.relation_features.row(q.r);
  auto eo = st.entity_features.row(q.o);
  size_t nc = es.size() / 2;
  bool temporal = st.spec.family == Family::TComplEx;
  std::span<const double> tau;
  if (temporal) tau = st.timestamp_features.row(q.t);
  auto& gs = g.row(MatId::Entity, q.s, 2 * nc);
  auto& gr = g.row(MatId::Relation, q.r, 2 * nc);
  auto& go = g.row(MatId::Entity, q.o, 2 * nc);
  std::vector<double>* gt = temporal ? &g.row(MatId::Timestamp, q.t, 2 * nc) : nullptr;
  for (size_t j = 0; j < nc; ++j) {
    double sr = es[j], si = es[nc + j];
    double rr = er[j], ri = er[nc + j];
    double tr = 1.0, ti = 0.0;
    if (temporal) {
      tr = tau[j];
      ti = tau[nc + j];
    }
    double orr = eo[j], oi = eo[nc + j];
    // score_j = Re(s * r * t * conj(o)); gradient of Re(f * P) wrt factor f
    // with P the product of the other factors: d/dfr = Re(P), d/dfi = -Im(P).
    auto cmul = [](double ar, double ai, double br, double bi, double& cr, double& ci) {
      cr = ar * br - ai * bi;
      ci = ar * bi + ai * br;
    };
    double rt_r, rt_i;  // r * t
    cmul(rr, ri, tr, ti, rt_r, rt_i);
    double srt_r, srt_i;  // s * r * t
    cmul(sr, si, rt_r, rt_i, srt_r, srt_i);
    double st_r, st_i;  // s * t
    cmul(sr, si, tr, ti, st_r, st_i);
    double co_r = orr, co_i = -oi;  // conj(o)
    double p_r, p_i;

    cmul(rt_r, rt_i, co_r, co_i, p_r, p_i);  // P for s
    gs[j] += coeff * p_r;
    gs[nc + j] -= coeff * p_i;

    cmul(st_r, st_i, co_r, co_i, p_r, p_i);  // P for r
    gr[j] += coeff * p_r;
    gr[nc + j] -= coeff * p_i;

    if (temporal) {
      double sr_r, sr_i;
      cmul(sr, si, rr, ri, sr_r, sr_i);
      cmul(sr_r, sr_i, co_r, co_i, p_r, p_i);  // P for t
      (*gt)[j] += coeff * p_r;
      (*gt)[nc + j] -= coeff * p_i;
    }

    // score_j = Re(srt * conj(o)) = srt_r*or + srt_i*oi
    go[j] += coeff * srt_r;
    go[nc + j] += coeff * srt_i;
  }
}

// DE-SimplE: each entity has head/tail role vectors of length d whose first
// dt coordinates are a*sin(w*t~ + b) and the rest static; relations carry a
// forward and an inverse vector. t~ = t / |T|.

struct DeVec {
  std::vector<double> val;   // length d
  std::vector<double> sinv;  // sin term per temporal coord
  std::vector<double> cosv;  // cos term per temporal coord
};

inline DeVec de_entity_vec(const StateVector& st, uint32_t v, bool tail_role, double t_scaled) {
  const ScorerSpec& spec = st.spec;
  uint32_t d = spec.d;
  uint32_t dt = spec.temporal_dims();
  uint32_t off = tail_role ? d : 0;
  uint32_t doff = tail_role ? dt : 0;
  DeVec out;
  out.val.resize(d);
  out.sinv.resize(dt);
  out.cosv.resize(dt);
  auto stat = st.entity_features.row(v);
  auto amp = st.de_amplitude.row(v);
  auto frq = st.de_frequency.row(v);
  auto phs = st.de_phase.row(v);
  for (uint32_t j = 0; j < dt; ++j) {
    double arg = frq[doff + j] * t_scaled + phs[doff + j];
    out.sinv[j] = std::sin(arg);
    out.cosv[j] = std::cos(arg);
    out.val[j] = amp[doff + j] * out.sinv[j];
  }
  for (uint32_t j = dt; j < d; ++j) out.val[j] = stat[off + j];
  return out;
}

inline double desimple_score(const StateVector& st, const Quadruple& q) {
  const ScorerSpec& spec = st.spec;
  double ts = static_cast<double>(q.t) / static_cast<double>(st.num_timestamps);
  DeVec hs = de_entity_vec(st, q.s, false, ts);
  DeVec to = de_entity_vec(st, q.o, true, ts);
  DeVec ho = de_entity_vec(st, q.o, false, ts);
  DeVec tssub = de_entity_vec(st, q.s, true, ts);
  auto rel = st.relation_features.row(q.r);
  uint32_t d = spec.d;
  double acc = 0.0;
  for (uint32_t j = 0; j < d; ++j) {
    acc += hs.val[j] * rel[j] * to.val[j];          // forward term
    acc += ho.val[j] * rel[d + j] * tssub.val[j];   // inverse-relation term
  }
  return 0.5 * acc;
}

// Accumulates d(score)/d(entity role vector coordinate) back onto the static,
// amplitude, frequency and phase rows.
inline void de_backprop_entity(const StateVector& st, uint32_t v, bool tail_role, double t_scaled,
                               const DeVec& vec, const std::vector<double>& dval, SparseGrad& g) {
  const ScorerSpec& spec = st.spec;
  uint32_t d = spec.d;
  uint32_t dt = spec.temporal_dims();
  uint32_t off = tail_role ? d : 0;
  uint32_t doff = tail_role ? dt : 0;
  auto amp = st.de_amplitude.row(v);
  auto& gstat = g.row(MatId::Entity, v, 2 * d);
  auto& gamp = g.row(MatId::DeAmp, v, 2 * dt);
  auto& gfrq = g.row(MatId::DeFreq, v, 2 * dt);
  auto& gphs = g.row(MatId::DePhase, v, 2 * dt);
  for (uint32_t j = 0; j < dt; ++j) {
    double dv = dval[j];
    gamp[doff + j] += dv * vec.sinv[j];
    double damp_cos = dv * amp[doff + j] * vec.cosv[j];
    gfrq[doff + j] += damp_cos * t_scaled;
    gphs[doff + j] += damp_cos;
  }
  for (uint32_t j = dt; j < d; ++j) gstat[off + j] += dval[j];
}

inline void desimple_grad(const StateVector& st, const Quadruple& q, double coeff, SparseGrad& g) {
  const ScorerSpec& spec = st.spec;
  uint32_t d = spec.d;
  double ts = static_cast<double>(q.t) / static_cast<double>(st.num_timestamps);
  DeVec hs = de_entity_vec(st, q.s, false, ts);
  DeVec to = de_entity_vec(st, q.o, true, ts);
  DeVec ho = de_entity_vec(st, q.o, false, ts);
  DeVec tssub = de_entity_vec(st, q.s, true, ts);
  auto rel = st.relation_features.row(q.r);
  auto& grel = g.row(MatId::Relation, q.r, 2 * d);

  std::vector<double> d_hs(d), d_to(d), d_ho(d), d_ts(d);
  for (uint32_t j = 0; j < d; ++j) {
    double half = 0.5 * coeff;
    d_hs[j] = half * rel[j] * to.val[j];
    d_to[j] = half * rel[j] * hs.val[j];
    grel[j] += half * hs.val[j] * to.val[j];
    d_ho[j] = half * rel[d + j] * tssub.val[j];
    d_ts[j] = half * rel[d + j] * ho.val[j];
    grel[d + j] += half * ho.val[j] * tssub.val[j];
  }
  de_backprop_entity(st, q.s, false, ts, hs, d_hs, g);
  de_backprop_entity(st, q.o, true, ts, to, d_to, g);
  de_backprop_entity(st, q.o, false, ts, ho, d_ho, g);
  de_backprop_entity(st, q.s, true, ts, tssub, d_ts, g);
}

}  // namespace detail

/// Quadruple plausibility under the fitted state; higher = more plausible.
inline double score(const StateVector& st, const ScorerSpec& spec, const Quadruple& q) {
  if (q.s >= st.entity_features.rows() || q.o >= st.entity_features.rows() ||
      q.r >= st.relation_features.rows()) {
    throw InputError("score: index out of range");
  }
  if (spec.family == Family::TComplEx && q.t >= st.timestamp_features.rows()) {
    throw InputError("score: timestamp out of range");
  }
  switch (spec.family) {
    case Family::TransE: return detail::transe_score(st, q);
    case Family::RotatE: return detail::rotate_score(st, q);
    case Family::ComplEx:
    case Family::TComplEx: return detail::complex_score(st, q);
    default: return detail::desimple_score(st, q);
  }
}

inline void score_grad(const StateVector& st, const Quadruple& q, double coeff, SparseGrad& g) {
  switch (st.spec.family) {
    case Family::TransE: detail::transe_grad(st, q, coeff, g); break;
    case Family::RotatE: detail::rotate_grad(st, q, coeff, g); break;
    case Family::ComplEx:
    case Family::TComplEx: detail::complex_grad(st, q, coeff, g); break;
    default: detail::desimple_grad(st, q, coeff, g); break;
  }
}

/// One positive with its corrupted samples.
struct NegativeSample {
  Quadruple q;
  Slot slot;
};

struct SampleBatch {
  std::vector<Quadruple> positives;
  std::vector<std::vector<NegativeSample>> negatives;  // parallel to positives
};

namespace detail {

/// Registers every row a quadruple touches, so the N3 regularizer and the
/// sparsity contract see the full touched set.
inline void touch(const StateVector& st, const Quadruple& q,
                  std::unordered_map<uint64_t, bool>& touched) {
  touched[SparseGrad::key(MatId::Entity, q.s)] = true;
  touched[SparseGrad::key(MatId::Entity, q.o)] = true;
  touched[SparseGrad::key(MatId::Relation, q.r)] = true;
  if (st.spec.family == Family::TComplEx) {
    touched[SparseGrad::key(MatId::Timestamp, q.t)] = true;
  }
  if (st.spec.family == Family::DESimplE) {
    for (MatId m : {MatId::DeAmp, MatId::DeFreq, MatId::DePhase}) {
      touched[SparseGrad::key(m, q.s)] = true;
      touched[SparseGrad::key(m, q.o)] = true;
    }
  }
}

/// N3 regularizer value over one row: sum_j |c_j|^3, complex modulus for
/// complex-valued matrices.
inline double n3_row_value(const StateVector& st, MatId m, uint32_t r) {
  auto row = st.mat(m).row(r);
  bool complex = st.spec.complex_valued() &&
                 (m == MatId::Entity || m == MatId::Relation || m == MatId::Timestamp) &&
                 !(st.spec.family == Family::RotatE && m == MatId::Relation);
  double acc = 0.0;
  if (complex) {
    size_t nc = row.size() / 2;
    for (size_t j = 0; j < nc; ++j) {
      double mod = std::sqrt(row[j] * row[j] + row[nc + j] * row[nc + j]);
      acc += mod * mod * mod;
    }
  } else {
    for (double x : row) acc += std::abs(x) * x * x;
  }
  return acc;
}

inline void n3_row_grad(const StateVector& st, MatId m, uint32_t r, double weight, SparseGrad& g) {
  auto row = st.mat(m).row(r);
  bool complex = st.spec.complex_valued() &&
                 (m == MatId::Entity || m == MatId::Relation || m == MatId::Timestamp) &&
                 !(st.spec.family == Family::RotatE && m == MatId::Relation);
  auto& gr = g.row(m, r, row.size());
  if (complex) {
    size_t nc = row.size() / 2;
    for (size_t j = 0; j < nc; ++j) {
      double mod = std::sqrt(row[j] * row[j] + row[nc + j] * row[nc + j]);
      gr[j] += weight * 3.0 * mod * row[j];
      gr[nc + j] += weight * 3.0 * mod * row[nc + j];
    }
  } else {
    for (size_t j = 0; j < row.size(); ++j) gr[j] += weight * 3.0 * std::abs(row[j]) * row[j];
  }
}

}  // namespace detail

/// Loss over a batch (sum over positives) with the sparse gradient over
/// exactly the rows the batch references.
///
/// Translational families: negative-sampling logsigmoid,
///   -log sig(margin + s_pos) - mean_neg log sig(-margin - s_neg).
/// ComplEx/TComplEx/DE-SimplE: sampled softmax cross-entropy over
///   {positive} + negatives, plus n3_weight * N3 over touched rows for the
///   ComplEx families.
inline std::pair<double, SparseGrad> loss_and_grad(const StateVector& st, const ScorerSpec& spec,
                                                   const SampleBatch& batch) {
  if (batch.positives.empty()) throw InputError("loss_and_grad: empty batch");
  SparseGrad g;
  double loss = 0.0;
  std::unordered_map<uint64_t, bool> touched;

  for (size_t i = 0; i < batch.positives.size(); ++i) {
    const Quadruple& pos = batch.positives[i];
    const auto& negs = batch.negatives[i];
    detail::touch(st, pos, touched);
    for (const auto& n : negs) detail::touch(st, n.q, touched);

    double s_pos = score(st, spec, pos);
    if (spec.softmax_loss()) {
      if (negs.empty()) {
        throw InputError("loss_and_grad: softmax loss needs at least one negative");
      }
      // softmax cross-entropy over {pos} + negatives
      std::vector<double> scores(negs.size() + 1);
      scores[0] = s_pos;
      for (size_t k = 0; k < negs.size(); ++k) scores[k + 1] = score(st, spec, negs[k].q);
      double m = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double sc : scores) z += std::exp(sc - m);
      loss += -(s_pos - m - std::log(z));
      for (size_t k = 0; k < scores.size(); ++k) {
        double p = std::exp(scores[k] - m) / z;
        double coeff = p - (k == 0 ? 1.0 : 0.0);
        score_grad(st, k == 0 ? pos : negs[k - 1].q, coeff, g);
      }
    } else {
      // logsigmoid negative-sampling loss
      double gamma = spec.margin;
      loss += -log_sigmoid(gamma + s_pos);
      double dpos = -(1.0 - 1.0 / (1.0 + std::exp(-(gamma + s_pos))));  // -sig(-(gamma+s_pos))
      score_grad(st, pos, dpos, g);
      if (!negs.empty()) {
        std::vector<double> s_neg(negs.size());
        for (size_t k = 0; k < negs.size(); ++k) s_neg[k] = score(st, spec, negs[k].q);
        std::vector<double> w(negs.size(), 1.0 / static_cast<double>(negs.size()));
        if (spec.adv_temperature > 0.0) {
          // self-adversarial weights, treated as constants in the gradient
          double m = *std::max_element(s_neg.begin(), s_neg.end());
          double z = 0.0;
          for (double sc : s_neg) z += std::exp(spec.adv_temperature * (sc - m));
          for (size_t k = 0; k < negs.size(); ++k) {
            w[k] = std::exp(spec.adv_temperature * (s_neg[k] - m)) / z;
          }
        }
        for (size_t k = 0; k < negs.size(); ++k) {
          loss += -w[k] * log_sigmoid(-gamma - s_neg[k]);
          double dneg = w[k] / (1.0 + std::exp(-(gamma + s_neg[k])));  // w * sig(gamma + s_neg)
          score_grad(st, negs[k].q, dneg, g);
        }
      }
    }
  }

  if (spec.n3_weight > 0.0 &&
      (spec.family == Family::ComplEx || spec.family == Family::TComplEx)) {
    for (const auto& [k, _] : touched) {
      MatId m = SparseGrad::key_mat(k);
      if (m != MatId::Entity && m != MatId::Relation && m != MatId::Timestamp) continue;
      uint32_t r = SparseGrad::key_row(k);
      loss += spec.n3_weight * detail::n3_row_value(st, m, r);
      detail::n3_row_grad(st, m, r, spec.n3_weight, g);
    }
  }

  // Sparsity contract: materialize a (possibly zero) row for every touched
  // row so callers can rely on "gradient covers exactly the touched set".
  for (const auto& [k, _] : touched) {
    MatId m = SparseGrad::key_mat(k);
    uint32_t r = SparseGrad::key_row(k);
    g.row(m, r, st.mat(m).cols());
  }

  if (!std::isfinite(loss)) throw NumericError("loss_and_grad: non-finite loss");
  return {loss, std::move(g)};
}

/// Applies one gradient step to the touched rows only. Plain sgd subtracts
/// alpha * g; adagrad divides by sqrt(accumulator) + 1e-10, with accumulators
/// kept in optimizer_state across calls.
inline void sgd_step(StateVector& st, const SparseGrad& grad, double alpha, Optimizer opt) {
  if (alpha <= 0.0) throw InputError("sgd_step: learning rate must be positive");
  if (!grad.all_finite()) throw NumericError("sgd_step: non-finite gradient");
  constexpr double kEps = 1e-10;
  if (opt == Optimizer::Adagrad && st.optimizer_state.empty()) {
    st.optimizer_state.resize(kNumMats);
    for (MatId id : st.active_mats()) {
      const Matrix& m = st.mat(id);
      st.optimizer_state[static_cast<size_t>(id)] = Matrix(m.rows(), m.cols());
    }
  }
  for (const auto& [k, gv] : grad.entries()) {
    MatId id = SparseGrad::key_mat(k);
    uint32_t r = SparseGrad::key_row(k);
    auto row = st.mat(id).row(r);
    if (opt == Optimizer::Sgd) {
      for (size_t j = 0; j < row.size(); ++j) row[j] -= alpha * gv[j];
    } else {
      auto acc = st.optimizer_state[static_cast<size_t>(id)].row(r);
      for (size_t j = 0; j < row.size(); ++j) {
        acc[j] += gv[j] * gv[j];
        row[j] -= alpha * gv[j] / (std::sqrt(acc[j]) + kEps);
      }
    }
  }
}

}  // namespace rtfe

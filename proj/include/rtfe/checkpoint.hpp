#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rtfe/dataset.hpp"
#include "rtfe/scorers.hpp"

namespace rtfe {

// Checkpoint layout: magic "RTFE", then a fixed header, then the matrices as
// little-endian float32 in declared order (entity, relation, timestamp,
// diachronic amp/freq/phase, adagrad accumulators when present).
// Vocabularies go to a UTF-8 TSV sidecar next to the checkpoint.

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError("checkpoint: truncated file");
  return v;
}

inline void write_matrix_f32(std::ostream& out, const Matrix& m) {
  std::vector<float> buf(m.data().size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(m.data()[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline void read_matrix_f32(std::istream& in, Matrix& m) {
  std::vector<float> buf(m.data().size());
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw InputError("checkpoint: truncated matrix data");
  for (size_t i = 0; i < buf.size(); ++i) m.data()[i] = static_cast<double>(buf[i]);
}

inline double wrap_phase(double x) {
  double y = std::remainder(x, 2.0 * M_PI);  // (-pi, pi]
  return y;
}

}  // namespace detail

constexpr uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(const StateVector& st, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint: " + path);
  const ScorerSpec& spec = st.spec;

  StateVector tmp;
  const StateVector* src = &st;
  if (spec.family == Family::RotatE) {
    // Phases are stored reduced mod 2pi.
    tmp = st;
    for (double& v : tmp.relation_features.data()) v = detail::wrap_phase(v);
    src = &tmp;
  }

  out.write("RTFE", 4);
  detail::write_pod<uint32_t>(out, kCheckpointVersion);
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(spec.family));
  detail::write_pod<uint32_t>(out, spec.d);
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(spec.norm));
  detail::write_pod<double>(out, spec.margin);
  detail::write_pod<double>(out, spec.temporal_fraction);
  detail::write_pod<double>(out, spec.n3_weight);
  detail::write_pod<double>(out, spec.adv_temperature);
  detail::write_pod<uint64_t>(out, src->entity_features.rows());
  detail::write_pod<uint64_t>(out, src->relation_features.rows());
  detail::write_pod<uint64_t>(out, src->num_timestamps);
  uint32_t flags = src->optimizer_state.empty() ? 0u : 1u;
  detail::write_pod<uint32_t>(out, flags);
  detail::write_pod<int64_t>(out, src->fitted_timestamp);

  for (MatId id : src->active_mats()) detail::write_matrix_f32(out, src->mat(id));
  if (flags & 1u) {
    for (MatId id : src->active_mats()) {
      detail::write_matrix_f32(out, src->optimizer_state[static_cast<size_t>(id)]);
    }
  }
  if (!out) throw InputError("checkpoint write failed: " + path);
}

inline StateVector read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RTFE", 4) != 0) {
    throw InputError("not a checkpoint file: " + path);
  }
  uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  ScorerSpec spec;
  spec.family = static_cast<Family>(detail::read_pod<uint32_t>(in));
  spec.d = detail::read_pod<uint32_t>(in);
  spec.norm = static_cast<Norm>(detail::read_pod<uint32_t>(in));
  spec.margin = detail::read_pod<double>(in);
  spec.temporal_fraction = detail::read_pod<double>(in);
  spec.n3_weight = detail::read_pod<double>(in);
  spec.adv_temperature = detail::read_pod<double>(in);
  uint64_t nv = detail::read_pod<uint64_t>(in);
  uint64_t nr = detail::read_pod<uint64_t>(in);
  uint64_t nt = detail::read_pod<uint64_t>(in);
  uint32_t flags = detail::read_pod<uint32_t>(in);
  int64_t fitted = detail::read_pod<int64_t>(in);

  StateVector st;
  st.spec = spec;
  st.num_timestamps = static_cast<uint32_t>(nt);
  st.fitted_timestamp = fitted;
  st.entity_features = Matrix(nv, spec.entity_dim());
  st.relation_features = Matrix(nr, spec.relation_dim());
  if (spec.family == Family::TComplEx) st.timestamp_features = Matrix(nt, spec.timestamp_dim());
  if (spec.family == Family::DESimplE) {
    uint32_t dt = spec.temporal_dims();
    st.de_amplitude = Matrix(nv, 2 * dt);
    st.de_frequency = Matrix(nv, 2 * dt);
    st.de_phase = Matrix(nv, 2 * dt);
  }
  for (MatId id : st.active_mats()) detail::read_matrix_f32(in, st.mat(id));
  if (flags & 1u) {
    st.optimizer_state.resize(kNumMats);
    for (MatId id : st.active_mats()) {
      const Matrix& m = st.mat(id);
      st.optimizer_state[static_cast<size_t>(id)] = Matrix(m.rows(), m.cols());
      detail::read_matrix_f32(in, st.optimizer_state[static_cast<size_t>(id)]);
    }
  }
  return st;
}

/// Vocabulary sidecar: kind <tab> index <tab> name, one row per symbol.
inline void write_vocab_sidecar(const TemporalDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocab sidecar: " + path);
  for (uint32_t i = 0; i < ds.entities.size(); ++i) {
    out << "entity\t" << i << '\t' << ds.entities.name(i) << '\n';
  }
  for (uint32_t i = 0; i < ds.relations.size(); ++i) {
    out << "relation\t" << i << '\t' << ds.relations.name(i) << '\n';
  }
  for (uint32_t i = 0; i < ds.timestamp_labels.size(); ++i) {
    out << "timestamp\t" << i << '\t' << ds.timestamp_labels[i] << '\n';
  }
}

}  // namespace rtfe

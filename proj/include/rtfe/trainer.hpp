#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtfe/checkpoint.hpp"
#include "rtfe/dataset.hpp"
#include "rtfe/evaluator.hpp"
#include "rtfe/scorers.hpp"

namespace rtfe {

struct TrainConfig {
  double lr = 0.1;
  uint32_t epochs_static = 50;
  uint32_t epochs_tem = 20;
  uint32_t batch_size = 512;
  uint32_t neg_ratio = 25;
  double corruption_head = 0.5;
  double corruption_tail = 0.5;
  double corruption_relation = 0.0;
  Optimizer optimizer = Optimizer::Adagrad;
  uint64_t seed = 0;
  bool pretrain = true;
  bool early_stop = false;     // patience-5 early stopping on validation MRR
  unsigned threads = 1;        // evaluation workers; training is serial

  void validate() const {
    if (lr <= 0.0) throw InputError("learning rate must be positive");
    if (epochs_tem < 1) throw InputError("epochs_tem must be at least 1");
    if (batch_size < 1) throw InputError("batch_size must be at least 1");
    double sum = corruption_head + corruption_tail + corruption_relation;
    if (std::abs(sum - 1.0) > 1e-9 || corruption_head < 0 || corruption_tail < 0 ||
        corruption_relation < 0) {
      throw InputError("corruption weights must be non-negative and sum to 1");
    }
  }
};

namespace detail {

/// Draws neg_ratio corruptions of one positive. Unfiltered: a corruption may
/// collide with a true fact. Replacements come from the global vocabulary.
inline std::vector<NegativeSample> sample_negatives(Rng& rng, const Quadruple& pos,
                                                    const TrainConfig& cfg, size_t num_entities,
                                                    size_t num_relations) {
  std::vector<NegativeSample> out;
  out.reserve(cfg.neg_ratio);
  for (uint32_t k = 0; k < cfg.neg_ratio; ++k) {
    double u = rng.u01();
    Slot slot;
    if (u < cfg.corruption_head) {
      slot = Slot::Head;
    } else if (u < cfg.corruption_head + cfg.corruption_tail) {
      slot = Slot::Tail;
    } else {
      slot = Slot::Relation;
    }
    Quadruple q = pos;
    if (slot == Slot::Relation) {
      if (num_relations < 2) {
        slot = Slot::Tail;  // cannot corrupt the only relation
      } else {
        uint32_t r;
        do {
          r = static_cast<uint32_t>(rng.below(num_relations));
        } while (r == pos.r);
        q.r = r;
        out.push_back({q, slot});
        continue;
      }
    }
    if (num_entities < 2) throw InputError("cannot sample negatives with a single entity");
    uint32_t original = slot == Slot::Head ? pos.s : pos.o;
    uint32_t e;
    do {
      e = static_cast<uint32_t>(rng.below(num_entities));
    } while (e == original);
    if (slot == Slot::Head) {
      q.s = e;
    } else {
      q.o = e;
    }
    out.push_back({q, slot});
  }
  return out;
}

/// One epoch of shuffled mini-batch training over `quads`. The gradient of
/// the batch-sum loss is applied with the learning rate scaled by the batch
/// size (mean-gradient step). Returns the summed epoch loss.
inline double train_epoch(StateVector& st, const ScorerSpec& spec, const TrainConfig& cfg,
                          const std::vector<Quadruple>& quads, Rng& rng) {
  std::vector<size_t> order(quads.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double epoch_loss = 0.0;
  size_t num_entities = st.entity_features.rows();
  size_t num_relations = st.relation_features.rows();
  for (size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
    size_t end = std::min(order.size(), begin + cfg.batch_size);
    SampleBatch batch;
    for (size_t i = begin; i < end; ++i) {
      const Quadruple& pos = quads[order[i]];
      batch.positives.push_back(pos);
      batch.negatives.push_back(sample_negatives(rng, pos, cfg, num_entities, num_relations));
    }
    auto [loss, grad] = loss_and_grad(st, spec, batch);
    epoch_loss += loss;
    grad.scale(1.0 / static_cast<double>(batch.positives.size()));
    sgd_step(st, grad, cfg.lr, cfg.optimizer);
  }
  return epoch_loss;
}

/// Mean reciprocal rank of head+tail entity prediction, used by the
/// optional early-stopping check.
inline double validation_mrr(const StateVector& st, const ScorerSpec& spec,
                             const std::vector<Quadruple>& valid, const FilterIndex& filter,
                             unsigned threads) {
  if (valid.empty()) return 0.0;
  TimestampRecord rec = evaluate_timestamp(st, spec, valid, filter, threads);
  return rec.mrr();
}

/// Tracks "no validation improvement for `patience` checks".
class EarlyStopper {
 public:
  explicit EarlyStopper(uint32_t patience = 5) : patience_(patience) {}
  bool should_stop(double mrr) {
    if (mrr > best_) {
      best_ = mrr;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

 private:
  uint32_t patience_;
  uint32_t stale_ = 0;
  double best_ = -1.0;
};

}  // namespace rtfe::detail

/// Preliminary training. SKGE families train on the static collapse of the
/// train split (timestamps dropped); TComplEx and DE-SimplE run their own
/// regular training on the quadruples directly.
inline StateVector pretrain_static(const TemporalDataset& ds, const ScorerSpec& spec,
                                   const TrainConfig& cfg,
                                   std::function<void(uint32_t, double)> on_epoch = {}) {
  cfg.validate();
  spec.validate();
  if (!cfg.pretrain) throw InputError("pretrain_static called with pretrain off");
  StateVector st = init_state(spec, ds.entities.size(), ds.relations.size(),
                              std::max<size_t>(1, ds.num_timestamps()), cfg.seed);
  std::vector<Quadruple> quads;
  if (spec.family == Family::TComplEx || spec.family == Family::DESimplE) {
    quads = ds.all_of(Split::Train);
  } else {
    for (const auto& tr : collapse_static(ds, {Split::Train}).triples) {
      quads.push_back({tr.s, tr.r, tr.o, 0});
    }
  }
  if (quads.empty()) throw InputError("pretrain_static: empty training graph");

  std::optional<FilterIndex> filter;
  std::vector<Quadruple> valid;
  detail::EarlyStopper stopper;
  if (cfg.early_stop) {
    valid = ds.all_of(Split::Valid);
    if (!valid.empty()) filter.emplace(ds);
  }

  Rng rng(derive_seed(cfg.seed, 0xbeef));
  for (uint32_t e = 0; e < cfg.epochs_static; ++e) {
    double loss = detail::train_epoch(st, spec, cfg, quads, rng);
    if (on_epoch) on_epoch(e, loss);
    if (filter &&
        stopper.should_stop(detail::validation_mrr(st, spec, valid, *filter, cfg.threads))) {
      break;
    }
  }
  st.fitted_timestamp = -1;
  if (!st.all_finite()) throw NumericError("pretrain_static: non-finite state");
  return st;
}

/// Fine-tunes the previous timestamp's state on G_{t_i} for epochs_tem
/// epochs. This is the state transition: the output state for t_i depends
/// only on the input state and the facts of t_i. An empty graph passes the
/// state through with only fitted_timestamp advancing.
inline StateVector train_timestamp(StateVector state, uint32_t t,
                                   const std::vector<Quadruple>& graph, const ScorerSpec& spec,
                                   const TrainConfig& cfg,
                                   const std::vector<Quadruple>& valid = {},
                                   const FilterIndex* filter = nullptr) {
  cfg.validate();
  if (state.fitted_timestamp != -1 && state.fitted_timestamp + 1 != static_cast<int64_t>(t)) {
    throw InputError("train_timestamp: state is fitted to timestamp " +
                     std::to_string(state.fitted_timestamp) + ", cannot train timestamp " +
                     std::to_string(t));
  }
  if (!graph.empty()) {
    bool check_valid = cfg.early_stop && filter != nullptr && !valid.empty();
    detail::EarlyStopper stopper;
    Rng rng(derive_seed(cfg.seed, t + 1));
    for (uint32_t e = 0; e < cfg.epochs_tem; ++e) {
      detail::train_epoch(state, spec, cfg, graph, rng);
      if (check_valid &&
          stopper.should_stop(detail::validation_mrr(state, spec, valid, *filter, cfg.threads))) {
        break;
      }
    }
    if (!state.all_finite()) {
      throw NumericError("train_timestamp: non-finite state at timestamp " + std::to_string(t));
    }
  }
  state.fitted_timestamp = t;
  return state;
}

struct RunManifest {
  std::string mode;  // pretrain | recursive | enhance | extend | ablation
  std::string dataset_dir;
  std::string out_dir;
  ScorerSpec spec;
  TrainConfig config;
  uint32_t pretrain_from = 0;  // static-collapse interval [from, to], inclusive
  uint32_t pretrain_to = 0;
  std::vector<std::string> checkpoints;  // per-timestamp, when kept
  std::string latest_checkpoint;
  std::string report_path;
  int64_t last_timestamp = -1;
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["mode"] = m.mode;
  j["dataset_dir"] = m.dataset_dir;
  j["out_dir"] = m.out_dir;
  j["model"] = family_name(m.spec.family);
  j["dim"] = m.spec.d;
  j["norm"] = m.spec.norm == Norm::L1 ? "L1" : "L2";
  j["margin"] = m.spec.margin;
  j["temporal_fraction"] = m.spec.temporal_fraction;
  j["n3_weight"] = m.spec.n3_weight;
  j["adv_temperature"] = m.spec.adv_temperature;
  j["lr"] = m.config.lr;
  j["epochs_static"] = m.config.epochs_static;
  j["epochs_tem"] = m.config.epochs_tem;
  j["batch_size"] = m.config.batch_size;
  j["neg_ratio"] = m.config.neg_ratio;
  j["corruption_head"] = m.config.corruption_head;
  j["corruption_tail"] = m.config.corruption_tail;
  j["corruption_relation"] = m.config.corruption_relation;
  j["optimizer"] = m.config.optimizer == Optimizer::Sgd ? "sgd" : "adagrad";
  j["seed"] = m.config.seed;
  j["pretrain"] = m.config.pretrain;
  j["pretrain_from"] = m.pretrain_from;
  j["pretrain_to"] = m.pretrain_to;
  j["checkpoints"] = m.checkpoints;
  j["latest_checkpoint"] = m.latest_checkpoint;
  j["report"] = m.report_path;
  j["last_timestamp"] = m.last_timestamp;
  return j;
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest: " + path);
  out << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest: " + path);
  nlohmann::json j;
  in >> j;
  RunManifest m;
  m.mode = j.at("mode");
  m.dataset_dir = j.at("dataset_dir");
  m.out_dir = j.at("out_dir");
  auto fam = family_from_name(j.at("model"));
  if (!fam) throw InputError("manifest: unknown model family");
  m.spec.family = *fam;
  m.spec.d = j.at("dim");
  m.spec.norm = j.at("norm") == "L1" ? Norm::L1 : Norm::L2;
  m.spec.margin = j.at("margin");
  m.spec.temporal_fraction = j.at("temporal_fraction");
  m.spec.n3_weight = j.at("n3_weight");
  m.spec.adv_temperature = j.at("adv_temperature");
  m.config.lr = j.at("lr");
  m.config.epochs_static = j.at("epochs_static");
  m.config.epochs_tem = j.at("epochs_tem");
  m.config.batch_size = j.at("batch_size");
  m.config.neg_ratio = j.at("neg_ratio");
  m.config.corruption_head = j.at("corruption_head");
  m.config.corruption_tail = j.at("corruption_tail");
  m.config.corruption_relation = j.at("corruption_relation");
  m.config.optimizer = j.at("optimizer") == "sgd" ? Optimizer::Sgd : Optimizer::Adagrad;
  m.config.seed = j.at("seed");
  m.config.pretrain = j.at("pretrain");
  m.pretrain_from = j.at("pretrain_from");
  m.pretrain_to = j.at("pretrain_to");
  m.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  m.latest_checkpoint = j.at("latest_checkpoint");
  m.report_path = j.at("report");
  m.last_timestamp = j.at("last_timestamp");
  return m;
}

struct RunOptions {
  std::string out_dir;                 // empty = keep everything in memory
  bool save_all_checkpoints = false;   // per-timestamp checkpoints in the manifest
  uint32_t pretrain_from = 0;          // restrict pretraining to this timestamp interval
  std::optional<uint32_t> pretrain_to; // default: last timestamp
  FilterScope filter_scope = FilterScope::Timestamp;
  std::optional<StateVector> initial_state;  // enhance mode: pre-fitted state
  // Test hook, called with the state right after it was fitted and evaluated.
  std::function<void(uint32_t, const StateVector&)> on_state;
};

namespace detail {

/// Restricts a dataset view to a timestamp interval for static collapse.
inline TemporalDataset slice_interval(const TemporalDataset& ds, uint32_t from, uint32_t to) {
  TemporalDataset out;
  out.entities = ds.entities;
  out.relations = ds.relations;
  out.timestamp_labels = ds.timestamp_labels;
  size_t n = ds.num_timestamps();
  out.train.resize(n);
  out.valid.resize(n);
  out.test.resize(n);
  for (uint32_t t = from; t <= to && t < n; ++t) {
    out.train[t] = ds.train[t];
    out.valid[t] = ds.valid[t];
    out.test[t] = ds.test[t];
  }
  return out;
}

}  // namespace rtfe::detail

struct RunResult {
  RunManifest manifest;
  EvalReport report;
  StateVector final_state;
};

/// The full pipeline: optional preliminary training, then per-timestamp fine-tune,
/// evaluate, and hand the state forward. Only the latest state is kept in
/// memory; checkpoints go to disk when an output directory is given.
inline RunResult run_recursive(const TemporalDataset& ds, const ScorerSpec& spec,
                               const TrainConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  spec.validate();
  size_t n = ds.num_timestamps();
  if (n == 0) throw InputError("run_recursive: empty dataset");

  RunManifest manifest;
  manifest.mode = cfg.pretrain ? (opts.initial_state ? "enhance" : "recursive") : "ablation";
  manifest.out_dir = opts.out_dir;
  manifest.spec = spec;
  manifest.config = cfg;
  manifest.pretrain_from = opts.pretrain_from;
  manifest.pretrain_to = opts.pretrain_to.value_or(static_cast<uint32_t>(n - 1));

  StateVector state;
  if (opts.initial_state) {
    state = *opts.initial_state;
  } else if (cfg.pretrain) {
    if (opts.pretrain_from > 0 || manifest.pretrain_to + 1 < n) {
      auto sliced = detail::slice_interval(ds, opts.pretrain_from, manifest.pretrain_to);
      state = pretrain_static(sliced, spec, cfg);
    } else {
      state = pretrain_static(ds, spec, cfg);
    }
  } else {
    state = init_state(spec, ds.entities.size(), ds.relations.size(),
                       std::max<size_t>(1, n), cfg.seed);
  }

  FilterIndex filter(ds, opts.filter_scope);
  std::vector<TimestampRecord> records;
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  for (uint32_t t = 0; t < n; ++t) {
    state = train_timestamp(std::move(state), t, ds.train[t], spec, cfg, ds.valid[t], &filter);
    records.push_back(evaluate_timestamp(state, spec, ds.test[t], filter, cfg.threads));
    if (opts.on_state) opts.on_state(t, state);
    if (!opts.out_dir.empty() && opts.save_all_checkpoints) {
      std::string p = opts.out_dir + "/state_t" + std::to_string(t) + ".rtfe";
      write_checkpoint(state, p);
      manifest.checkpoints.push_back(p);
    }
  }

  RunResult res;
  res.report = make_report(std::move(records));
  manifest.last_timestamp = static_cast<int64_t>(n) - 1;
  if (!opts.out_dir.empty()) {
    manifest.latest_checkpoint = opts.out_dir + "/state_latest.rtfe";
    write_checkpoint(state, manifest.latest_checkpoint);
    write_vocab_sidecar(ds, manifest.latest_checkpoint + ".vocab.tsv");
    manifest.report_path = opts.out_dir + "/report.tsv";
    write_report(res.report, manifest.report_path);
    write_manifest(manifest, opts.out_dir + "/manifest.json");
  }
  res.manifest = std::move(manifest);
  res.final_state = std::move(state);
  return res;
}

/// Continues the recursion onto future timestamps only. `ds` must contain
/// the full timeline (observed + future); training starts right after the
/// state's fitted timestamp and never touches observed-era facts. Entities
/// and timestamps first seen in the future era get freshly initialized rows
/// seeded per timestamp.
inline RunResult run_extend(StateVector state, const TemporalDataset& ds, uint32_t future_from,
                            const ScorerSpec& spec, const TrainConfig& cfg,
                            const RunOptions& opts = {}) {
  cfg.validate();
  size_t n = ds.num_timestamps();
  if (state.fitted_timestamp >= static_cast<int64_t>(future_from)) {
    throw InputError("run_extend: future timestamps must lie after the fitted timestamp");
  }
  FilterIndex filter(ds, opts.filter_scope);
  std::vector<TimestampRecord> records;
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  RunManifest manifest;
  manifest.mode = "extend";
  manifest.out_dir = opts.out_dir;
  manifest.spec = spec;
  manifest.config = cfg;
  manifest.pretrain_from = 0;
  manifest.pretrain_to = future_from == 0 ? 0 : future_from - 1;

  for (uint32_t t = future_from; t < n; ++t) {
    grow_state(state, ds.entities.size(), t + 1, derive_seed(cfg.seed, 0x5eedULL + t));
    state.fitted_timestamp = static_cast<int64_t>(t) - 1;  // contiguous handoff into t
    state = train_timestamp(std::move(state), t, ds.train[t], spec, cfg);
    records.push_back(evaluate_timestamp(state, spec, ds.test[t], filter, cfg.threads));
    if (opts.on_state) opts.on_state(t, state);
  }

  RunResult res;
  res.report = make_report(std::move(records));
  manifest.last_timestamp = static_cast<int64_t>(n) - 1;
  if (!opts.out_dir.empty()) {
    manifest.latest_checkpoint = opts.out_dir + "/state_latest.rtfe";
    write_checkpoint(state, manifest.latest_checkpoint);
    manifest.report_path = opts.out_dir + "/report.tsv";
    write_report(res.report, manifest.report_path);
    write_manifest(manifest, opts.out_dir + "/manifest.json");
  }
  res.manifest = std::move(manifest);
  res.final_state = std::move(state);
  return res;
}

}  // namespace rtfe

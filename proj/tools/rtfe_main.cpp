// rtfe: temporal knowledge-graph completion by recursive per-timestamp
// fine-tuning of a pre-trained embedding state.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtfe/checkpoint.hpp"
#include "rtfe/config.hpp"
#include "rtfe/dataset.hpp"
#include "rtfe/evaluator.hpp"
#include "rtfe/synth.hpp"
#include "rtfe/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

std::string resolve_dataset_dir(const std::string& path) {
  if (path.empty()) return path;
  if (std::filesystem::exists(path)) return path;
  const char* root = std::getenv("RTFE_DATA_DIR");
  if (root != nullptr) {
    std::string joined = std::string(root) + "/" + path;
    if (std::filesystem::exists(joined)) return joined;
  }
  return path;
}

void print_dataset_summary(const rtfe::TemporalDataset& ds) {
  std::cout << "#Entity\t#Relation\t#Timestamp\t#Train\t#Validation\t#Test\n";
  std::cout << ds.entities.size() << '\t' << ds.relations.size() << '\t' << ds.num_timestamps()
            << '\t' << ds.split_size(rtfe::Split::Train) << '\t'
            << ds.split_size(rtfe::Split::Valid) << '\t' << ds.split_size(rtfe::Split::Test)
            << '\n';
}

struct CmdIngest {
  std::string dir;
  std::string out;
  bool intervals = false;
  size_t bin_threshold = 300;

  int run() const {
    std::string src = resolve_dataset_dir(dir);
    if (intervals) {
      // Boundaries are computed over the union of all splits, then each
      // split is re-emitted in the quadruple format.
      std::vector<std::pair<std::string, std::string>> files;
      for (const char* name : {"train", "valid", "test"}) {
        std::string p = src + "/" + name + ".txt";
        if (std::filesystem::exists(p)) files.emplace_back(name, p);
      }
      if (files.empty()) throw rtfe::InputError("no split files found in " + src);
      std::vector<rtfe::IntervalFact> all;
      std::vector<std::vector<rtfe::IntervalFact>> per_split;
      for (const auto& [name, p] : files) {
        per_split.push_back(rtfe::read_interval_facts(p));
        all.insert(all.end(), per_split.back().begin(), per_split.back().end());
      }
      // Boundaries come from the whole corpus; each split is binned against
      // them so all splits share one timestamp axis.
      auto boundaries = rtfe::timestamp_boundaries(all, bin_threshold);
      int max_year = rtfe::corpus_max_year(all);
      std::filesystem::create_directories(out);
      for (size_t i = 0; i < files.size(); ++i) {
        auto binned = rtfe::bin_with_boundaries(per_split[i], boundaries, max_year);
        rtfe::write_binned(binned, out + "/" + files[i].first + ".txt");
      }
      auto ds = rtfe::load_dataset(out);
      print_dataset_summary(ds);
      return kExitOk;
    }
    auto ds = rtfe::load_dataset(src);
    print_dataset_summary(ds);
    if (!out.empty() && out != src) rtfe::write_dataset(ds, out);
    return kExitOk;
  }
};

int cmd_run(const rtfe::RunSettings& settings) {
  rtfe::RunSettings s = settings;
  s.dataset_dir = resolve_dataset_dir(s.dataset_dir);
  if (s.dataset_dir.empty()) throw rtfe::InputError("run: --dataset is required");
  rtfe::TemporalDataset ds = rtfe::load_dataset(s.dataset_dir);

  rtfe::RunOptions opts;
  opts.out_dir = s.out_dir;
  opts.save_all_checkpoints = s.save_all_checkpoints;
  opts.pretrain_from = s.pretrain_from;
  opts.pretrain_to = s.pretrain_to;
  opts.filter_scope = s.filter_scope;

  std::filesystem::create_directories(s.out_dir);
  {
    std::ofstream snap(s.out_dir + "/config.snapshot");
    snap << rtfe::settings_to_config(s);
  }

  rtfe::RunResult res;
  if (s.mode == "pretrain") {
    rtfe::StateVector st = rtfe::pretrain_static(ds, s.spec, s.config);
    rtfe::write_checkpoint(st, s.out_dir + "/state_latest.rtfe");
    rtfe::write_vocab_sidecar(ds, s.out_dir + "/state_latest.rtfe.vocab.tsv");
    rtfe::FilterIndex filter(ds, s.filter_scope);
    std::vector<rtfe::TimestampRecord> records;
    for (uint32_t t = 0; t < ds.num_timestamps(); ++t) {
      records.push_back(rtfe::evaluate_timestamp(st, s.spec, ds.test[t], filter,
                                                 s.config.threads));
    }
    res.report = rtfe::make_report(std::move(records));
    res.manifest.mode = "pretrain";
    res.manifest.dataset_dir = s.dataset_dir;
    res.manifest.out_dir = s.out_dir;
    res.manifest.spec = s.spec;
    res.manifest.config = s.config;
    res.manifest.latest_checkpoint = s.out_dir + "/state_latest.rtfe";
    res.manifest.report_path = s.out_dir + "/report.tsv";
    rtfe::write_report(res.report, res.manifest.report_path);
    rtfe::write_manifest(res.manifest, s.out_dir + "/manifest.json");
  } else if (s.mode == "extend") {
    if (s.from_manifest.empty()) throw rtfe::InputError("extend: --from <manifest> is required");
    rtfe::RunManifest src = rtfe::read_manifest(s.from_manifest);
    rtfe::StateVector st = rtfe::read_checkpoint(src.latest_checkpoint);
    uint32_t future_from = static_cast<uint32_t>(src.last_timestamp + 1);
    res = rtfe::run_extend(std::move(st), ds, future_from, src.spec, s.config, opts);
  } else if (s.mode == "enhance") {
    if (s.from_manifest.empty()) throw rtfe::InputError("enhance: --from <manifest> is required");
    rtfe::RunManifest src = rtfe::read_manifest(s.from_manifest);
    opts.initial_state = rtfe::read_checkpoint(src.latest_checkpoint);
    res = rtfe::run_recursive(ds, src.spec, s.config, opts);
  } else if (s.mode == "recursive" || s.mode == "ablation") {
    if (s.mode == "ablation") s.config.pretrain = false;
    res = rtfe::run_recursive(ds, s.spec, s.config, opts);
  } else {
    throw rtfe::InputError("unknown mode: " + s.mode);
  }
  res.manifest.dataset_dir = s.dataset_dir;
  if (!s.out_dir.empty()) rtfe::write_manifest(res.manifest, s.out_dir + "/manifest.json");

  std::cout << rtfe::format_summary(res.report);
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw rtfe::InputError("report: at least one run directory is required");
  struct Row {
    std::string name;
    rtfe::TimestampRecord agg;
    std::optional<std::pair<uint32_t, uint32_t>> interval;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    std::string report_path = dir + "/report.tsv";
    if (!std::filesystem::exists(report_path)) {
      throw rtfe::InputError("missing report: " + report_path);
    }
    Row row;
    row.name = std::filesystem::path(dir).filename().string();
    row.agg = rtfe::read_report(report_path).aggregate;
    std::string manifest_path = dir + "/manifest.json";
    if (std::filesystem::exists(manifest_path)) {
      auto m = rtfe::read_manifest(manifest_path);
      row.interval = {m.pretrain_from, m.pretrain_to};
    }
    rows.push_back(std::move(row));
  }

  std::cout << std::fixed << std::setprecision(3);
  std::cout << std::left << std::setw(24) << "run" << std::right << std::setw(8) << "MRR"
            << std::setw(8) << "H@1" << std::setw(8) << "H@3" << std::setw(8) << "H@10"
            << std::setw(10) << "rel MR" << std::setw(9) << "rel H@1" << '\n';
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(24) << r.name << std::right << std::setw(8)
              << r.agg.mrr() << std::setw(8) << r.agg.hits1() << std::setw(8) << r.agg.hits3()
              << std::setw(8) << r.agg.hits10() << std::setw(10) << r.agg.rel_mr << std::setw(9)
              << r.agg.rel_hits1 << '\n';
  }

  bool all_intervals = !rows.empty();
  for (const auto& r : rows) all_intervals = all_intervals && r.interval.has_value();
  if (all_intervals && rows.size() > 1) {
    std::cout << "\n# pretrain-interval MRR series (interval\tMRR)\n";
    for (const auto& r : rows) {
      std::cout << r.interval->first << ".." << r.interval->second << '\t' << r.agg.mrr()
                << '\n';
    }
  }
  return kExitOk;
}

int cmd_synth(const rtfe::SynthProfile& profile, const std::string& out) {
  rtfe::TemporalDataset ds = rtfe::generate(profile);
  rtfe::write_dataset(ds, out);
  print_dataset_summary(ds);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RTFE: recursive temporal fact embedding for TKG completion"};
  app.require_subcommand(1);

  // ingest
  CmdIngest ingest;
  auto* ing = app.add_subcommand("ingest", "load a dataset and print its statistics");
  ing->add_option("--dir", ingest.dir, "dataset directory (train/valid/test .txt)")->required();
  ing->add_option("--out", ingest.out, "re-emit the dataset here");
  ing->add_flag("--intervals", ingest.intervals, "inputs are interval facts; bin them");
  ing->add_option("--bin-threshold", ingest.bin_threshold,
                  "occurrence threshold for boundary years");

  // run
  rtfe::RunSettings settings;
  std::string config_path, model_name, pretrain_flag, pretrain_interval, filter_scope_flag,
      optimizer_flag;
  auto* run = app.add_subcommand("run", "train and evaluate");
  run->add_option("--config", config_path, "config file (key = value)");
  run->add_option("--mode", settings.mode, "pretrain|recursive|enhance|extend|ablation");
  run->add_option("--dataset", settings.dataset_dir, "dataset directory");
  run->add_option("--from", settings.from_manifest, "source manifest for extend/enhance");
  run->add_option("--model", model_name, "TransE|RotatE|ComplEx|TComplEx|DE-SimplE");
  run->add_option("--dim", settings.spec.d, "embedding dimension");
  run->add_option("--lr", settings.config.lr, "learning rate");
  run->add_option("--epochs-static", settings.config.epochs_static, "pretraining epochs");
  run->add_option("--epochs-tem", settings.config.epochs_tem, "epochs per timestamp");
  run->add_option("--batch-size", settings.config.batch_size, "minibatch size");
  run->add_option("--neg-ratio", settings.config.neg_ratio, "negatives per positive");
  run->add_option("--optimizer", optimizer_flag, "sgd|adagrad");
  run->add_option("--pretrain", pretrain_flag, "on|off");
  run->add_option("--pretrain-interval", pretrain_interval, "a..b timestamp interval");
  run->add_option("--seed", settings.config.seed, "run seed");
  run->add_option("--threads", settings.config.threads, "evaluation worker cap");
  run->add_option("--out", settings.out_dir, "output directory");
  run->add_option("--filter-scope", filter_scope_flag, "timestamp|global");

  // report
  std::vector<std::string> run_dirs;
  auto* rep = app.add_subcommand("report", "compare run reports");
  rep->add_option("dirs", run_dirs, "run output directories")->required();

  // synth
  rtfe::SynthProfile profile;
  std::string synth_out = "synth-data";
  auto* synth = app.add_subcommand("synth", "generate a synthetic temporal KG");
  synth->add_option("--entities", profile.num_entities, "number of entities");
  synth->add_option("--relations", profile.num_relations, "number of relations");
  synth->add_option("--timestamps", profile.num_timestamps, "number of timestamps");
  synth->add_option("--facts", profile.facts_per_timestamp, "facts per timestamp");
  synth->add_option("--continuity", profile.continuity, "fraction of facts persisting");
  synth->add_option("--drift", profile.drift_step, "latent random-walk step");
  synth->add_option("--test-fraction", profile.test_fraction, "held-out fraction per split");
  synth->add_option("--seed", profile.seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");

  try {
    app.parse(argc, argv);
    if (ing->parsed()) return ingest.run();
    if (run->parsed()) {
      // Precedence: flag > config file > default. Merge both sources into
      // one key map (flags on top) and apply it in one pass; apply_settings
      // puts the model key first so family defaults never clobber explicit
      // values.
      std::map<std::string, std::string> kv;
      if (!config_path.empty()) kv = rtfe::read_config_file(config_path);
      auto overridden = [&](const char* flag) { return run->count(flag) > 0; };
      if (overridden("--mode")) kv["mode"] = settings.mode;
      if (overridden("--dataset")) kv["dataset"] = settings.dataset_dir;
      if (overridden("--from")) kv["from"] = settings.from_manifest;
      if (overridden("--model")) kv["model"] = model_name;
      if (overridden("--dim")) kv["dim"] = std::to_string(settings.spec.d);
      if (overridden("--lr")) {
        std::ostringstream lr;
        lr << std::setprecision(17) << settings.config.lr;
        kv["lr"] = lr.str();
      }
      if (overridden("--epochs-static")) {
        kv["epochs_static"] = std::to_string(settings.config.epochs_static);
      }
      if (overridden("--epochs-tem")) kv["epochs_tem"] = std::to_string(settings.config.epochs_tem);
      if (overridden("--batch-size")) kv["batch_size"] = std::to_string(settings.config.batch_size);
      if (overridden("--neg-ratio")) kv["neg_ratio"] = std::to_string(settings.config.neg_ratio);
      if (overridden("--optimizer")) kv["optimizer"] = optimizer_flag;
      if (overridden("--pretrain")) kv["pretrain"] = pretrain_flag;
      if (overridden("--pretrain-interval")) kv["pretrain_interval"] = pretrain_interval;
      if (overridden("--seed")) kv["seed"] = std::to_string(settings.config.seed);
      if (overridden("--threads")) kv["threads"] = std::to_string(settings.config.threads);
      if (overridden("--out")) kv["out"] = settings.out_dir;
      if (overridden("--filter-scope")) kv["filter_scope"] = filter_scope_flag;
      rtfe::RunSettings resolved;
      rtfe::apply_settings(resolved, kv);
      return cmd_run(resolved);
    }
    if (rep->parsed()) return cmd_report(run_dirs);
    if (synth->parsed()) return cmd_synth(profile, synth_out);
    return kExitInput;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  } catch (const rtfe::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const rtfe::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

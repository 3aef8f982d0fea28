#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtfe/core.hpp"

namespace rtfe {

/// Bidirectional name <-> index map with first-seen interning order.
class Vocab {
 public:
  uint32_t intern(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(names_.size());
    names_.push_back(name);
    index_.emplace(name, id);
    return id;
  }

  std::optional<uint32_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(uint32_t id) const { return names_[id]; }
  size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, uint32_t> index_;
};

/// Time-agnostic set of deduplicated (s, r, o) triples.
struct StaticGraph {
  std::vector<Triple> triples;  // sorted, unique
};

/// Raw fact with a validity interval, before timestamp binning.
struct IntervalFact {
  std::string s, r, o;
  int start_year = 0;
  std::optional<int> end_year;  // absent = open ("until now")
};

enum class Split { Train, Valid, Test };

/// Vocabularies plus per-timestamp train/valid/test graphs in chronological
/// order. Immutable once built; safe to share across readers.
struct TemporalDataset {
  Vocab entities;
  Vocab relations;
  std::vector<std::string> timestamp_labels;
  std::vector<std::vector<Quadruple>> train;  // one sorted, deduped vector per timestamp
  std::vector<std::vector<Quadruple>> valid;
  std::vector<std::vector<Quadruple>> test;

  size_t num_timestamps() const { return timestamp_labels.size(); }

  const std::vector<std::vector<Quadruple>>& split(Split sp) const {
    switch (sp) {
      case Split::Train: return train;
      case Split::Valid: return valid;
      default: return test;
    }
  }

  size_t split_size(Split sp) const {
    size_t n = 0;
    for (const auto& g : split(sp)) n += g.size();
    return n;
  }

  std::vector<Quadruple> all_of(Split sp) const {
    std::vector<Quadruple> out;
    for (const auto& g : split(sp)) out.insert(out.end(), g.begin(), g.end());
    return out;
  }
};

namespace detail {

struct RawFact {
  std::string s, r, o, t;
};

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline std::optional<long long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<RawFact> read_raw_quadruples(const std::string& path, char sep) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::vector<RawFact> facts;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line, sep);
    if (fields.size() != 4) {
      throw InputError(path + ":" + std::to_string(lineno) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    facts.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  if (facts.empty()) throw InputError(path + ": no facts found");
  return facts;
}

/// Orders timestamp labels numerically when every label parses as an
/// integer, lexicographically otherwise.
inline std::vector<std::string> sorted_labels(const std::set<std::string>& labels) {
  std::vector<std::string> out(labels.begin(), labels.end());
  bool all_numeric = true;
  for (const auto& l : out) {
    if (!parse_int(l)) {
      all_numeric = false;
      break;
    }
  }
  if (all_numeric) {
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return *parse_int(a) < *parse_int(b);
    });
  } else {
    std::sort(out.begin(), out.end());
  }
  return out;
}

inline void sort_dedup(std::vector<Quadruple>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace detail

/// Builds a dataset from up to three quadruple files. The vocabulary spans
/// all splits jointly, interned in first-seen order (train, then valid, then
/// test); the timestamp axis is the sorted union of labels seen anywhere.
inline TemporalDataset ingest_quadruples(const std::string& train_path,
                                         const std::optional<std::string>& valid_path = {},
                                         const std::optional<std::string>& test_path = {},
                                         char sep = '\t') {
  std::vector<std::vector<detail::RawFact>> raw(3);
  raw[0] = detail::read_raw_quadruples(train_path, sep);
  if (valid_path) raw[1] = detail::read_raw_quadruples(*valid_path, sep);
  if (test_path) raw[2] = detail::read_raw_quadruples(*test_path, sep);

  std::set<std::string> labels;
  for (const auto& facts : raw) {
    for (const auto& f : facts) labels.insert(f.t);
  }

  TemporalDataset ds;
  ds.timestamp_labels = detail::sorted_labels(labels);
  std::unordered_map<std::string, uint32_t> t_index;
  for (uint32_t i = 0; i < ds.timestamp_labels.size(); ++i) {
    t_index.emplace(ds.timestamp_labels[i], i);
  }

  size_t n = ds.timestamp_labels.size();
  ds.train.resize(n);
  ds.valid.resize(n);
  ds.test.resize(n);
  std::vector<std::vector<Quadruple>>* splits[3] = {&ds.train, &ds.valid, &ds.test};
  for (int i = 0; i < 3; ++i) {
    for (const auto& f : raw[i]) {
      Quadruple q{ds.entities.intern(f.s), ds.relations.intern(f.r), ds.entities.intern(f.o),
                  t_index.at(f.t)};
      (*splits[i])[q.t].push_back(q);
    }
    for (auto& g : *splits[i]) detail::sort_dedup(g);
  }
  return ds;
}

/// Writes one split back to the tab-separated quadruple format.
/// Lines come out in a canonical order (lexicographic by names within each
/// timestamp), so writing is a stable round-trip: write -> ingest -> write
/// is byte-identical regardless of index assignment.
inline void write_quadruples(const TemporalDataset& ds, Split sp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  for (const auto& g : ds.split(sp)) {
    std::vector<std::string> lines;
    lines.reserve(g.size());
    for (const auto& q : g) {
      lines.push_back(ds.entities.name(q.s) + '\t' + ds.relations.name(q.r) + '\t' +
                      ds.entities.name(q.o) + '\t' + ds.timestamp_labels[q.t]);
    }
    std::sort(lines.begin(), lines.end());
    for (const auto& l : lines) out << l << '\n';
  }
}

inline void write_dataset(const TemporalDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_quadruples(ds, Split::Train, dir + "/train.txt");
  if (ds.split_size(Split::Valid) > 0) write_quadruples(ds, Split::Valid, dir + "/valid.txt");
  if (ds.split_size(Split::Test) > 0) write_quadruples(ds, Split::Test, dir + "/test.txt");
}

inline TemporalDataset load_dataset(const std::string& dir) {
  auto opt_path = [&](const char* name) -> std::optional<std::string> {
    std::string p = dir + "/" + name;
    if (std::filesystem::exists(p)) return p;
    return std::nullopt;
  };
  std::string train = dir + "/train.txt";
  if (!std::filesystem::exists(train)) throw InputError("missing " + train);
  return ingest_quadruples(train, opt_path("valid.txt"), opt_path("test.txt"));
}

/// Merges the selected splits' timestamp graphs into one static graph,
/// dropping timestamps and deduplicating.
inline StaticGraph collapse_static(const TemporalDataset& ds,
                                   const std::vector<Split>& splits = {Split::Train}) {
  if (splits.empty()) throw InputError("collapse_static: no splits selected");
  std::set<Triple> triples;
  for (Split sp : splits) {
    for (const auto& g : ds.split(sp)) {
      for (const auto& q : g) triples.insert({q.s, q.r, q.o});
    }
  }
  StaticGraph out;
  out.triples.assign(triples.begin(), triples.end());
  return out;
}

/// Reads interval facts: s, r, o, start_year, end_year ("####" = open end).
inline std::vector<IntervalFact> read_interval_facts(const std::string& path, char sep = '\t') {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::vector<IntervalFact> facts;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split_fields(line, sep);
    if (fields.size() != 5) {
      throw InputError(path + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    IntervalFact f;
    f.s = fields[0];
    f.r = fields[1];
    f.o = fields[2];
    auto start = detail::parse_int(fields[3]);
    if (!start) throw InputError(path + ":" + std::to_string(lineno) + ": bad start year");
    f.start_year = static_cast<int>(*start);
    if (fields[4] != "####") {
      auto end = detail::parse_int(fields[4]);
      if (!end) throw InputError(path + ":" + std::to_string(lineno) + ": bad end year");
      if (*end < f.start_year) {
        throw InputError(path + ":" + std::to_string(lineno) + ": end year before start year");
      }
      f.end_year = static_cast<int>(*end);
    }
    facts.push_back(std::move(f));
  }
  if (facts.empty()) throw InputError(path + ": no facts found");
  return facts;
}

struct BinnedFacts {
  std::vector<std::string> bin_labels;                       // chronological
  std::vector<std::vector<IntervalFact>> facts_per_bin;      // fact copies per overlapped bin
};

inline int corpus_max_year(const std::vector<IntervalFact>& facts) {
  int max_year = facts.at(0).start_year;
  for (const auto& f : facts) {
    max_year = std::max(max_year, f.end_year.value_or(f.start_year));
  }
  return max_year;
}

///// Boundary years: those contained in more than min_occurrences fact
/// intervals. Open ends are clamped to the corpus maximum year.
inline std::vector<int> timestamp_boundaries(const std::vector<IntervalFact>& facts,
                                             size_t min_occurrences) {
  if (facts.empty()) throw InputError("bin_timestamps: no facts");
  int max_year = corpus_max_year(facts);
  std::map<int, size_t> year_count;
  for (const auto& f : facts) {
    int end = f.end_year.value_or(max_year);
    for (int y = f.start_year; y <= end; ++y) ++year_count[y];
  }
  std::vector<int> boundaries;
  for (auto [year, count] : year_count) {
    if (count > min_occurrences) boundaries.push_back(year);
  }
  if (boundaries.empty()) {
    throw InputError("bin_timestamps: no year has more than " + std::to_string(min_occurrences) +
                     " occurrences; lower the threshold");
  }
  return boundaries;
}

/// Bins interval facts against precomputed boundary years; bins are
/// half-open [b_i, b_{i+1}) with the last bin running to max_year. A fact is
/// emitted once per bin its interval overlaps.
inline BinnedFacts bin_with_boundaries(const std::vector<IntervalFact>& facts,
                                       const std::vector<int>& boundaries, int max_year) {
  if (facts.empty()) throw InputError("bin_timestamps: no facts");
  if (boundaries.empty()) throw InputError("bin_timestamps: no boundaries");
  BinnedFacts out;
  size_t nbins = boundaries.size();
  out.facts_per_bin.resize(nbins);
  for (size_t i = 0; i < nbins; ++i) {
    int lo = boundaries[i];
    int hi = (i + 1 < nbins) ? boundaries[i + 1] - 1 : max_year;
    out.bin_labels.push_back(std::to_string(lo) + "-" + std::to_string(hi));
  }

  for (const auto& f : facts) {
    int start = f.start_year;
    int end = f.end_year.value_or(max_year);
    bool placed = false;
    for (size_t i = 0; i < nbins; ++i) {
      int lo = boundaries[i];
      int hi = (i + 1 < nbins) ? boundaries[i + 1] - 1 : max_year;
      if (start <= hi && end >= lo) {
        out.facts_per_bin[i].push_back(f);
        placed = true;
      }
    }
    // Intervals entirely before the first boundary attach to the first bin.
    if (!placed) out.facts_per_bin[0].push_back(f);
  }
  return out;
}

/// Bins interval facts into discrete timestamps. Years whose occurrence
/// count exceeds min_occurrences become boundaries.
inline BinnedFacts bin_timestamps(const std::vector<IntervalFact>& facts,
                                  size_t min_occurrences = 300) {
  auto boundaries = timestamp_boundaries(facts, min_occurrences);
  return bin_with_boundaries(facts, boundaries, corpus_max_year(facts));
}

/// Writes binned facts as a quadruple file whose timestamp labels are the
/// bin labels, ready for ingest_quadruples.
inline void write_binned(const BinnedFacts& binned, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  for (size_t i = 0; i < binned.bin_labels.size(); ++i) {
    for (const auto& f : binned.facts_per_bin[i]) {
      out << f.s << '\t' << f.r << '\t' << f.o << '\t' << binned.bin_labels[i] << '\n';
    }
  }
}

}  // namespace rtfe

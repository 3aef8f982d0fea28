#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rtfe/dataset.hpp"
#include "rtfe/scorers.hpp"

namespace rtfe {

enum class FilterScope { Timestamp, Global };

/// True-fact index over train + valid + test, keyed by the two fixed slots
/// of a corruption query. With FilterScope::Global the time key collapses
/// to a single bucket, excluding candidates true at any timestamp.
class FilterIndex {
 public:
  FilterIndex() = default;

  explicit FilterIndex(const TemporalDataset& ds, FilterScope scope = FilterScope::Timestamp)
      : scope_(scope) {
    for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
      for (const auto& g : ds.split(sp)) {
        for (const auto& q : g) insert(q);
      }
    }
  }

  void insert(const Quadruple& q) {
    uint32_t t = scope_ == FilterScope::Timestamp ? q.t : 0;
    heads_[pack(q.r, q.o, t)].insert(q.s);
    tails_[pack(q.s, q.r, t)].insert(q.o);
    rels_[pack(q.s, q.o, t)].insert(q.r);
  }

  bool contains(const Quadruple& q, Slot slot) const {
    uint32_t t = scope_ == FilterScope::Timestamp ? q.t : 0;
    switch (slot) {
      case Slot::Head: return has(heads_, pack(q.r, q.o, t), q.s);
      case Slot::Tail: return has(tails_, pack(q.s, q.r, t), q.o);
      default: return has(rels_, pack(q.s, q.o, t), q.r);
    }
  }

  FilterScope scope() const { return scope_; }

 private:
  static uint64_t pack(uint32_t a, uint32_t b, uint32_t t) {
    return (static_cast<uint64_t>(a) << 40) ^ (static_cast<uint64_t>(b) << 16) ^ t;
  }
  using Map = std::unordered_map<uint64_t, std::unordered_set<uint32_t>>;
  static bool has(const Map& m, uint64_t key, uint32_t v) {
    auto it = m.find(key);
    return it != m.end() && it->second.count(v) > 0;
  }

  FilterScope scope_ = FilterScope::Timestamp;
  Map heads_, tails_, rels_;
};

/// Filtered rank of a true quadruple against all corruptions of one slot.
/// Ties resolve to the expected rank under random tie-breaking:
///   rank = 1 + #{better} + floor(#{equal}/2).
inline uint32_t rank_query(const StateVector& st, const ScorerSpec& spec, const Quadruple& q,
                           Slot slot, const FilterIndex& filter) {
  double target = score(st, spec, q);
  size_t n_candidates =
      slot == Slot::Relation ? st.relation_features.rows() : st.entity_features.rows();
  uint32_t original = slot == Slot::Head ? q.s : (slot == Slot::Tail ? q.o : q.r);
  uint32_t better = 0, equal = 0;
  Quadruple c = q;
  for (uint32_t cand = 0; cand < n_candidates; ++cand) {
    if (cand == original) continue;
    switch (slot) {
      case Slot::Head: c.s = cand; break;
      case Slot::Tail: c.o = cand; break;
      default: c.r = cand; break;
    }
    if (filter.contains(c, slot)) continue;
    double sc = score(st, spec, c);
    if (sc > target) {
      ++better;
    } else if (sc == target) {
      ++equal;
    }
  }
  return 1 + better + equal / 2;
}

/// Per-timestamp metric record. Entity prediction reports MRR and Hits@n
/// split by head/tail; relation prediction reports MR and Hits@1.
struct TimestampRecord {
  uint32_t t = 0;
  size_t count = 0;  // |G'_t|
  double mrr_head = 0, mrr_tail = 0;
  double hits1_head = 0, hits1_tail = 0;
  double hits3_head = 0, hits3_tail = 0;
  double hits10_head = 0, hits10_tail = 0;
  double mr_head = 0, mr_tail = 0;
  double rel_mr = 0;
  double rel_hits1 = 0;

  double mrr() const { return 0.5 * (mrr_head + mrr_tail); }
  double hits1() const { return 0.5 * (hits1_head + hits1_tail); }
  double hits3() const { return 0.5 * (hits3_head + hits3_tail); }
  double hits10() const { return 0.5 * (hits10_head + hits10_tail); }
};

struct EvalReport {
  std::vector<TimestampRecord> records;
  TimestampRecord aggregate;  // count = total, t unused

  bool empty() const {
    for (const auto& r : records) {
      if (r.count > 0) return false;
    }
    return true;
  }
};

namespace detail {

struct RankTriple {
  uint32_t head = 0, tail = 0, rel = 0;
};

inline void parallel_for(size_t n, unsigned threads, const std::function<void(size_t)>& body) {
  if (threads <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
  };
  std::vector<std::thread> pool;
  unsigned k = std::min<unsigned>(threads, std::thread::hardware_concurrency());
  for (unsigned w = 0; w + 1 < std::max(1u, k); ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

inline TimestampRecord record_from_ranks(uint32_t t, const std::vector<RankTriple>& ranks) {
  TimestampRecord rec;
  rec.t = t;
  rec.count = ranks.size();
  if (ranks.empty()) return rec;
  double n = static_cast<double>(ranks.size());
  for (const auto& r : ranks) {
    rec.mrr_head += 1.0 / r.head;
    rec.mrr_tail += 1.0 / r.tail;
    rec.mr_head += r.head;
    rec.mr_tail += r.tail;
    rec.hits1_head += r.head <= 1;
    rec.hits1_tail += r.tail <= 1;
    rec.hits3_head += r.head <= 3;
    rec.hits3_tail += r.tail <= 3;
    rec.hits10_head += r.head <= 10;
    rec.hits10_tail += r.tail <= 10;
    rec.rel_mr += r.rel;
    rec.rel_hits1 += r.rel <= 1;
  }
  rec.mrr_head /= n;
  rec.mrr_tail /= n;
  rec.mr_head /= n;
  rec.mr_tail /= n;
  rec.hits1_head /= n;
  rec.hits1_tail /= n;
  rec.hits3_head /= n;
  rec.hits3_tail /= n;
  rec.hits10_head /= n;
  rec.hits10_tail /= n;
  rec.rel_mr /= n;
  rec.rel_hits1 /= n;
  return rec;
}

}  // namespace detail

/// Ranks every test quadruple of one timestamp in all three slots.
/// Queries are independent; `threads` > 1 parallelizes them with a
/// deterministic per-query result layout.
inline TimestampRecord evaluate_timestamp(const StateVector& st, const ScorerSpec& spec,
                                          const std::vector<Quadruple>& test_quads,
                                          const FilterIndex& filter, unsigned threads = 1) {
  uint32_t t = test_quads.empty() ? 0 : test_quads[0].t;
  std::vector<detail::RankTriple> ranks(test_quads.size());
  detail::parallel_for(test_quads.size(), threads, [&](size_t i) {
    const Quadruple& q = test_quads[i];
    ranks[i].head = rank_query(st, spec, q, Slot::Head, filter);
    ranks[i].tail = rank_query(st, spec, q, Slot::Tail, filter);
    ranks[i].rel = rank_query(st, spec, q, Slot::Relation, filter);
  });
  return detail::record_from_ranks(t, ranks);
}

/// Size-weighted aggregate across timestamps; exactly the metric over the
/// pooled rank multiset.
inline TimestampRecord aggregate(const std::vector<TimestampRecord>& records) {
  TimestampRecord agg;
  size_t total = 0;
  for (const auto& r : records) total += r.count;
  if (total == 0) throw InputError("aggregate: all records empty");
  agg.count = total;
  double n = static_cast<double>(total);
  for (const auto& r : records) {
    double w = static_cast<double>(r.count) / n;
    agg.mrr_head += w * r.mrr_head;
    agg.mrr_tail += w * r.mrr_tail;
    agg.mr_head += w * r.mr_head;
    agg.mr_tail += w * r.mr_tail;
    agg.hits1_head += w * r.hits1_head;
    agg.hits1_tail += w * r.hits1_tail;
    agg.hits3_head += w * r.hits3_head;
    agg.hits3_tail += w * r.hits3_tail;
    agg.hits10_head += w * r.hits10_head;
    agg.hits10_tail += w * r.hits10_tail;
    agg.rel_mr += w * r.rel_mr;
    agg.rel_hits1 += w * r.rel_hits1;
  }
  return agg;
}

inline EvalReport make_report(std::vector<TimestampRecord> records) {
  EvalReport rep;
  rep.records = std::move(records);
  std::vector<TimestampRecord> nonempty;
  for (const auto& r : rep.records) {
    if (r.count > 0) nonempty.push_back(r);
  }
  if (!nonempty.empty()) rep.aggregate = aggregate(nonempty);
  return rep;
}

// ---------------------------------------------------------------------------
// Report I/O: one tab-separated record per line plus an aggregate line.

inline void write_report(const EvalReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write report: " + path);
  out << std::setprecision(17);
  out << "#t\tcount\tmrr_head\tmrr_tail\thits1_head\thits1_tail\thits3_head\thits3_tail\t"
         "hits10_head\thits10_tail\tmr_head\tmr_tail\trel_mr\trel_hits1\n";
  auto line = [&](const std::string& tag, const TimestampRecord& r) {
    out << tag << '\t' << r.count << '\t' << r.mrr_head << '\t' << r.mrr_tail << '\t'
        << r.hits1_head << '\t' << r.hits1_tail << '\t' << r.hits3_head << '\t' << r.hits3_tail
        << '\t' << r.hits10_head << '\t' << r.hits10_tail << '\t' << r.mr_head << '\t'
        << r.mr_tail << '\t' << r.rel_mr << '\t' << r.rel_hits1 << '\n';
  };
  for (const auto& r : rep.records) line(std::to_string(r.t), r);
  line("aggregate", rep.aggregate);
}

inline EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open report: " + path);
  EvalReport rep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    TimestampRecord r;
    ss >> tag >> r.count >> r.mrr_head >> r.mrr_tail >> r.hits1_head >> r.hits1_tail >>
        r.hits3_head >> r.hits3_tail >> r.hits10_head >> r.hits10_tail >> r.mr_head >>
        r.mr_tail >> r.rel_mr >> r.rel_hits1;
    if (!ss && line.find("aggregate") == std::string::npos) {
      throw InputError(path + ": malformed report line: " + line);
    }
    if (tag == "aggregate") {
      rep.aggregate = r;
    } else {
      r.t = static_cast<uint32_t>(std::stoul(tag));
      rep.records.push_back(r);
    }
  }
  return rep;
}

/// Human-readable summary in the usual column layout (tail/head split).
inline std::string format_summary(const EvalReport& rep) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "            MRR          Hits@1       Hits@3       Hits@10      rel MR  rel H@1\n";
  out << "            tail  head   tail  head   tail  head   tail  head\n";
  auto line = [&](const std::string& tag, const TimestampRecord& r) {
    out << std::left << std::setw(10) << tag << std::right << "  " << std::setw(5) << r.mrr_tail
        << ' ' << std::setw(5) << r.mrr_head << "  " << std::setw(5) << r.hits1_tail << ' '
        << std::setw(5) << r.hits1_head << "  " << std::setw(5) << r.hits3_tail << ' '
        << std::setw(5) << r.hits3_head << "  " << std::setw(5) << r.hits10_tail << ' '
        << std::setw(5) << r.hits10_head << "  " << std::setw(6) << r.rel_mr << "  "
        << std::setw(5) << r.rel_hits1 << '\n';
  };
  for (const auto& r : rep.records) {
    if (r.count > 0) line("t=" + std::to_string(r.t), r);
  }
  line("all", rep.aggregate);
  return out.str();
}

}  // namespace rtfe

// SPDX-License-Identifier: Apache-2.0
#include "trajforge/splits.hpp"

#include <algorithm>
#include <cmath>

#include "trajforge/errors.hpp"
#include "trajforge/hash.hpp"
#include "trajforge/jsonl.hpp"

namespace trajforge {

ElementBits element_signature(const Trajectory& traj) {
  ElementBits bits;
  for (const auto& [symbol, count] : traj.composition) {
    auto idx = element_index(symbol);
    if (!idx) {
      throw Error(Errc::ParseFailure,
                  "trajectory " + traj.trajectory_id + " has unknown element \"" +
                      symbol + "\"");
    }
    bits.set(static_cast<std::size_t>(*idx));
  }
  return bits;
}

TrajSummary summarize(const Trajectory& traj) {
  TrajSummary s;
  s.trajectory_id = traj.trajectory_id;
  s.source = traj.frames.empty() ? SourceId::MaterialsProject : traj.frames.front().source;
  s.signature = element_signature(traj);
  return s;
}

std::size_t SplitAssignment::test_count() const {
  std::size_t n = 0;
  for (const auto& [id, label] : labels) {
    if (label == SplitLabel::test) ++n;
  }
  return n;
}

namespace {

// (hash, id) sort key: the id tiebreak makes the order total even on the
// astronomically unlikely hash collision.
struct Draw {
  std::uint64_t hash;
  const TrajSummary* traj;
};

bool draw_less(const Draw& a, const Draw& b) {
  if (a.hash != b.hash) return a.hash < b.hash;
  return a.traj->trajectory_id < b.traj->trajectory_id;
}

void check_split_config(const SplitConfig& cfg) {
  if (!(cfg.test_fraction > 0.0) || !(cfg.test_fraction < 1.0)) {
    throw Error(Errc::ConfigInvalid, "test_fraction must lie in (0,1)");
  }
}

}  // namespace

SplitAssignment stratified_split(const std::vector<TrajSummary>& trajs,
                                 const SplitConfig& cfg) {
  check_split_config(cfg);
  if (trajs.size() < 2) {
    throw Error(Errc::Infeasible, "need at least 2 trajectories to split");
  }
  const std::uint64_t seed = sub_seed(cfg.seed, "split");

  // Group into exact-signature strata. Keys are the signature bit strings,
  // giving a stable stratum iteration order (not that the result depends on
  // it: per-stratum decisions are independent).
  std::map<std::string, std::vector<Draw>> strata;
  for (const TrajSummary& t : trajs) {
    strata[t.signature.to_string()].push_back(
        Draw{hash64(seed, t.trajectory_id), &t});
  }

  SplitAssignment assignment;
  std::vector<const TrajSummary*> test_pool;
  for (auto& [sig, members] : strata) {
    std::sort(members.begin(), members.end(), draw_less);
    // floor with a nudge so exact multiples (0.2 * 35 = 6.999...8 in binary)
    // round the intended way; remainder rounds toward train.
    auto n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(members.size()) * cfg.test_fraction + 1e-9));
    for (std::size_t i = 0; i < members.size(); ++i) {
      const TrajSummary* t = members[i].traj;
      if (i < n_test) {
        assignment.labels[t->trajectory_id] = SplitLabel::test;
        test_pool.push_back(t);
      } else {
        assignment.labels[t->trajectory_id] = SplitLabel::train;
      }
    }
  }

  // Coverage repair: walk test candidates in draw order and move to train any
  // whose signature includes an element absent from the train side; moving a
  // trajectory immediately extends coverage for later candidates.
  ElementBits train_coverage;
  for (const TrajSummary& t : trajs) {
    if (assignment.labels.at(t.trajectory_id) == SplitLabel::train) {
      train_coverage |= t.signature;
    }
  }
  std::vector<Draw> test_draws;
  test_draws.reserve(test_pool.size());
  for (const TrajSummary* t : test_pool) {
    test_draws.push_back(Draw{hash64(seed, t->trajectory_id), t});
  }
  std::sort(test_draws.begin(), test_draws.end(), draw_less);

  bool test_was_nonempty = !test_draws.empty();
  std::size_t remaining_test = test_draws.size();
  for (const Draw& d : test_draws) {
    ElementBits uncovered = d.traj->signature & ~train_coverage;
    if (uncovered.any()) {
      assignment.labels[d.traj->trajectory_id] = SplitLabel::train;
      train_coverage |= d.traj->signature;
      --remaining_test;
    }
  }
  if (test_was_nonempty && remaining_test == 0) {
    throw Error(Errc::Infeasible,
                "element-coverage constraint forces an empty test set");
  }
  return assignment;
}

SplitAssignment stratified_split(const std::vector<Trajectory>& trajs,
                                 const SplitConfig& cfg) {
  std::vector<TrajSummary> summaries;
  summaries.reserve(trajs.size());
  for (const Trajectory& t : trajs) summaries.push_back(summarize(t));
  return stratified_split(summaries, cfg);
}

std::vector<TrajSummary> balance_sources(const std::vector<TrajSummary>& trajs,
                                         const SplitConfig& cfg) {
  if (!cfg.target_size) {
    throw Error(Errc::ConfigInvalid, "balance_sources requires target_size");
  }
  const std::uint64_t target = *cfg.target_size;
  const std::uint64_t seed = sub_seed(cfg.seed, "balance");

  std::map<SourceId, std::vector<Draw>> pools;
  for (const TrajSummary& t : trajs) {
    pools[t.source].push_back(Draw{hash64(seed, t.trajectory_id), &t});
  }

  // Only sources that are configured with a positive share AND actually have
  // data participate; the rest of the shares renormalize over participants.
  struct Quota {
    SourceId source;
    double fraction;
    std::uint64_t count = 0;
    double remainder = 0.0;
  };
  std::vector<Quota> quotas;
  double fraction_sum = 0.0;
  for (SourceId source : kAllSources) {
    auto balance_it = cfg.source_balance.find(source);
    double fraction = balance_it == cfg.source_balance.end() ? 0.0 : balance_it->second;
    if (fraction < 0.0) {
      throw Error(Errc::ConfigInvalid, "source_balance fractions must be >= 0");
    }
    auto pool_it = pools.find(source);
    if (fraction > 0.0 && pool_it != pools.end() && !pool_it->second.empty()) {
      quotas.push_back(Quota{source, fraction});
      fraction_sum += fraction;
    }
  }
  if (quotas.empty() || fraction_sum <= 0.0) {
    throw Error(Errc::InsufficientPool, "no source has both data and a positive share");
  }

  // Largest-remainder rounding: floor everything, then hand out the leftover
  // units to the largest fractional parts (ties: earlier source enum order,
  // since quotas are built in enum order and the sort is stable).
  std::uint64_t assigned = 0;
  for (Quota& q : quotas) {
    double exact = static_cast<double>(target) * (q.fraction / fraction_sum);
    q.count = static_cast<std::uint64_t>(std::floor(exact + 1e-9));
    q.remainder = exact - static_cast<double>(q.count);
    assigned += q.count;
  }
  std::vector<Quota*> by_remainder;
  for (Quota& q : quotas) by_remainder.push_back(&q);
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [](const Quota* a, const Quota* b) { return a->remainder > b->remainder; });
  for (std::size_t i = 0; assigned < target; ++i) {
    by_remainder[i % by_remainder.size()]->count += 1;
    ++assigned;
  }

  std::vector<TrajSummary> selected;
  selected.reserve(target);
  for (Quota& q : quotas) {
    std::vector<Draw>& pool = pools[q.source];
    if (q.count > pool.size()) {
      throw Error(Errc::InsufficientPool,
                  std::string(source_tag(q.source)) + " pool has " +
                      std::to_string(pool.size()) + " trajectories, quota is " +
                      std::to_string(q.count) + " (deficit " +
                      std::to_string(q.count - pool.size()) + ")");
    }
    std::sort(pool.begin(), pool.end(), draw_less);
    for (std::size_t i = 0; i < q.count; ++i) {
      selected.push_back(*pool[i].traj);
    }
  }
  std::sort(selected.begin(), selected.end(),
            [](const TrajSummary& a, const TrajSummary& b) {
              return a.trajectory_id < b.trajectory_id;
            });
  return selected;
}

std::vector<Trajectory> balance_sources(std::vector<Trajectory> trajs,
                                        const SplitConfig& cfg) {
  std::vector<TrajSummary> summaries;
  summaries.reserve(trajs.size());
  for (const Trajectory& t : trajs) summaries.push_back(summarize(t));
  std::vector<TrajSummary> selected = balance_sources(summaries, cfg);

  std::map<std::string, Trajectory> by_id;
  for (Trajectory& t : trajs) by_id.emplace(t.trajectory_id, std::move(t));
  std::vector<Trajectory> out;
  out.reserve(selected.size());
  for (const TrajSummary& s : selected) {
    out.push_back(std::move(by_id.at(s.trajectory_id)));
  }
  return out;
}

std::string split_assignment_to_jsonl(const SplitAssignment& assignment) {
  std::string out;
  for (const auto& [id, label] : assignment.labels) {
    json doc = json::object();
    doc["label"] = label == SplitLabel::test ? "test" : "train";
    doc["trajectory_id"] = id;
    canonical_dump_append(out, doc);
    out.push_back('\n');
  }
  return out;
}

SplitAssignment split_assignment_from_jsonl(const std::string& content) {
  SplitAssignment assignment;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    std::string_view line(content.data() + start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("trajectory_id") ||
        !doc.contains("label")) {
      throw Error(Errc::ParseFailure, "invalid split line");
    }
    std::string label = doc["label"].get<std::string>();
    if (label != "train" && label != "test") {
      throw Error(Errc::ParseFailure, "invalid split label \"" + label + "\"");
    }
    assignment.labels[doc["trajectory_id"].get<std::string>()] =
        label == "test" ? SplitLabel::test : SplitLabel::train;
  }
  return assignment;
}

}  // namespace trajforge

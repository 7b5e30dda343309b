/*
 * Copyright 2026 The recheck Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recheck/datamodel.hpp"
#include "recheck/errors.hpp"
#include "recheck/random.hpp"

namespace recheck {

using FoldId = int;

// Seeded event-to-fold assignment, indexed by canonical event position.
struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<FoldId> assignment;

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (FoldId f : assignment) ++sizes[f];
    return sizes;
  }

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

struct RunSplit {
  int run_id = 0;
  std::vector<FoldId> train_folds;  // ascending
  FoldId val_fold = 0;
  FoldId test_fold = 0;

  friend bool operator==(const RunSplit&, const RunSplit&) = default;
};

using TruthMap = std::map<UserId, std::set<ItemId>>;

struct SplitMaterialization {
  std::vector<InteractionEvent> train_events;  // canonical order
  TruthMap val_truth;
  TruthMap test_truth;
  std::set<UserId> cold_start_users;
};

inline void check_fold_count(int k) {
  if (k < 3) throw InvalidK("fold count must be >= 3, got " + std::to_string(k));
}

// Shuffles event indices with the seed, then deals them round-robin so fold
// sizes differ by at most one.
inline FoldPlan partition(const Dataset& dataset, int k, std::uint64_t seed) {
  check_fold_count(k);
  const std::size_t n = dataset.events().size();
  if (n < static_cast<std::size_t>(k)) {
    throw TooFewEvents("dataset has " + std::to_string(n) +
                       " events, need at least " + std::to_string(k));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  FoldPlan plan{k, seed, std::vector<FoldId>(n)};
  for (std::size_t pos = 0; pos < n; ++pos) {
    plan.assignment[order[pos]] = static_cast<FoldId>(pos % k);
  }
  return plan;
}

// Run r tests fold (k - 1 + r) mod k and validates on the fold before it;
// the remaining k - 2 folds train. Run 0 is train {0..k-3}, val k-2, test k-1.
inline std::vector<RunSplit> rotation_schedule(int k) {
  check_fold_count(k);
  std::vector<RunSplit> runs;
  runs.reserve(k);
  for (int r = 0; r < k; ++r) {
    RunSplit split;
    split.run_id = r;
    split.test_fold = (k - 1 + r) % k;
    split.val_fold = (split.test_fold + k - 1) % k;
    for (int f = 0; f < k; ++f) {
      if (f != split.test_fold && f != split.val_fold) split.train_folds.push_back(f);
    }
    runs.push_back(std::move(split));
  }
  return runs;
}

inline void check_split(const FoldPlan& plan, const RunSplit& split) {
  std::vector<int> seen(plan.k, 0);
  auto mark = [&](FoldId f) {
    if (f < 0 || f >= plan.k) {
      throw InconsistentSplit("fold id " + std::to_string(f) +
                              " out of range for k=" + std::to_string(plan.k));
    }
    ++seen[f];
  };
  for (FoldId f : split.train_folds) mark(f);
  mark(split.val_fold);
  mark(split.test_fold);
  for (int count : seen) {
    if (count != 1) throw InconsistentSplit("split folds must partition 0..k-1");
  }
}

// Builds the training subset and the held-out truth sets for one run.
// When exclude_seen_from_truth is set, items the user already has in the
// training subset are dropped from their truth, and users left with nothing
// are dropped entirely.
inline SplitMaterialization materialize_split(const Dataset& dataset,
                                              const FoldPlan& plan,
                                              const RunSplit& split,
                                              bool exclude_seen_from_truth = false) {
  check_split(plan, split);
  const auto events = dataset.events();
  if (plan.assignment.size() != events.size()) {
    throw InconsistentSplit("fold plan covers " +
                            std::to_string(plan.assignment.size()) +
                            " events, dataset has " + std::to_string(events.size()));
  }
  SplitMaterialization out;
  std::set<UserId> train_users;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const FoldId f = plan.assignment[i];
    if (f == split.test_fold) {
      out.test_truth[e.user_id].insert(e.item_id);
    } else if (f == split.val_fold) {
      out.val_truth[e.user_id].insert(e.item_id);
    } else {
      out.train_events.push_back(e);
      train_users.insert(e.user_id);
    }
  }
  if (exclude_seen_from_truth) {
    std::map<UserId, std::set<ItemId>> seen;
    for (const auto& e : out.train_events) seen[e.user_id].insert(e.item_id);
    for (auto* truth : {&out.val_truth, &out.test_truth}) {
      for (auto it = truth->begin(); it != truth->end();) {
        if (auto s = seen.find(it->first); s != seen.end()) {
          std::erase_if(it->second, [&](const ItemId& item) { return s->second.contains(item); });
        }
        it = it->second.empty() ? truth->erase(it) : std::next(it);
      }
    }
  }
  for (const auto& [user, items] : out.test_truth) {
    if (!train_users.contains(user)) out.cold_start_users.insert(user);
  }
  return out;
}

inline nlohmann::json fold_plan_to_json(const FoldPlan& plan) {
  return {{"k", plan.k}, {"seed", plan.seed}, {"assignment", plan.assignment}};
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  plan.k = j.at("k").get<int>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.assignment = j.at("assignment").get<std::vector<FoldId>>();
  return plan;
}

}  // namespace recheck

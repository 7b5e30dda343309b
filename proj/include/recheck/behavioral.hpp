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

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "recheck/datamodel.hpp"
#include "recheck/errors.hpp"
#include "recheck/metrics.hpp"
#include "recheck/model_protocol.hpp"
#include "recheck/random.hpp"

namespace recheck {

struct PerturbationSpec {
  std::size_t n_sample_users = 1000;
  std::uint64_t seed = 0;
  // Only same-artist swaps are supported.
};

struct SwapRecord {
  ItemId old_item;
  ItemId new_item;
  std::size_t position = 0;
};

struct PerturbedHistory {
  std::vector<InteractionEvent> history;
  SwapRecord swap;
};

struct StabilityReport {
  double mean_jaccard = 0.0;
  std::map<UserId, double> per_user;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
};

struct ErrorDistanceReport {
  double mean_distance = 0.0;
  double quality = 1.0;
  std::map<UserId, double> per_user;
};

// Artist lookups over an item catalog, plus a popularity ranking used when an
// artist has a single track.
class SwapCatalog {
 public:
  SwapCatalog(std::span<const ItemRecord> items, std::vector<ItemId> popularity_ranking)
      : ranking_(std::move(popularity_ranking)) {
    for (const auto& item : items) {
      artist_of_.emplace(item.item_id, item.artist_id);
      by_artist_[item.artist_id].push_back(item.item_id);
    }
    for (auto& [artist, tracks] : by_artist_) std::sort(tracks.begin(), tracks.end());
    for (std::size_t r = 0; r < ranking_.size(); ++r) rank_.emplace(ranking_[r], r);
  }

  const std::string& artist_of(const ItemId& item) const {
    auto it = artist_of_.find(item);
    if (it == artist_of_.end()) throw UnknownItem("item '" + item + "' is not in the catalog");
    return it->second;
  }

  // A different track by the same artist, chosen uniformly; otherwise the
  // item one popularity rank away, preferring the more popular neighbour.
  ItemId replacement(const ItemId& item, Rng& rng) const {
    const auto& tracks = by_artist_.at(artist_of(item));
    if (tracks.size() > 1) {
      const auto self = static_cast<std::size_t>(
          std::lower_bound(tracks.begin(), tracks.end(), item) - tracks.begin());
      std::size_t pick = rng.index(tracks.size() - 1);
      if (pick >= self) ++pick;
      return tracks[pick];
    }
    auto it = rank_.find(item);
    if (it == rank_.end()) {
      for (const auto& candidate : ranking_) {
        if (candidate != item) return candidate;
      }
    } else if (it->second > 0) {
      return ranking_[it->second - 1];
    } else if (ranking_.size() > 1) {
      return ranking_[1];
    }
    throw NoReplacementItem("no replacement available for item '" + item + "'");
  }

 private:
  std::vector<ItemId> ranking_;
  std::unordered_map<ItemId, std::size_t> rank_;
  std::unordered_map<ItemId, std::string> artist_of_;
  std::map<std::string, std::vector<ItemId>> by_artist_;
};

// Swaps the item of one uniformly chosen event; every other field and event
// is kept.
inline PerturbedHistory perturb_history(std::span<const InteractionEvent> history,
                                        const SwapCatalog& catalog, Rng& rng) {
  if (history.empty()) throw EmptyHistory("cannot perturb an empty history");
  PerturbedHistory out{{history.begin(), history.end()}, {}};
  const std::size_t pos = rng.index(history.size());
  auto& event = out.history[pos];
  out.swap = {event.item_id, catalog.replacement(event.item_id, rng), pos};
  event.item_id = out.swap.new_item;
  return out;
}

inline double jaccard(std::span<const ItemId> a, std::span<const ItemId> b) {
  const std::set<ItemId> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& item : sa) common += sb.contains(item) ? 1 : 0;
  return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

// Deterministic subset of at most n users, independent of input order.
inline std::vector<UserId> sample_users(std::vector<UserId> users, std::size_t n,
                                        std::uint64_t seed) {
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  if (users.size() <= n) return users;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(users[i], users[i + rng.index(users.size() - i)]);
  }
  users.resize(n);
  std::sort(users.begin(), users.end());
  return users;
}

inline std::vector<ItemId> item_ids(std::span<const InteractionEvent> events) {
  std::vector<ItemId> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.item_id);
  return out;
}

// Queries top-k for each sampled user on the original and a perturbed
// history and scores the Jaccard overlap. Users with empty history, or whose
// history cannot be perturbed, are skipped.
inline StabilityReport stability_test(const Recommender& model, const std::vector<UserId>& users,
                                      const std::map<UserId, std::vector<InteractionEvent>>& histories,
                                      const PerturbationSpec& spec, int k,
                                      const SwapCatalog& catalog) {
  if (spec.n_sample_users < 1) throw InvalidParameter("n_sample_users must be >= 1");
  const auto sampled = sample_users(users, spec.n_sample_users, spec.seed);
  StabilityReport report;
  std::vector<Query> original, perturbed;
  for (const auto& user : sampled) {
    auto it = histories.find(user);
    if (it == histories.end() || it->second.empty()) {
      ++report.n_skipped;
      continue;
    }
    Rng rng(derive_seed(spec.seed, stable_hash(user)));
    PerturbedHistory p;
    try {
      p = perturb_history(it->second, catalog, rng);
    } catch (const NoReplacementItem&) {
      ++report.n_skipped;
      continue;
    }
    original.push_back({user, item_ids(it->second)});
    perturbed.push_back({user, item_ids(p.history)});
  }
  if (original.empty()) {
    report.mean_jaccard = 1.0;
    return report;
  }
  std::vector<RankedList> before, after;
  try {
    before = recommend_all(model, original, k);
    after = recommend_all(model, perturbed, k);
  } catch (const ModelQueryFailure& e) {
    throw ModelQueryFailure(std::string("stability test: ") + e.what());
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double j = jaccard(before[i].items, after[i].items);
    report.per_user.emplace(original[i].user_id, j);
    sum += j;
  }
  report.n_evaluated = original.size();
  report.mean_jaccard = sum / static_cast<double>(report.n_evaluated);
  return report;
}

// 0 for the same track, 0.5 for another track by the same artist, 1 otherwise.
inline double item_distance(const ItemId& a, const ItemId& b, const Dataset& catalog) {
  const ItemRecord* ra = catalog.find_item(a);
  const ItemRecord* rb = catalog.find_item(b);
  if (ra == nullptr) throw UnknownItem("item '" + a + "' is not in the catalog");
  if (rb == nullptr) throw UnknownItem("item '" + b + "' is not in the catalog");
  if (a == b) return 0.0;
  return ra->artist_id == rb->artist_id ? 0.5 : 1.0;
}

// Per user, the smallest distance between any top-k prediction and any truth
// item; no predictions means distance 1.
inline ErrorDistanceReport error_distance_test(const PredictionMap& all_preds,
                                               const GroundTruthMap& all_truths,
                                               const Dataset& catalog, int k) {
  if (k < 1) throw InvalidParameter("k must be >= 1");
  ErrorDistanceReport report;
  double sum = 0.0;
  for (const auto& [user, truth] : all_truths) {
    double best = 1.0;
    if (auto it = all_preds.find(user); it != all_preds.end()) {
      const auto& items = it->second.items;
      const std::size_t n = std::min(items.size(), static_cast<std::size_t>(k));
      for (std::size_t p = 0; p < n && best > 0.0; ++p) {
        for (const auto& t : truth.relevant) {
          best = std::min(best, item_distance(items[p], t, catalog));
          if (best == 0.0) break;
        }
      }
    }
    report.per_user.emplace(user, best);
    sum += best;
  }
  report.mean_distance = all_truths.empty() ? 1.0 : sum / static_cast<double>(all_truths.size());
  report.quality = 1.0 - report.mean_distance;
  return report;
}

}  // namespace recheck

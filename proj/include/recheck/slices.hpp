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
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "recheck/datamodel.hpp"
#include "recheck/errors.hpp"
#include "recheck/folds.hpp"
#include "recheck/metrics.hpp"

namespace recheck {

enum class SliceKind { kUserCountry, kUserGender, kUserActivity, kItemPopularity, kColdStart };

inline std::string_view slice_kind_name(SliceKind kind) {
  switch (kind) {
    case SliceKind::kUserCountry: return "user_country";
    case SliceKind::kUserGender: return "user_gender";
    case SliceKind::kUserActivity: return "user_activity";
    case SliceKind::kItemPopularity: return "item_popularity";
    case SliceKind::kColdStart: return "cold_start";
  }
  throw UnknownSliceKind("invalid slice kind");
}

inline SliceKind parse_slice_kind(std::string_view name) {
  for (auto kind : {SliceKind::kUserCountry, SliceKind::kUserGender, SliceKind::kUserActivity,
                    SliceKind::kItemPopularity, SliceKind::kColdStart}) {
    if (slice_kind_name(kind) == name) return kind;
  }
  throw UnknownSliceKind("unknown slice kind '" + std::string(name) + "'");
}

struct SliceSpec {
  SliceKind kind = SliceKind::kUserCountry;
  int n_buckets = 4;  // user_activity and item_popularity only
  std::size_t low_support_floor = 5;
};

struct GroupStats {
  double hr = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  double map = 0.0;
  std::size_t count = 0;
  bool low_support = false;
};

struct SliceReport {
  SliceKind kind = SliceKind::kUserCountry;
  std::map<std::string, GroupStats> groups;
  double worst_group_hr = 0.0;
  double hr_std_across_groups = 0.0;
};

inline constexpr std::string_view kUnknownGroup = "unknown";
inline constexpr std::string_view kUnseenBucket = "unseen";

using ItemBuckets = std::map<ItemId, std::string>;

inline std::map<ItemId, std::int64_t> item_playcounts(std::span<const InteractionEvent> events) {
  std::map<ItemId, std::int64_t> counts;
  for (const auto& e : events) counts[e.item_id] += e.playcount;
  return counts;
}

// Quantile buckets over training playcount, "pop_0" being the least popular.
// Ties break on item id. Items absent from training are not in the map; use
// bucket_of() to get "unseen" for them.
inline ItemBuckets popularity_buckets(std::span<const InteractionEvent> train_events,
                                      int n_buckets) {
  if (train_events.empty()) throw EmptyTraining("no training events to rank items by");
  if (n_buckets < 2) throw InvalidParameter("n_buckets must be >= 2");
  const auto counts = item_playcounts(train_events);
  std::vector<std::pair<std::int64_t, ItemId>> order;
  order.reserve(counts.size());
  for (const auto& [item, count] : counts) order.emplace_back(count, item);
  std::sort(order.begin(), order.end());
  ItemBuckets buckets;
  const std::size_t m = order.size();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t b = i * static_cast<std::size_t>(n_buckets) / m;
    buckets.emplace(order[i].second, "pop_" + std::to_string(b));
  }
  return buckets;
}

inline std::string bucket_of(const ItemBuckets& buckets, const ItemId& item) {
  auto it = buckets.find(item);
  return it == buckets.end() ? std::string(kUnseenBucket) : it->second;
}

namespace detail {

// Per-user activity bucket labels; boundaries come from the users present in
// training only.
inline std::map<UserId, std::string> activity_labels(
    std::span<const InteractionEvent> train_events, const GroundTruthMap& truths,
    int n_buckets) {
  if (train_events.empty()) throw EmptyTraining("no training events for activity buckets");
  if (n_buckets < 2) throw InvalidParameter("n_buckets must be >= 2");
  std::map<UserId, std::int64_t> totals;
  for (const auto& e : train_events) totals[e.user_id] += e.playcount;
  std::vector<std::int64_t> sorted;
  sorted.reserve(totals.size());
  for (const auto& [user, total] : totals) sorted.push_back(total);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  std::vector<std::int64_t> upper;  // inclusive upper bound of buckets 0..n-2
  for (int b = 0; b + 1 < n_buckets; ++b) {
    const std::size_t pos = (static_cast<std::size_t>(b + 1) * m + n_buckets - 1) / n_buckets;
    upper.push_back(sorted[std::max<std::size_t>(pos, 1) - 1]);
  }
  std::map<UserId, std::string> labels;
  for (const auto& [user, truth] : truths) {
    auto it = totals.find(user);
    const std::int64_t total = it == totals.end() ? 0 : it->second;
    int b = 0;
    while (b + 1 < n_buckets && total > upper[b]) ++b;
    labels.emplace(user, "act_" + std::to_string(b));
  }
  return labels;
}

inline std::string or_unknown(const std::string& value) {
  return value.empty() ? std::string(kUnknownGroup) : value;
}

struct Accumulator {
  double hr = 0, mrr = 0, ndcg = 0, map = 0;
  std::size_t count = 0;
};

inline SliceReport finish(SliceKind kind, const std::map<std::string, Accumulator>& acc,
                          std::size_t floor) {
  SliceReport report;
  report.kind = kind;
  for (const auto& [label, a] : acc) {
    const double n = static_cast<double>(a.count);
    report.groups.emplace(label, GroupStats{a.hr / n, a.mrr / n, a.ndcg / n, a.map / n,
                                            a.count, a.count < floor});
  }
  if (report.groups.empty()) return report;
  double worst = 1.0, sum = 0.0;
  for (const auto& [label, g] : report.groups) {
    worst = std::min(worst, g.hr);
    sum += g.hr;
  }
  const double mean = sum / static_cast<double>(report.groups.size());
  double var = 0.0;
  for (const auto& [label, g] : report.groups) var += (g.hr - mean) * (g.hr - mean);
  report.worst_group_hr = worst;
  report.hr_std_across_groups = std::sqrt(var / static_cast<double>(report.groups.size()));
  return report;
}

}  // namespace detail

// Metric tiers restricted to user groups, or, for item_popularity, to
// (user, truth item) pairs grouped by the item's popularity bucket. A pair
// counts as a single-relevant-item query: hit when the item is in the user's
// top-k, with reciprocal rank, NDCG and AP of that one item.
inline SliceReport slice_evaluate(const PredictionMap& all_preds, const GroundTruthMap& all_truths,
                                  const Dataset& dataset, const SplitMaterialization& split,
                                  const SliceSpec& spec, int k) {
  if (k < 1) throw InvalidParameter("k must be >= 1");
  std::map<std::string, detail::Accumulator> acc;

  if (spec.kind == SliceKind::kItemPopularity) {
    const auto buckets = popularity_buckets(split.train_events, spec.n_buckets);
    for (const auto& [user, truth] : all_truths) {
      auto pit = all_preds.find(user);
      for (const auto& item : truth.relevant) {
        auto& a = acc[bucket_of(buckets, item)];
        ++a.count;
        if (pit == all_preds.end()) continue;
        const auto& items = pit->second.items;
        const std::size_t n = std::min(items.size(), static_cast<std::size_t>(k));
        for (std::size_t p = 0; p < n; ++p) {
          if (items[p] == item) {
            a.hr += 1.0;
            a.mrr += 1.0 / static_cast<double>(p + 1);
            a.ndcg += 1.0 / std::log2(p + 2.0);
            a.map += 1.0 / static_cast<double>(p + 1);
            break;
          }
        }
      }
    }
    return detail::finish(spec.kind, acc, spec.low_support_floor);
  }

  std::map<UserId, std::string> activity;
  if (spec.kind == SliceKind::kUserActivity) {
    activity = detail::activity_labels(split.train_events, all_truths, spec.n_buckets);
  }
  for (const auto& [user, truth] : all_truths) {
    std::string label;
    switch (spec.kind) {
      case SliceKind::kUserCountry:
      case SliceKind::kUserGender: {
        const UserRecord* rec = dataset.find_user(user);
        if (rec == nullptr) {
          label = std::string(kUnknownGroup);
        } else {
          label = detail::or_unknown(spec.kind == SliceKind::kUserCountry ? rec->country
                                                                          : rec->gender);
        }
        break;
      }
      case SliceKind::kUserActivity:
        label = activity.at(user);
        break;
      case SliceKind::kColdStart:
        label = split.cold_start_users.contains(user) ? "cold" : "warm";
        break;
      default:
        throw UnknownSliceKind("unsupported slice kind");
    }
    const UserMetrics m = score_user(all_preds, truth, k);
    auto& a = acc[label];
    a.hr += m.hr;
    a.mrr += m.mrr;
    a.ndcg += m.ndcg;
    a.map += m.map;
    ++a.count;
  }
  return detail::finish(spec.kind, acc, spec.low_support_floor);
}

}  // namespace recheck

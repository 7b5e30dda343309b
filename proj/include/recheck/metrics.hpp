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
#include <ranges>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "recheck/datamodel.hpp"
#include "recheck/errors.hpp"

namespace recheck {

// Top-K recommendations for one user; position 0 is the top item.
struct RankedList {
  UserId user_id;
  std::vector<ItemId> items;

  friend bool operator==(const RankedList&, const RankedList&) = default;
};

struct GroundTruth {
  UserId user_id;
  std::set<ItemId> relevant;
};

using PredictionMap = std::map<UserId, RankedList>;
using GroundTruthMap = std::map<UserId, GroundTruth>;

struct MetricReport {
  double hr_at_k = 0.0;
  double mrr_at_k = 0.0;
  double ndcg_at_k = 0.0;
  double map_at_k = 0.0;
  double coverage = 0.0;
  int k = 0;
  std::size_t n_users = 0;
};

namespace detail {

inline void check_pair(const RankedList& preds, const GroundTruth& truth, int k) {
  if (preds.user_id != truth.user_id) {
    throw UserMismatch("prediction for '" + preds.user_id +
                       "' scored against truth for '" + truth.user_id + "'");
  }
  if (k < 1) throw InvalidParameter("k must be >= 1");
}

inline std::size_t cutoff(const RankedList& preds, int k) {
  return std::min(preds.items.size(), static_cast<std::size_t>(k));
}

}  // namespace detail

inline double hit_rate_at_k(const RankedList& preds, const GroundTruth& truth, int k) {
  detail::check_pair(preds, truth, k);
  const std::size_t n = detail::cutoff(preds, k);
  for (std::size_t p = 0; p < n; ++p) {
    if (truth.relevant.contains(preds.items[p])) return 1.0;
  }
  return 0.0;
}

inline double mrr_at_k(const RankedList& preds, const GroundTruth& truth, int k) {
  detail::check_pair(preds, truth, k);
  const std::size_t n = detail::cutoff(preds, k);
  for (std::size_t p = 0; p < n; ++p) {
    if (truth.relevant.contains(preds.items[p])) return 1.0 / static_cast<double>(p + 1);
  }
  return 0.0;
}

// Binary-relevance NDCG with the ideal ranking holding min(|truth|, k) hits.
inline double ndcg_at_k(const RankedList& preds, const GroundTruth& truth, int k) {
  detail::check_pair(preds, truth, k);
  const std::size_t n = detail::cutoff(preds, k);
  double dcg = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (truth.relevant.contains(preds.items[p])) dcg += 1.0 / std::log2(p + 2.0);
  }
  const std::size_t ideal_hits =
      std::min(truth.relevant.size(), static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t p = 0; p < ideal_hits; ++p) idcg += 1.0 / std::log2(p + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

// Average precision normalised by min(|truth|, k).
inline double map_at_k(const RankedList& preds, const GroundTruth& truth, int k) {
  detail::check_pair(preds, truth, k);
  const std::size_t n = detail::cutoff(preds, k);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (truth.relevant.contains(preds.items[p])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(p + 1);
    }
  }
  const std::size_t denom = std::min(truth.relevant.size(), static_cast<std::size_t>(k));
  return denom > 0 ? sum / static_cast<double>(denom) : 0.0;
}

// Distinct items across all lists (each truncated to k when k > 0) over the
// catalog size.
template <std::ranges::input_range Lists>
  requires std::same_as<std::ranges::range_value_t<Lists>, RankedList>
double coverage(Lists&& all_preds, std::size_t catalog_size, int k = 0) {
  if (catalog_size < 1) throw InvalidCatalogSize("catalog_size must be >= 1");
  std::unordered_set<ItemId> distinct;
  for (const RankedList& list : all_preds) {
    const std::size_t n = k > 0 ? detail::cutoff(list, k) : list.items.size();
    distinct.insert(list.items.begin(), list.items.begin() + n);
  }
  return std::min(1.0, static_cast<double>(distinct.size()) /
                           static_cast<double>(catalog_size));
}

inline double coverage(const PredictionMap& all_preds, std::size_t catalog_size,
                       int k = 0) {
  return coverage(all_preds | std::views::values, catalog_size, k);
}

// Per-user metrics for one ground-truth user; a missing list scores zero.
struct UserMetrics {
  double hr = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  double map = 0.0;
};

inline UserMetrics score_user(const PredictionMap& all_preds, const GroundTruth& truth, int k) {
  auto it = all_preds.find(truth.user_id);
  if (it == all_preds.end()) return {};
  return {hit_rate_at_k(it->second, truth, k), mrr_at_k(it->second, truth, k),
          ndcg_at_k(it->second, truth, k), map_at_k(it->second, truth, k)};
}

// Averages per-user metrics over every ground-truth user. Sums are reduced in
// map (user id) order and divided once.
inline MetricReport evaluate_standard(const PredictionMap& all_preds,
                                      const GroundTruthMap& all_truths, int k,
                                      std::size_t catalog_size) {
  MetricReport report;
  report.k = k;
  report.n_users = all_truths.size();
  report.coverage = coverage(all_preds, catalog_size, k);
  if (all_truths.empty()) return report;
  for (const auto& [user, truth] : all_truths) {
    const UserMetrics m = score_user(all_preds, truth, k);
    report.hr_at_k += m.hr;
    report.mrr_at_k += m.mrr;
    report.ndcg_at_k += m.ndcg;
    report.map_at_k += m.map;
  }
  const double n = static_cast<double>(all_truths.size());
  report.hr_at_k /= n;
  report.mrr_at_k /= n;
  report.ndcg_at_k /= n;
  report.map_at_k /= n;
  return report;
}

inline GroundTruthMap to_ground_truth(const std::map<UserId, std::set<ItemId>>& truth) {
  GroundTruthMap out;
  for (const auto& [user, items] : truth) out.emplace(user, GroundTruth{user, items});
  return out;
}

}  // namespace recheck

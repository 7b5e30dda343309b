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

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace recheck {
namespace {

std::vector<InteractionEvent> counts_to_events(const std::map<ItemId, int>& counts) {
  std::vector<InteractionEvent> out;
  for (const auto& [item, c] : counts) out.push_back({"u", item, 0, c});
  return out;
}

TEST(PopularityBuckets, MedianSplit) {
  const auto b = popularity_buckets(counts_to_events({{"w", 1}, {"x", 2}, {"y", 3}, {"z", 4}}), 2);
  EXPECT_EQ(b.at("w"), "pop_0");
  EXPECT_EQ(b.at("x"), "pop_0");
  EXPECT_EQ(b.at("y"), "pop_1");
  EXPECT_EQ(b.at("z"), "pop_1");
  EXPECT_EQ(bucket_of(b, "never"), "unseen");
}

TEST(PopularityBuckets, TiesBreakOnItemId) {
  // Order under (count, id): a, b, c, d.
  const auto b = popularity_buckets(counts_to_events({{"d", 5}, {"c", 5}, {"b", 5}, {"a", 5}}), 2);
  EXPECT_EQ(b.at("a"), "pop_0");
  EXPECT_EQ(b.at("b"), "pop_0");
  EXPECT_EQ(b.at("c"), "pop_1");
  EXPECT_EQ(b.at("d"), "pop_1");
}

TEST(PopularityBuckets, Errors) {
  EXPECT_THROW(popularity_buckets({}, 2), EmptyTraining);
  EXPECT_THROW(popularity_buckets(counts_to_events({{"a", 1}}), 1), InvalidParameter);
}

TEST(SliceKindNames, RoundTripAndUnknown) {
  for (auto kind : {SliceKind::kUserCountry, SliceKind::kUserGender, SliceKind::kUserActivity,
                    SliceKind::kItemPopularity, SliceKind::kColdStart}) {
    EXPECT_EQ(parse_slice_kind(slice_kind_name(kind)), kind);
  }
  EXPECT_THROW(parse_slice_kind("user_hour"), UnknownSliceKind);
}

struct World {
  Dataset dataset;
  SplitMaterialization split;
};

// Users with metadata, a training fold and a test truth, for slice checks.
World five_user_world() {
  std::vector<ItemRecord> items;
  for (const char* id : {"a", "b", "c", "d", "e", "f"}) items.push_back({id, std::string("art_") + id, "", ""});
  std::vector<UserRecord> users = {{"u1", "UK", 20, "f", 0}, {"u2", "JP", 30, "m", 0},
                                   {"u3", "UK", 40, "", 0},  {"u4", "", 50, "f", 0},
                                   {"u5", "JP", 60, "m", 0}};
  std::vector<InteractionEvent> events = {
      {"u1", "a", 1, 3}, {"u1", "b", 2, 1}, {"u2", "a", 1, 1}, {"u3", "a", 1, 2},
      {"u3", "c", 2, 1}, {"u4", "d", 1, 1}, {"u1", "c", 9, 1}, {"u2", "b", 9, 1},
      {"u3", "e", 9, 1}, {"u4", "a", 9, 1}, {"u5", "f", 9, 1}, {"u5", "a", 10, 1}};
  World w{Dataset(events, items, users), {}};
  for (const auto& e : w.dataset.events()) {
    if (e.timestamp < 5) w.split.train_events.push_back(e);
    else w.split.test_truth[e.user_id].insert(e.item_id);
  }
  w.split.cold_start_users = {"u5"};
  return w;
}

PredictionMap five_user_preds() {
  return {{"u1", {"u1", {"c", "a"}}},
          {"u2", {"u2", {"a", "c"}}},
          {"u3", {"u3", {"a", "e"}}},
          {"u4", {"u4", {"b"}}},
          {"u5", {"u5", {"a", "b"}}}};
}

TEST(SliceEvaluate, CountryExample) {
  World w = five_user_world();
  GroundTruthMap truths = {{"u1", {"u1", {"c"}}}, {"u2", {"u2", {"b"}}}};
  PredictionMap preds = {{"u1", {"u1", {"c"}}}, {"u2", {"u2", {"a"}}}};
  const auto r = slice_evaluate(preds, truths, w.dataset, w.split, {SliceKind::kUserCountry}, 5);
  ASSERT_EQ(r.groups.size(), 2u);
  EXPECT_EQ(r.groups.at("UK").hr, 1.0);
  EXPECT_EQ(r.groups.at("JP").hr, 0.0);
  EXPECT_EQ(r.worst_group_hr, 0.0);
  EXPECT_EQ(r.hr_std_across_groups, 0.5);
  EXPECT_TRUE(r.groups.at("UK").low_support);
}

TEST(SliceEvaluate, ColdStartGroup) {
  World w = five_user_world();
  const auto truths = to_ground_truth(w.split.test_truth);
  PredictionMap preds = five_user_preds();
  preds["u5"] = {"u5", {"b"}};  // misses both f and a
  const auto r = slice_evaluate(preds, truths, w.dataset, w.split, {SliceKind::kColdStart}, 5);
  EXPECT_EQ(r.groups.at("cold").count, 1u);
  EXPECT_EQ(r.groups.at("cold").hr, 0.0);
  EXPECT_EQ(r.groups.at("warm").count, 4u);
}

// Oracle: filter the population by label, then run evaluate_standard.
TEST(SliceEvaluate, UserKindsMatchFilterThenEvaluate) {
  World w = five_user_world();
  const auto truths = to_ground_truth(w.split.test_truth);
  const auto preds = five_user_preds();
  const std::map<UserId, std::string> gender = {
      {"u1", "f"}, {"u2", "m"}, {"u3", "unknown"}, {"u4", "f"}, {"u5", "m"}};
  const std::map<UserId, std::string> country = {
      {"u1", "UK"}, {"u2", "JP"}, {"u3", "UK"}, {"u4", "unknown"}, {"u5", "JP"}};
  for (auto [kind, labels] : {std::pair{SliceKind::kUserGender, gender},
                              std::pair{SliceKind::kUserCountry, country}}) {
    const auto r = slice_evaluate(preds, truths, w.dataset, w.split, {kind}, 1);
    std::set<std::string> distinct;
    for (const auto& [u, l] : labels) distinct.insert(l);
    ASSERT_EQ(r.groups.size(), distinct.size());
    for (const auto& label : distinct) {
      GroundTruthMap sub;
      for (const auto& [u, l] : labels) {
        if (l == label) sub.emplace(u, truths.at(u));
      }
      const auto ref = evaluate_standard(preds, sub, 1, 6);
      const auto& g = r.groups.at(label);
      EXPECT_EQ(g.count, sub.size());
      EXPECT_NEAR(g.hr, ref.hr_at_k, 1e-12);
      EXPECT_NEAR(g.mrr, ref.mrr_at_k, 1e-12);
      EXPECT_NEAR(g.ndcg, ref.ndcg_at_k, 1e-12);
      EXPECT_NEAR(g.map, ref.map_at_k, 1e-12);
    }
  }
}

TEST(SliceEvaluate, ActivityBucketsUseTrainingPlaycount) {
  World w = five_user_world();
  // Training playcount: u1 4, u2 1, u3 3, u4 1, u5 0 (cold).
  const auto truths = to_ground_truth(w.split.test_truth);
  const auto r = slice_evaluate(five_user_preds(), truths, w.dataset, w.split,
                                {SliceKind::kUserActivity, 2}, 5);
  // Training users sorted: 1, 1, 3, 4 -> first bucket holds totals <= 1.
  EXPECT_EQ(r.groups.at("act_0").count, 3u);  // u2, u4, u5
  EXPECT_EQ(r.groups.at("act_1").count, 2u);  // u1, u3
}

TEST(SliceEvaluate, ItemPopularityPerPair) {
  World w = five_user_world();
  const auto truths = to_ground_truth(w.split.test_truth);
  const auto preds = five_user_preds();
  // Train playcount: a 6, b 1, c 1, d 1. Sorted (count, id): b c d a.
  const auto r = slice_evaluate(preds, truths, w.dataset, w.split, {SliceKind::kItemPopularity, 2}, 5);
  // pairs: u1 c (pop_0, hit r1), u2 b (pop_0, miss), u3 e (unseen, hit r2),
  //        u4 a (pop_1, miss), u5 a (pop_1, hit r1), u5 f (unseen, miss)
  EXPECT_EQ(r.groups.at("pop_0").count, 2u);
  EXPECT_EQ(r.groups.at("pop_0").hr, 0.5);
  EXPECT_EQ(r.groups.at("pop_1").hr, 0.5);
  EXPECT_EQ(r.groups.at("unseen").count, 2u);
  EXPECT_EQ(r.groups.at("unseen").mrr, 0.25);
  std::size_t total = 0;
  for (const auto& [label, g] : r.groups) total += g.count;
  EXPECT_EQ(total, 6u);
}

TEST(SliceEvaluate, WeightedGroupMeanEqualsGlobal) {
  SyntheticParams p;
  p.n_users = 300;
  p.n_items = 80;
  p.n_events = 6000;
  p.seed = 21;
  const Dataset d = generate_synthetic(p);
  const auto plan = partition(d, 5, 3);
  const auto mat = materialize_split(d, plan, rotation_schedule(5)[0]);
  const auto model = baseline_popularity(mat.train_events, false);
  PredictionMap preds;
  for (const auto& [u, items] : mat.test_truth) preds.emplace(u, recommend(*model, u, {}, 10));
  const auto truths = to_ground_truth(mat.test_truth);
  const double global = evaluate_standard(preds, truths, 10, d.items().size()).hr_at_k;
  for (auto kind : {SliceKind::kUserCountry, SliceKind::kUserGender, SliceKind::kUserActivity,
                    SliceKind::kColdStart}) {
    const auto r = slice_evaluate(preds, truths, d, mat, {kind}, 10);
    double weighted = 0.0, max_hr = 0.0;
    std::size_t n = 0;
    for (const auto& [label, g] : r.groups) {
      weighted += g.hr * static_cast<double>(g.count);
      n += g.count;
      max_hr = std::max(max_hr, g.hr);
    }
    EXPECT_EQ(n, truths.size());
    EXPECT_NEAR(weighted / n, global, 1e-12);
    EXPECT_LE(r.worst_group_hr, global + 1e-12);
    EXPECT_GE(max_hr, global - 1e-12);
  }
}

}  // namespace
}  // namespace recheck

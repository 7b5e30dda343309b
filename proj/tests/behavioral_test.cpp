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

TEST(PerturbHistory, SingleAlternativeTrack) {
  const std::vector<ItemRecord> items = {{"t1", "metallica", "", ""}, {"t2", "metallica", "", ""},
                                         {"x", "pantera", "", ""}};
  const SwapCatalog catalog(items, {"x", "t1", "t2"});
  Rng rng(1);
  const std::vector<InteractionEvent> history = {{"u", "t1", 5, 2}};
  const auto p = perturb_history(history, catalog, rng);
  ASSERT_EQ(p.history.size(), 1u);
  EXPECT_EQ(p.history[0], (InteractionEvent{"u", "t2", 5, 2}));
  EXPECT_EQ(p.swap.old_item, "t1");
  EXPECT_EQ(p.swap.new_item, "t2");
  EXPECT_EQ(p.swap.position, 0u);
}

// Every artist has one track: the replacement is the neighbour one rank up,
// or one rank down for the most popular item.
TEST(PerturbHistory, NearestPopularityRankForLoneTracks) {
  std::vector<ItemRecord> items;
  const std::vector<ItemId> ranking = {"p0", "p1", "p2", "p3"};
  for (const auto& id : ranking) items.push_back({id, "artist_" + id, "", ""});
  items.push_back({"cold", "artist_cold", "", ""});
  const SwapCatalog catalog(items, ranking);
  const std::map<ItemId, ItemId> expected = {
      {"p0", "p1"}, {"p1", "p0"}, {"p2", "p1"}, {"p3", "p2"}, {"cold", "p0"}};
  for (const auto& [from, to] : expected) {
    Rng rng(3);
    const std::vector<InteractionEvent> h = {{"u", from, 1, 1}};
    EXPECT_EQ(perturb_history(h, catalog, rng).swap.new_item, to) << from;
  }
  const std::vector<ItemRecord> lonely_items = {{"only", "a", "", ""}};
  const SwapCatalog lonely(lonely_items, {"only"});
  Rng rng(0);
  const std::vector<InteractionEvent> h = {{"u", "only", 1, 1}};
  EXPECT_THROW(perturb_history(h, lonely, rng), NoReplacementItem);
}

TEST(PerturbHistory, ChangesExactlyOneEvent) {
  std::vector<ItemRecord> items;
  for (int i = 0; i < 12; ++i) items.push_back({"t" + std::to_string(i), "a" + std::to_string(i % 3), "", ""});
  const SwapCatalog catalog(items, {});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<InteractionEvent> h;
    for (int i = 0; i < 5; ++i) h.push_back({"u", "t" + std::to_string((i * 5 + seed) % 12), i, 1});
    Rng rng(seed);
    const auto p = perturb_history(h, catalog, rng);
    ASSERT_EQ(p.history.size(), h.size());
    int diffs = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (!(p.history[i] == h[i])) {
        ++diffs;
        EXPECT_EQ(i, p.swap.position);
        EXPECT_EQ(catalog.artist_of(p.history[i].item_id), catalog.artist_of(h[i].item_id));
        EXPECT_EQ(p.history[i].timestamp, h[i].timestamp);
      }
    }
    EXPECT_EQ(diffs, 1);
  }
  Rng rng(0);
  EXPECT_THROW(perturb_history({}, catalog, rng), EmptyHistory);
}

TEST(Jaccard, Examples) {
  const std::vector<ItemId> abc = {"a", "b", "c"}, abd = {"a", "b", "d"};
  EXPECT_EQ(jaccard(abc, abc), 1.0);
  EXPECT_EQ(jaccard(abc, abd), 0.5);
  EXPECT_EQ(jaccard({}, {}), 1.0);
}

struct Fixture {
  Dataset dataset;
  SplitMaterialization split;
  std::map<UserId, std::vector<InteractionEvent>> histories;
  std::vector<UserId> test_users;
};

Fixture synthetic_fixture() {
  SyntheticParams p;
  p.n_users = 150;
  p.n_items = 60;
  p.n_events = 4000;
  p.seed = 12;
  Fixture f{generate_synthetic(p), {}, {}, {}};
  const auto plan = partition(f.dataset, 5, 2);
  f.split = materialize_split(f.dataset, plan, rotation_schedule(5)[0]);
  for (const auto& e : f.split.train_events) f.histories[e.user_id].push_back(e);
  for (const auto& [u, items] : f.split.test_truth) f.test_users.push_back(u);
  return f;
}

TEST(StabilityTest, HistoryIndependentModelIsPerfectlyStable) {
  const auto f = synthetic_fixture();
  const auto model = baseline_popularity(f.split.train_events, false);
  const SwapCatalog catalog(f.dataset.items(), popularity_order(f.split.train_events));
  const auto r = stability_test(*model, f.test_users, f.histories, {1000, 4}, 10, catalog);
  EXPECT_EQ(r.mean_jaccard, 1.0);
  EXPECT_EQ(r.n_evaluated + r.n_skipped, f.test_users.size());
  EXPECT_EQ(r.per_user.size(), r.n_evaluated);
}

TEST(StabilityTest, SkipsEmptyHistoriesAndIsDeterministic) {
  auto f = synthetic_fixture();
  f.histories.erase(f.test_users.front());
  const auto model = baseline_cooccurrence(f.split.train_events, 0);
  const SwapCatalog catalog(f.dataset.items(), popularity_order(f.split.train_events));
  const PerturbationSpec spec{40, 9};
  const auto a = stability_test(*model, f.test_users, f.histories, spec, 10, catalog);
  const auto b = stability_test(*model, f.test_users, f.histories, spec, 10, catalog);
  EXPECT_EQ(a.n_evaluated + a.n_skipped, 40u);
  EXPECT_EQ(a.per_user, b.per_user);
  double sum = 0.0;
  for (const auto& [u, j] : a.per_user) {
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, 1.0);
    sum += j;
  }
  EXPECT_NEAR(a.mean_jaccard, sum / a.n_evaluated, 1e-15);
  EXPECT_LT(a.mean_jaccard, 1.0);  // co-occurrence reacts to history

  const auto all = stability_test(*model, f.test_users, f.histories, {100000, 9}, 10, catalog);
  EXPECT_EQ(all.n_skipped, 1u);
  EXPECT_THROW(stability_test(*model, f.test_users, f.histories, {0, 9}, 10, catalog), InvalidParameter);
}

const std::vector<ItemRecord> kRock = {{"shine", "floyd", "", "Shine On You Crazy Diamond"},
                                       {"money", "floyd", "", "Money"},
                                       {"smoke", "purple", "", "Smoke on the Water"},
                                       {"highway", "purple", "", "Highway Star"}};

Dataset rock_catalog() {
  return testing::small_catalog_dataset({}, kRock);
}

TEST(ErrorDistance, Hierarchy) {
  const Dataset d = rock_catalog();
  const GroundTruthMap truth = {{"u", {"u", {"shine"}}}};
  auto run = [&](std::vector<ItemId> items) {
    PredictionMap preds = {{"u", {"u", std::move(items)}}};
    return error_distance_test(preds, truth, d, 3);
  };
  const auto unrelated = run({"smoke", "highway"});
  EXPECT_EQ(unrelated.mean_distance, 1.0);
  EXPECT_EQ(unrelated.quality, 0.0);
  EXPECT_EQ(run({"smoke", "shine"}).mean_distance, 0.0);
  EXPECT_EQ(run({"smoke", "money"}).mean_distance, 0.5);
  // the exact hit sits beyond k=3
  EXPECT_EQ(run({"smoke", "highway", "money", "shine"}).mean_distance, 0.5);
}

TEST(ErrorDistance, MissingListAndUnknownItems) {
  const Dataset d = rock_catalog();
  const GroundTruthMap truth = {{"u", {"u", {"shine"}}}, {"v", {"v", {"smoke"}}}};
  PredictionMap preds = {{"u", {"u", {"money"}}}};
  const auto r = error_distance_test(preds, truth, d, 5);
  EXPECT_EQ(r.per_user.at("u"), 0.5);
  EXPECT_EQ(r.per_user.at("v"), 1.0);
  EXPECT_EQ(r.mean_distance, 0.75);
  EXPECT_EQ(r.quality + r.mean_distance, 1.0);
  preds["u"] = {"u", {"nope"}};
  EXPECT_THROW(error_distance_test(preds, truth, d, 5), UnknownItem);
}

TEST(ErrorDistance, ZeroWheneverHit) {
  const auto f = synthetic_fixture();
  const auto model = baseline_cooccurrence(f.split.train_events, 0);
  PredictionMap preds;
  for (const auto& u : f.test_users) {
    std::vector<ItemId> hist;
    for (const auto& e : f.histories.at(u)) hist.push_back(e.item_id);
    preds.emplace(u, recommend(*model, u, hist, 10));
  }
  const auto truths = to_ground_truth(f.split.test_truth);
  const auto r = error_distance_test(preds, truths, f.dataset, 10);
  for (const auto& [u, t] : truths) {
    const double dist = r.per_user.at(u);
    EXPECT_TRUE(dist == 0.0 || dist == 0.5 || dist == 1.0);
    if (hit_rate_at_k(preds.at(u), t, 10) == 1.0) {
      EXPECT_EQ(dist, 0.0);
    }
  }
}

}  // namespace
}  // namespace recheck

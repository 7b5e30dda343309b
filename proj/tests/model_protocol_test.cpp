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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace recheck {
namespace {

using testing::TempDir;

std::vector<InteractionEvent> playcounts(const std::map<ItemId, int>& counts, const UserId& user = "z") {
  std::vector<InteractionEvent> out;
  for (const auto& [item, c] : counts) out.push_back({user, item, 0, c});
  return out;
}

TEST(HyperparameterSetting, HashIgnoresInsertionOrder) {
  HyperparameterSetting a, b;
  a.set("lr", "0.1");
  a.set("dim", "64");
  b.set("dim", "64");
  b.set("lr", "0.1");
  EXPECT_EQ(a.canonical_hash(), b.canonical_hash());
  EXPECT_EQ(a.canonical_rendering(), "dim=64\nlr=0.1\n");
  b.set("lr", "0.2");
  EXPECT_NE(a.canonical_hash(), b.canonical_hash());
}

HyperparameterSetting nth_setting(int i) { return {{"i", std::to_string(i)}}; }

TEST(TrainBudget, FiftyDistinctThenRepeatThenFailure) {
  TrainBudget budget;
  for (int i = 1; i <= 50; ++i) budget.charge(nth_setting(i));
  EXPECT_EQ(budget.remaining(), 0u);
  EXPECT_NO_THROW(budget.charge(nth_setting(3)));
  EXPECT_THROW(budget.charge(nth_setting(51)), BudgetExceeded);
  EXPECT_EQ(budget.used(), 50u);
  budget.reset();
  EXPECT_NO_THROW(budget.charge(nth_setting(51)));
  EXPECT_THROW(TrainBudget(0), InvalidParameter);
}

TEST(Train, ChargesBudgetBeforeFitting) {
  const auto events = playcounts({{"a", 1}});
  TrainBudget budget(2);
  PopularityRecommender model;
  train(model, {events, nth_setting(1)}, budget);
  train(model, {events, nth_setting(2)}, budget);
  EXPECT_THROW(train(model, {events, nth_setting(3)}, budget), BudgetExceeded);
}

TEST(Popularity, RanksByPlaycount) {
  const auto events = playcounts({{"a", 3}, {"b", 2}, {"c", 1}});
  const auto model = baseline_popularity(events, false);
  EXPECT_EQ(recommend(*model, "u", {}, 2).items, (std::vector<ItemId>{"a", "b"}));
  const std::vector<ItemId> hist = {"x", "y"};
  EXPECT_EQ(recommend(*model, "v", hist, 2).items, (std::vector<ItemId>{"a", "b"}));

  const auto excluding = baseline_popularity(events, true);
  const std::vector<ItemId> seen = {"a"};
  EXPECT_EQ(recommend(*excluding, "u", seen, 2).items, (std::vector<ItemId>{"b", "c"}));

  const auto ties = baseline_popularity(playcounts({{"b", 2}, {"a", 2}}), false);
  EXPECT_EQ(recommend(*ties, "u", {}, 1).items, (std::vector<ItemId>{"a"}));
  EXPECT_THROW(baseline_popularity({}, false), EmptyTraining);
}

TEST(Random, DeterministicAndWellFormed) {
  SyntheticParams p;
  p.seed = 2;
  const Dataset d = generate_synthetic(p);
  RandomRecommender model(77);
  model.fit({d.events(), {}});
  const auto a = recommend(model, "u01", {}, 10);
  EXPECT_EQ(a, recommend(model, "u01", {}, 10));
  EXPECT_EQ(a.items.size(), 10u);
  EXPECT_NE(a.items, recommend(model, "u02", {}, 10).items);
  RandomRecommender other(78);
  other.fit({d.events(), {}});
  EXPECT_NE(a.items, recommend(other, "u01", {}, 10).items);
  // k larger than the catalog
  EXPECT_EQ(recommend(model, "u01", {}, 500).items.size(), 50u);
}

TEST(Cooccurrence, ToyCorpus) {
  const std::vector<InteractionEvent> events = {{"u1", "a", 1, 1}, {"u1", "b", 2, 1},
                                                {"u2", "a", 1, 1}, {"u2", "b", 2, 1},
                                                {"u3", "c", 1, 5}};
  const auto model = baseline_cooccurrence(events, 0);
  EXPECT_EQ(model->cooccurrence("a", "b"), 2u);
  EXPECT_EQ(model->cooccurrence("a", "c"), 0u);
  const std::vector<ItemId> hist = {"a"};
  const auto list = recommend(*model, "u9", hist, 2);
  EXPECT_EQ(list.items, (std::vector<ItemId>{"b", "c"}));
  // empty history: popularity order (c has playcount 5)
  EXPECT_EQ(recommend(*model, "u9", {}, 3).items, (std::vector<ItemId>{"c", "a", "b"}));
}

TEST(Cooccurrence, SingleUserCorpus) {
  const auto model = baseline_cooccurrence(std::vector<InteractionEvent>{{"u", "a", 1, 1}}, 0);
  const std::vector<ItemId> hist = {"a"};
  EXPECT_TRUE(recommend(*model, "u", hist, 5).items.empty());
  EXPECT_EQ(recommend(*model, "v", {}, 5).items, (std::vector<ItemId>{"a"}));
}

TEST(Cooccurrence, NeighborhoodSettingTruncates) {
  // a co-occurs with b twice and with c once.
  const std::vector<InteractionEvent> events = {{"u1", "a", 1, 1}, {"u1", "b", 2, 1},
                                                {"u2", "a", 1, 1}, {"u2", "b", 2, 1},
                                                {"u3", "a", 1, 1}, {"u3", "c", 2, 1},
                                                {"u4", "d", 1, 9}};
  CooccurrenceRecommender model;
  model.fit({events, {{"neighborhood", "1"}}});
  EXPECT_EQ(model.cooccurrence("a", "b"), 2u);
  EXPECT_EQ(model.cooccurrence("a", "c"), 0u);
  const std::vector<ItemId> hist = {"a"};
  EXPECT_EQ(recommend(model, "x", hist, 2).items, (std::vector<ItemId>{"b", "d"}));
  EXPECT_THROW(model.fit({events, {{"neighborhood", "-1"}}}), InvalidParameter);
}

TEST(Baselines, DuplicateFreeAndBounded) {
  SyntheticParams p;
  p.n_events = 3000;
  p.seed = 8;
  const Dataset d = generate_synthetic(p);
  PopularityRecommender pop(true);
  RandomRecommender rnd(1);
  CooccurrenceRecommender cooc(5);
  for (Recommender* m : std::initializer_list<Recommender*>{&pop, &rnd, &cooc}) {
    m->fit({d.events(), {}});
    for (const auto& u : d.users()) {
      std::vector<ItemId> hist;
      for (const auto& e : d.user_events(u.user_id)) hist.push_back(e.item_id);
      for (int k : {1, 7, 20}) {
        EXPECT_NO_THROW(recommend(*m, u.user_id, hist, k)) << m->name();
      }
    }
  }
}

class BrokenModel final : public Recommender {
 public:
  explicit BrokenModel(int mode) : mode_(mode) {}
  std::string name() const override { return "broken"; }
  void fit(const TrainRequest&) override {}
  RankedList recommend(const UserId& user, std::span<const ItemId>, int) const override {
    if (mode_ == 0) return {user, {"a", "a"}};
    if (mode_ == 1) return {user, {"a", "b", "c"}};
    if (mode_ == 2) return {"someone else", {}};
    throw std::runtime_error("segfault averted");
  }

 private:
  int mode_;
};

TEST(Recommend, ValidatesModelAnswers) {
  for (int mode = 0; mode < 4; ++mode) {
    EXPECT_THROW(recommend(BrokenModel(mode), "u", {}, 2), ModelQueryFailure) << mode;
  }
}

// ---------------------------------------------------------------------------
// external binding
// ---------------------------------------------------------------------------

const std::string kAdapter = RECHECK_TEST_ADAPTER;

struct Exchange {
  TempDir dir{"exchange"};
  std::vector<InteractionEvent> train = playcounts({{"a", 3}, {"b", 2}, {"c", 1}}, "u1");
  std::vector<UserId> users = {"u1", "u2", "u3"};

  explicit Exchange(int k = 2) {
    TrainRequest req{train, {{"lr", "0.1"}}, nullptr, 1, 99, k, 49};
    write_request_dir(dir.path(), train, users, req);
  }
};

TEST(RunExternal, FixedListParses) {
  Exchange ex;
  const auto lists = run_external(ExternalCommand::parse(kAdapter + " fixed b,a"), ex.dir.path());
  ASSERT_EQ(lists.size(), 3u);
  for (std::size_t i = 0; i < lists.size(); ++i) {
    EXPECT_EQ(lists[i].user_id, ex.users[i]);
    EXPECT_EQ(lists[i].items, (std::vector<ItemId>{"b", "a"}));
  }
  const auto manifest = nlohmann::json::parse(std::ifstream(ex.dir.path() / "request.json"));
  EXPECT_EQ(manifest.at("k"), 2);
  EXPECT_EQ(manifest.at("run_id"), 1);
  EXPECT_EQ(manifest.at("seed"), 99);
  EXPECT_EQ(manifest.at("phase"), "fit_predict");
  EXPECT_EQ(manifest.at("budget_remaining"), 49);
}

TEST(RunExternal, MissingUserIsNamed) {
  Exchange ex;
  try {
    run_external(ExternalCommand::parse(kAdapter + " missing_user"), ex.dir.path());
    FAIL() << "expected MalformedPredictions";
  } catch (const MalformedPredictions& e) {
    EXPECT_NE(std::string(e.what()).find("'u1'"), std::string::npos) << e.what();
  }
}

TEST(RunExternal, FailuresCarryDiagnostics) {
  Exchange ex;
  try {
    run_external(ExternalCommand::parse(kAdapter + " fail"), ex.dir.path());
    FAIL() << "expected ExternalModelFailure";
  } catch (const ExternalModelFailure& e) {
    EXPECT_NE(std::string(e.what()).find("exploded on purpose"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("exit status 3"), std::string::npos);
  }
  EXPECT_THROW(run_external(ExternalCommand::parse(kAdapter + " no_output"), ex.dir.path()),
               MalformedPredictions);
  EXPECT_THROW(run_external(ExternalCommand::parse("/nonexistent/model"), ex.dir.path()),
               ExternalModelFailure);
}

TEST(RunExternal, TimeoutKillsProcess) {
  Exchange ex;
  const auto start = std::chrono::steady_clock::now();
  try {
    run_external(ExternalCommand::parse(kAdapter + " sleep 30", std::chrono::milliseconds(300)),
                 ex.dir.path());
    FAIL() << "expected Timeout";
  } catch (const Timeout& e) {
    EXPECT_NE(std::string(e.what()).find("sleeping"), std::string::npos) << e.what();
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(ReadPredictions, RejectsMalformedFiles) {
  const std::vector<UserId> users = {"u"};
  auto parse = [&](const std::string& body, int k = 3) {
    std::istringstream in("user_id\trank\titem_id\n" + body);
    return read_predictions(in, "p.tsv", users, k);
  };
  EXPECT_EQ(parse("u\t2\tb\nu\t1\ta\n").front().items, (std::vector<ItemId>{"a", "b"}));
  EXPECT_THROW(parse("u\t1\ta\nu\t3\tb\n"), MalformedPredictions);
  EXPECT_THROW(parse("u\t1\ta\nu\t2\ta\n"), MalformedPredictions);
  EXPECT_THROW(parse("u\t1\ta\nv\t1\ta\n"), MalformedPredictions);
  EXPECT_THROW(parse("u\t4\ta\n"), MalformedPredictions);
  EXPECT_THROW(parse("u\tone\ta\n"), MalformedPredictions);
}

// The adapter re-implements popularity from train.tsv; its file must match the
// in-process baseline's rendering byte for byte.
TEST(ExternalRecommender, EquivalentToInProcessPopularity) {
  SyntheticParams p;
  p.n_events = 3000;
  p.seed = 4;
  const Dataset d = generate_synthetic(p);
  const auto plan = partition(d, 5, 6);
  const auto mat = materialize_split(d, plan, rotation_schedule(5)[2]);
  std::vector<Query> queries;
  for (const auto& [u, items] : mat.test_truth) {
    std::vector<ItemId> hist;
    for (const auto& e : mat.train_events) {
      if (e.user_id == u) hist.push_back(e.item_id);
    }
    queries.push_back({u, hist});
  }
  TempDir work("equiv");
  ExternalRecommender external(ExternalCommand::parse(kAdapter + " popularity"), work.path(), true);
  external.fit({mat.train_events, {}, &mat.val_truth, 2, 5, 10, 49});
  const auto ext_lists = recommend_all(external, queries, 10);
  const auto local = baseline_popularity(mat.train_events, false);
  const auto local_lists = recommend_all(*local, queries, 10);
  EXPECT_EQ(ext_lists, local_lists);

  std::ostringstream rendered;
  write_predictions(rendered, local_lists);
  std::ifstream in(work.path() / "exchange_0" / "predictions.tsv", std::ios::binary);
  std::stringstream adapter_file;
  adapter_file << in.rdbuf();
  EXPECT_EQ(adapter_file.str(), rendered.str());
  EXPECT_TRUE(std::filesystem::exists(work.path() / "exchange_0" / "val.tsv"));
}

TEST(ExternalRecommender, PerturbedHistoriesRewriteTrainFile) {
  const std::vector<InteractionEvent> train = {{"u1", "a", 10, 2}, {"u1", "b", 20, 1},
                                               {"u2", "c", 5, 1}};
  TempDir work("override");
  ExternalRecommender model(ExternalCommand::parse(kAdapter + " fixed a"), work.path(), true);
  model.fit({train, {}});
  const std::vector<Query> queries = {{"u1", {"a", "c"}}, {"u2", {"c"}}};
  const auto lists = recommend_all(model, queries, 3);
  EXPECT_EQ(lists[1].items, (std::vector<ItemId>{"a"}));
  auto in = tsv::open_input(work.path() / "exchange_0" / "train.tsv");
  const auto written = read_events(in, "train.tsv");
  const std::vector<InteractionEvent> expected = {{"u1", "a", 10, 2}, {"u1", "c", 20, 1},
                                                  {"u2", "c", 5, 1}};
  EXPECT_EQ(written, expected);
  EXPECT_FALSE(model.concurrent_query_safe());
}

}  // namespace
}  // namespace recheck

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

#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "recheck/behavioral.hpp"
#include "recheck/datamodel.hpp"
#include "recheck/folds.hpp"
#include "recheck/metrics.hpp"
#include "recheck/model_protocol.hpp"
#include "recheck/scoring.hpp"
#include "recheck/slices.hpp"

namespace recheck {

struct EvalOptions {
  int k = 20;
  int folds = 5;
  std::uint64_t seed = 42;
  std::vector<std::string> included_tests = default_included_tests();
  std::size_t perturb_users = 1000;
  std::size_t budget = 50;
  // Settings tried per run; with more than one, the best validation NDCG wins.
  std::vector<HyperparameterSetting> grid = {HyperparameterSetting{}};
  bool truth_exclude_seen = false;
  bool parallel_runs = false;
  bool per_user_samples = false;
  int n_buckets = 4;
  std::size_t low_support_floor = 5;
};

struct RunContext {
  int run_id = 0;
  std::uint64_t seed = 0;
  const SplitMaterialization* split = nullptr;
};

struct ModelSpec {
  std::string name;
  std::function<std::unique_ptr<Recommender>(const RunContext&)> make;
  bool parallel_safe = true;
};

struct RunOutcome {
  std::vector<TestResult> results;
  std::vector<SliceRecord> slices;
  std::map<std::string, std::vector<double>> samples;
  nlohmann::json timing = nlohmann::json::object();
};

inline std::uint64_t run_seed(std::uint64_t seed, int run_id) {
  return derive_seed(seed, 0x5255'4e00ULL + static_cast<std::uint64_t>(run_id));
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::map<UserId, std::vector<InteractionEvent>> histories_of(
    std::span<const InteractionEvent> events) {
  std::map<UserId, std::vector<InteractionEvent>> out;
  for (const auto& e : events) out[e.user_id].push_back(e);
  return out;
}

inline std::vector<Query> queries_for(const TruthMap& truth,
                                      const std::map<UserId, std::vector<InteractionEvent>>& histories) {
  std::vector<Query> out;
  out.reserve(truth.size());
  for (const auto& [user, items] : truth) {
    auto it = histories.find(user);
    out.push_back({user, it == histories.end() ? std::vector<ItemId>{} : item_ids(it->second)});
  }
  return out;
}

inline PredictionMap to_prediction_map(std::vector<RankedList> lists) {
  PredictionMap out;
  for (auto& l : lists) {
    auto user = l.user_id;
    out.emplace(std::move(user), std::move(l));
  }
  return out;
}

}  // namespace detail

// One rotation step: train (tuning on the validation fold when the grid has
// several settings), predict for every test user and run all test tiers.
inline RunOutcome evaluate_run(const Dataset& dataset, const FoldPlan& plan, const RunSplit& split,
                               const ModelSpec& model_spec, const EvalOptions& options) {
  using Clock = std::chrono::steady_clock;
  if (options.k < 1) throw InvalidParameter("k must be >= 1");
  if (options.grid.empty()) throw InvalidParameter("hyperparameter grid is empty");
  const auto mat = materialize_split(dataset, plan, split, options.truth_exclude_seen);
  const std::uint64_t seed = run_seed(plan.seed, split.run_id);
  const RunContext ctx{split.run_id, seed, &mat};
  const auto histories = detail::histories_of(mat.train_events);
  RunOutcome out;

  auto start = Clock::now();
  TrainBudget budget(options.budget);
  std::unique_ptr<Recommender> model;
  double best_val = -1.0;
  for (const auto& setting : options.grid) {
    auto candidate = model_spec.make(ctx);
    TrainRequest request{mat.train_events, setting, &mat.val_truth, split.run_id, seed, options.k, 0};
    train(*candidate, request, budget);
    if (options.grid.size() == 1) {
      model = std::move(candidate);
      break;
    }
    const auto val_queries = detail::queries_for(mat.val_truth, histories);
    const auto val_preds = detail::to_prediction_map(recommend_all(*candidate, val_queries, options.k));
    const double val_ndcg =
        evaluate_standard(val_preds, to_ground_truth(mat.val_truth), options.k, 1).ndcg_at_k;
    if (val_ndcg > best_val) {
      best_val = val_ndcg;
      model = std::move(candidate);
    }
  }
  out.timing["train_secs"] = detail::seconds_since(start);
  out.timing["settings_trained"] = budget.used();

  start = Clock::now();
  const auto test_queries = detail::queries_for(mat.test_truth, histories);
  PredictionMap preds;
  try {
    preds = detail::to_prediction_map(recommend_all(*model, test_queries, options.k));
  } catch (const Error& e) {
    throw ModelQueryFailure("run " + std::to_string(split.run_id) + ": " + e.what());
  }
  out.timing["predict_secs"] = detail::seconds_since(start);

  start = Clock::now();
  const auto truths = to_ground_truth(mat.test_truth);
  const int run = split.run_id;
  auto emit = [&](std::string_view id, double value) {
    out.results.push_back({std::string(id), run, value});
  };

  const auto standard = evaluate_standard(preds, truths, options.k, dataset.items().size());
  emit(test_ids::kHitRate, standard.hr_at_k);
  emit(test_ids::kMrr, standard.mrr_at_k);
  emit(test_ids::kNdcg, standard.ndcg_at_k);
  emit(test_ids::kMap, standard.map_at_k);
  emit(test_ids::kCoverage, standard.coverage);

  auto slice = [&](SliceKind kind) {
    SliceSpec spec{kind, options.n_buckets, options.low_support_floor};
    auto report = slice_evaluate(preds, truths, dataset, mat, spec, options.k);
    out.slices.push_back({run, report});
    return report;
  };
  emit(test_ids::kCountryWorst, slice(SliceKind::kUserCountry).worst_group_hr);
  emit(test_ids::kGenderWorst, slice(SliceKind::kUserGender).worst_group_hr);
  emit(test_ids::kActivityWorst, slice(SliceKind::kUserActivity).worst_group_hr);
  emit(test_ids::kPopularityWorst, slice(SliceKind::kItemPopularity).worst_group_hr);
  {
    // Without cold-start users in this run there is nothing to penalise.
    const auto cold = slice(SliceKind::kColdStart);
    auto it = cold.groups.find("cold");
    emit(test_ids::kColdStartHr, it == cold.groups.end() ? standard.hr_at_k : it->second.hr);
  }

  std::vector<UserId> test_users;
  for (const auto& [user, items] : mat.test_truth) test_users.push_back(user);
  const SwapCatalog catalog(dataset.items(), popularity_order(mat.train_events));
  const PerturbationSpec perturbation{options.perturb_users, derive_seed(seed, 0x57ab)};
  const auto stability = stability_test(*model, test_users, histories, perturbation, options.k, catalog);
  emit(test_ids::kStability, stability.mean_jaccard);
  const auto errors = error_distance_test(preds, truths, dataset, options.k);
  emit(test_ids::kErrorQuality, errors.quality);
  out.timing["tests_secs"] = detail::seconds_since(start);

  if (options.per_user_samples) {
    auto& s = out.samples;
    for (const auto& [user, truth] : truths) {
      const auto m = score_user(preds, truth, options.k);
      s[std::string(test_ids::kHitRate)].push_back(m.hr);
      s[std::string(test_ids::kMrr)].push_back(m.mrr);
      s[std::string(test_ids::kNdcg)].push_back(m.ndcg);
      s[std::string(test_ids::kMap)].push_back(m.map);
      s[std::string(test_ids::kErrorQuality)].push_back(1.0 - errors.per_user.at(user));
    }
    for (const auto& [user, j] : stability.per_user) {
      s[std::string(test_ids::kStability)].push_back(j);
    }
  }
  return out;
}

inline nlohmann::json config_to_json(const EvalOptions& o, const std::string& model) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& s : o.grid) grid.push_back(s.values());
  return {{"k", o.k},
          {"folds", o.folds},
          {"seed", o.seed},
          {"model", model},
          {"perturb_users", o.perturb_users},
          {"budget", o.budget},
          {"grid", grid},
          {"truth_exclude_seen", o.truth_exclude_seen},
          {"n_buckets", o.n_buckets},
          {"low_support_floor", o.low_support_floor},
          {"per_user_samples", o.per_user_samples}};
}

// Partition, rotate, evaluate every run and aggregate into a report.
inline RunReport run_evaluation(const Dataset& dataset, const ModelSpec& model,
                                const EvalOptions& options, FoldPlan* plan_out = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const FoldPlan plan = partition(dataset, options.folds, options.seed);
  const auto schedule = rotation_schedule(options.folds);

  std::vector<RunOutcome> outcomes(schedule.size());
  if (options.parallel_runs && model.parallel_safe) {
    std::vector<std::future<RunOutcome>> futures;
    for (const auto& split : schedule) {
      futures.push_back(std::async(std::launch::async, [&, split] {
        return evaluate_run(dataset, plan, split, model, options);
      }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      outcomes[i] = evaluate_run(dataset, plan, schedule[i], model, options);
    }
  }

  RunReport report;
  report.dataset_digest = dataset_digest(dataset);
  report.fold_seed = options.seed;
  report.folds = options.folds;
  report.k = options.k;
  report.model = model.name;
  report.included_tests = options.included_tests;
  report.config = config_to_json(options, model.name);
  nlohmann::json timings = nlohmann::json::object();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    report.results.insert(report.results.end(), o.results.begin(), o.results.end());
    report.slices.insert(report.slices.end(), o.slices.begin(), o.slices.end());
    for (auto& [test, values] : o.samples) {
      auto& dst = report.samples[test];
      dst.insert(dst.end(), values.begin(), values.end());
    }
    timings["run_" + std::to_string(schedule[i].run_id)] = o.timing;
  }
  report.final_score = aggregate(report.results, report.included_tests);
  report.meta["wall_clock"] = timings;
  report.meta["total_secs"] = detail::seconds_since(start);
  if (plan_out != nullptr) *plan_out = plan;
  return report;
}

}  // namespace recheck

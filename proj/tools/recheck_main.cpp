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

// recheck: generate datasets, run the rotating k-fold evaluation, verify a
// rerun against a submitted report and render reports.
//
// Exit codes:
//   0  success (for verify: every test passed)
//   1  verify ran but at least one test failed
//   2  command line usage error
//   3  reports are incompatible (version, k, folds or test set differ)
//   4  invalid parameter
//   5  dataset or fold error
//   6  model failure (budget, external process, malformed predictions, timeout)
//   7  I/O error
//   8  report parse error
//   9  any other error

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recheck.hpp"

namespace fs = std::filesystem;
using namespace recheck;

namespace {

enum ExitCode {
  kOk = 0,
  kVerifyFailed = 1,
  kUsage = 2,
  kIncompatible = 3,
  kInvalidParameter = 4,
  kDataError = 5,
  kModelFailure = 6,
  kIoError = 7,
  kParseError = 8,
  kOtherError = 9,
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << content)) throw IoError("cannot write '" + path.string() + "'");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hostname() {
  char buf[256] = {};
  gethostname(buf, sizeof buf - 1);
  return buf;
}

struct GenArgs {
  SyntheticParams params;
  std::string countries = "UK,JP,US,DE,BR";
  double user_exponent = -1.0;
  fs::path out_dir = ".";
};

int cmd_gen(GenArgs& a) {
  a.params.countries = split_list(a.countries);
  if (a.user_exponent >= 0.0) a.params.user_exponent = a.user_exponent;
  if (a.params.n_artists <= 0) a.params.n_artists = std::max<std::int64_t>(1, a.params.n_items / 5);
  const Dataset d = generate_synthetic(a.params);
  fs::create_directories(a.out_dir);
  save_dataset(d, a.out_dir / "events.tsv", a.out_dir / "items.tsv", a.out_dir / "users.tsv");
  std::cout << "wrote " << d.events().size() << " events, " << d.items().size() << " items, "
            << d.users().size() << " users to " << a.out_dir.string() << "\n";
  return kOk;
}

struct EvalArgs {
  fs::path events, items, users, out;
  fs::path plan_out;
  fs::path grid;
  fs::path work_dir;
  std::string model = "popularity";
  std::string tests;
  bool exclude_seen = false;
  bool truth_exclude_seen = false;
  bool parallel_runs = false;
  bool per_user_samples = false;
  bool keep_exchanges = false;
  std::size_t neighborhood = 0;
  double timeout_secs = 3600.0;
  EvalOptions options;
};

ModelSpec resolve_model(const EvalArgs& a) {
  const std::string& m = a.model;
  if (m == "popularity") {
    const bool exclude = a.exclude_seen;
    return {m, [exclude](const RunContext&) { return std::make_unique<PopularityRecommender>(exclude); }, true};
  }
  if (m == "random") {
    return {m, [](const RunContext& c) { return std::make_unique<RandomRecommender>(c.seed); }, true};
  }
  if (m == "cooc") {
    const std::size_t n = a.neighborhood;
    return {m, [n](const RunContext&) { return std::make_unique<CooccurrenceRecommender>(n); }, true};
  }
  if (m.rfind("external:", 0) == 0) {
    const auto command = ExternalCommand::parse(
        m.substr(9), std::chrono::milliseconds(static_cast<std::int64_t>(a.timeout_secs * 1000.0)));
    const fs::path work = a.work_dir;
    const bool keep = a.keep_exchanges;
    return {m,
            [command, work, keep](const RunContext& c) {
              return std::make_unique<ExternalRecommender>(
                  command, work / ("run_" + std::to_string(c.run_id)), keep);
            },
            false};
  }
  throw InvalidParameter("unknown model '" + m + "' (random|popularity|cooc|external:<cmd>)");
}

std::vector<HyperparameterSetting> load_grid(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  if (!j.is_array() || j.empty()) throw InvalidParameter("grid file must hold a non-empty JSON array");
  std::vector<HyperparameterSetting> grid;
  for (const auto& entry : j) {
    HyperparameterSetting s;
    for (const auto& [key, value] : entry.items()) {
      s.set(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    grid.push_back(std::move(s));
  }
  return grid;
}

int cmd_eval(EvalArgs& a) {
  auto& o = a.options;
  if (o.folds < 3) throw InvalidK("--folds must be >= 3");
  if (o.k < 1) throw InvalidParameter("--k must be >= 1");
  if (o.budget < 1) throw InvalidParameter("--budget must be >= 1");
  if (!a.tests.empty()) {
    o.included_tests = split_list(a.tests);
    const std::set<std::string> known = {
        "hr_at_k", "mrr_at_k", "ndcg_at_k", "map_at_k", "coverage",
        "slice.country.worst", "slice.gender.worst", "slice.activity.worst",
        "slice.popularity.worst", "slice.cold_start.hr", "behavioral.stability",
        "behavioral.error_quality"};
    for (const auto& t : o.included_tests) {
      if (!known.contains(t)) throw InvalidParameter("unknown test id '" + t + "'");
    }
  }
  if (!a.grid.empty()) o.grid = load_grid(a.grid);
  o.truth_exclude_seen = a.truth_exclude_seen;
  o.parallel_runs = a.parallel_runs;
  o.per_user_samples = a.per_user_samples;

  const Dataset dataset = load_dataset(a.events, a.items, a.users);
  const bool scratch = a.work_dir.empty();
  if (scratch) a.work_dir = fs::temp_directory_path() / ("recheck-" + std::to_string(getpid()));
  const auto cleanup = [&] {
    std::error_code ignored;
    if (scratch && !a.keep_exchanges) fs::remove_all(a.work_dir, ignored);
  };
  const ModelSpec model = resolve_model(a);
  FoldPlan plan;
  RunReport report;
  try {
    report = run_evaluation(dataset, model, o, &plan);
  } catch (...) {
    cleanup();
    throw;
  }
  cleanup();
  report.config["exclude_seen"] = a.exclude_seen;
  if (a.model == "cooc") report.config["neighborhood"] = a.neighborhood;
  report.meta["timestamp"] = utc_now();
  report.meta["host"] = hostname();

  write_file(a.out, serialize_report(report));
  const fs::path plan_path = a.plan_out.empty() ? fs::path(a.out.string() + ".folds.json") : a.plan_out;
  write_file(plan_path, canonical_dump(fold_plan_to_json(plan)));
  std::cout << "final_score " << report.final_score << "\nreport " << a.out.string()
            << "\nfold plan " << plan_path.string() << "\n";
  return kOk;
}

struct VerifyArgs {
  fs::path local, remote, out;
  std::string unit = "run";
  VerifyOptions options;
};

int cmd_verify(VerifyArgs& a) {
  if (a.unit == "user") {
    a.options.unit = BootstrapUnit::kUser;
  } else if (a.unit != "run") {
    throw InvalidParameter("--unit must be run or user");
  }
  const RunReport local = parse_report(read_file(a.local));
  const RunReport remote = parse_report(read_file(a.remote));
  const VerificationResult result = verify(local, remote, a.options);
  for (const auto& t : result.tests) {
    std::printf("%-26s local %.4f [%.4f, %.4f]  remote %.4f [%.4f, %.4f]  %s\n", t.test_id.c_str(),
                t.local_mean, t.local_ci.low, t.local_ci.high, t.remote_mean, t.remote_ci.low,
                t.remote_ci.high, t.pass ? "PASS" : "FAIL");
  }
  std::printf("overall: %s\n", result.overall_pass ? "PASS" : "FAIL");
  if (!a.out.empty()) write_file(a.out, canonical_dump(verification_to_json(result)));
  return result.overall_pass ? kOk : kVerifyFailed;
}

int cmd_report(const fs::path& path) {
  std::cout << render_report(parse_report(read_file(path)));
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IncompatibleReports*>(&e)) return kIncompatible;
  if (dynamic_cast<const ReportParseError*>(&e)) return kParseError;
  if (dynamic_cast<const IoError*>(&e)) return kIoError;
  if (dynamic_cast<const BudgetExceeded*>(&e) || dynamic_cast<const ExternalModelFailure*>(&e) ||
      dynamic_cast<const MalformedPredictions*>(&e) || dynamic_cast<const Timeout*>(&e) ||
      dynamic_cast<const ModelQueryFailure*>(&e)) {
    return kModelFailure;
  }
  if (dynamic_cast<const MalformedRow*>(&e) || dynamic_cast<const DanglingReference*>(&e) ||
      dynamic_cast<const DuplicateId*>(&e) || dynamic_cast<const TooFewEvents*>(&e) ||
      dynamic_cast<const InvalidK*>(&e) || dynamic_cast<const InconsistentSplit*>(&e) ||
      dynamic_cast<const EmptyTraining*>(&e)) {
    return kDataError;
  }
  if (dynamic_cast<const InvalidParameter*>(&e) || dynamic_cast<const UnknownSliceKind*>(&e)) {
    return kInvalidParameter;
  }
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return kParseError;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIoError;
  return kOtherError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recheck: rotating k-fold evaluation and behavioral testing for top-K recommenders"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write a synthetic power-law dataset as three TSV files");
  g->add_option("--users", gen.params.n_users, "number of users")->default_val(100);
  g->add_option("--items", gen.params.n_items, "number of items")->default_val(50);
  g->add_option("--events", gen.params.n_events, "number of events")->default_val(5000);
  g->add_option("--exponent", gen.params.zipf_exponent, "Zipf exponent of item popularity")->default_val(1.0);
  g->add_option("--user-exponent", gen.user_exponent, "Zipf exponent of user activity (default: --exponent)");
  g->add_option("--artists", gen.params.n_artists, "number of artists (default items/5)")->default_val(0);
  g->add_option("--countries", gen.countries, "comma-separated country codes")->default_val(gen.countries);
  g->add_option("--seed", gen.params.seed, "RNG seed")->default_val(0);
  g->add_option("--out-dir", gen.out_dir, "output directory")->default_val(".");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Run the rotating k-fold evaluation and write a report");
  e->add_option("--events", ev.events, "events.tsv")->required();
  e->add_option("--items", ev.items, "items.tsv")->required();
  e->add_option("--users", ev.users, "users.tsv")->required();
  e->add_option("--out", ev.out, "report path")->required();
  e->add_option("--plan-out", ev.plan_out, "fold plan path (default <out>.folds.json)");
  e->add_option("--k", ev.options.k, "top-K cutoff")->default_val(20);
  e->add_option("--folds", ev.options.folds, "fold count")->default_val(5);
  e->add_option("--seed", ev.options.seed, "fold seed")->default_val(42);
  e->add_option("--model", ev.model, "random | popularity | cooc | external:<cmd>")->default_val("popularity");
  e->add_flag("--exclude-seen", ev.exclude_seen, "popularity baseline skips the user's training items");
  e->add_flag("--truth-exclude-seen", ev.truth_exclude_seen, "drop training items from held-out truth");
  e->add_option("--tests", ev.tests, "comma-separated test ids included in the final score");
  e->add_option("--budget", ev.options.budget, "distinct hyperparameter settings per run")->default_val(50);
  e->add_option("--grid", ev.grid, "JSON array of hyperparameter settings tried per run");
  e->add_option("--neighborhood", ev.neighborhood, "co-occurrence neighbours kept per item (0 = all)")->default_val(0);
  e->add_option("--perturb-users", ev.options.perturb_users, "users sampled for the stability test")->default_val(1000);
  e->add_option("--timeout-secs", ev.timeout_secs, "wall-clock limit per external exchange")->default_val(3600.0);
  e->add_option("--work-dir", ev.work_dir, "directory for external exchanges");
  e->add_flag("--keep-exchanges", ev.keep_exchanges, "keep external request directories");
  e->add_flag("--parallel-runs", ev.parallel_runs, "evaluate runs concurrently (in-process models)");
  e->add_flag("--per-user-samples", ev.per_user_samples, "store per-user values for user-level bootstrap");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Compare a rerun report against a submitted report");
  v->add_option("local", ver.local, "local report")->required();
  v->add_option("remote", ver.remote, "remote report")->required();
  v->add_option("--out", ver.out, "write the verification result as JSON");
  v->add_option("--n-boot", ver.options.n_boot, "bootstrap replicates")->default_val(10000);
  v->add_option("--alpha", ver.options.alpha, "1 - confidence level")->default_val(0.05);
  v->add_option("--seed", ver.options.seed, "bootstrap seed")->default_val(0);
  v->add_option("--unit", ver.unit, "resampling unit: run | user")->default_val("run");

  fs::path report_path;
  auto* r = app.add_subcommand("report", "Render a report as markdown tables");
  r->add_option("report", report_path, "report path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen);
    if (e->parsed()) return cmd_eval(ev);
    if (v->parsed()) return cmd_verify(ver);
    if (r->parsed()) return cmd_report(report_path);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  return kUsage;
}

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
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "recheck/errors.hpp"
#include "recheck/random.hpp"
#include "recheck/slices.hpp"

namespace recheck {

inline constexpr std::string_view kHarnessVersion = "1.0.0";

namespace test_ids {
inline constexpr std::string_view kHitRate = "hr_at_k";
inline constexpr std::string_view kMrr = "mrr_at_k";
inline constexpr std::string_view kNdcg = "ndcg_at_k";
inline constexpr std::string_view kMap = "map_at_k";
inline constexpr std::string_view kCoverage = "coverage";
inline constexpr std::string_view kCountryWorst = "slice.country.worst";
inline constexpr std::string_view kGenderWorst = "slice.gender.worst";
inline constexpr std::string_view kActivityWorst = "slice.activity.worst";
inline constexpr std::string_view kPopularityWorst = "slice.popularity.worst";
inline constexpr std::string_view kColdStartHr = "slice.cold_start.hr";
inline constexpr std::string_view kStability = "behavioral.stability";
inline constexpr std::string_view kErrorQuality = "behavioral.error_quality";
}  // namespace test_ids

// Coverage and the gender/activity slices are reported but not scored by
// default.
inline std::vector<std::string> default_included_tests() {
  using namespace test_ids;
  return {std::string(kHitRate),         std::string(kMrr),
          std::string(kNdcg),            std::string(kMap),
          std::string(kCountryWorst),    std::string(kPopularityWorst),
          std::string(kColdStartHr),     std::string(kStability),
          std::string(kErrorQuality)};
}

struct TestResult {
  std::string test_id;
  int run_id = 0;
  double value = 0.0;

  friend bool operator==(const TestResult&, const TestResult&) = default;
};

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  bool contains(double x) const { return low <= x && x <= high; }
};

struct SliceRecord {
  int run_id = 0;
  SliceReport report;
};

struct RunReport {
  std::string harness_version{kHarnessVersion};
  std::string dataset_digest;
  std::uint64_t fold_seed = 0;
  int folds = 5;
  int k = 20;
  std::string model;
  std::vector<std::string> included_tests = default_included_tests();
  std::vector<TestResult> results;
  double final_score = 0.0;
  std::vector<SliceRecord> slices;
  // Optional per-user values (all runs concatenated) for user-level bootstrap.
  std::map<std::string, std::vector<double>> samples;
  nlohmann::json config = nlohmann::json::object();
  // Host, timestamps and wall-clock timings. Never compared.
  nlohmann::json meta = nlohmann::json::object();

  // Values of one test ordered by run id.
  std::vector<double> values_of(const std::string& test_id) const {
    std::map<int, double> by_run;
    for (const auto& r : results) {
      if (r.test_id == test_id) by_run[r.run_id] = r.value;
    }
    std::vector<double> out;
    out.reserve(by_run.size());
    for (const auto& [run, v] : by_run) out.push_back(v);
    return out;
  }
};

// Sequential left-to-right sum; used everywhere a mean is compared so that
// identical inputs give bit-identical means.
inline double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Per-test mean over runs, then the unweighted mean over included tests.
inline double aggregate(std::span<const TestResult> results,
                        const std::vector<std::string>& included_tests) {
  if (included_tests.empty()) throw InvalidParameter("no tests included in the score");
  std::map<std::string, std::map<int, double>> table;
  std::set<int> runs;
  for (const auto& r : results) {
    if (!std::isfinite(r.value) || r.value < 0.0 || r.value > 1.0) {
      throw InvalidParameter("test '" + r.test_id + "' run " + std::to_string(r.run_id) +
                             " has a value outside [0, 1]");
    }
    if (!table[r.test_id].emplace(r.run_id, r.value).second) {
      throw InvalidParameter("duplicate value for test '" + r.test_id + "' run " +
                             std::to_string(r.run_id));
    }
    runs.insert(r.run_id);
  }
  const std::set<std::string> unique(included_tests.begin(), included_tests.end());
  double total = 0.0;
  for (const auto& test : unique) {
    auto it = table.find(test);
    if (it == table.end()) throw MissingTestValue("no values for test '" + test + "'");
    std::vector<double> values;
    for (int run : runs) {
      auto v = it->second.find(run);
      if (v == it->second.end()) {
        throw MissingTestValue("test '" + test + "' has no value for run " + std::to_string(run));
      }
      values.push_back(v->second);
    }
    total += mean_of(values);
  }
  return total / static_cast<double>(unique.size());
}

// Linear interpolation between order statistics (the "type 7" estimator).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Percentile bootstrap of the mean.
inline ConfidenceInterval bootstrap_mean_ci(std::span<const double> values, int n_boot = 10000,
                                            double alpha = 0.05, std::uint64_t seed = 0) {
  if (values.empty()) throw EmptyInput("bootstrap needs at least one value");
  if (n_boot < 1) throw InvalidParameter("n_boot must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must be in (0, 1)");
  Rng rng(seed);
  std::vector<double> means(n_boot);
  std::vector<double> resample(values.size());
  for (auto& m : means) {
    for (auto& x : resample) x = values[rng.index(values.size())];
    m = mean_of(resample);
  }
  std::sort(means.begin(), means.end());
  return {sorted_quantile(means, alpha / 2.0), sorted_quantile(means, 1.0 - alpha / 2.0)};
}

enum class BootstrapUnit { kRun, kUser };

struct VerifyOptions {
  int n_boot = 10000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  BootstrapUnit unit = BootstrapUnit::kRun;
};

struct TestVerification {
  std::string test_id;
  double local_mean = 0.0;
  double remote_mean = 0.0;
  ConfidenceInterval local_ci;
  ConfidenceInterval remote_ci;
  bool pass = false;
};

struct VerificationResult {
  std::vector<TestVerification> tests;
  bool overall_pass = false;
};

inline void check_compatible(const RunReport& a, const RunReport& b) {
  if (a.harness_version != b.harness_version) {
    throw IncompatibleReports("harness versions differ: " + a.harness_version + " vs " +
                              b.harness_version);
  }
  if (a.k != b.k) {
    throw IncompatibleReports("k differs: " + std::to_string(a.k) + " vs " + std::to_string(b.k));
  }
  if (a.folds != b.folds) {
    throw IncompatibleReports("fold counts differ: " + std::to_string(a.folds) + " vs " +
                              std::to_string(b.folds));
  }
  const std::set<std::string> ta(a.included_tests.begin(), a.included_tests.end());
  const std::set<std::string> tb(b.included_tests.begin(), b.included_tests.end());
  if (ta != tb) throw IncompatibleReports("included test sets differ");
}

// A test passes when each side's mean lies inside the other side's CI. Both
// sides bootstrap with the same per-test seed, so the outcome does not depend
// on which report is called local.
inline VerificationResult verify(const RunReport& local, const RunReport& remote,
                                 const VerifyOptions& options = {}) {
  check_compatible(local, remote);
  if (options.unit == BootstrapUnit::kUser && (local.samples.empty() || remote.samples.empty())) {
    throw IncompatibleReports("user-level verification needs reports with per-user samples");
  }
  const std::set<std::string> tests(local.included_tests.begin(), local.included_tests.end());
  VerificationResult out;
  out.overall_pass = true;
  for (const auto& test : tests) {
    std::vector<double> lv, rv;
    const auto li = local.samples.find(test), ri = remote.samples.find(test);
    const bool local_has = li != local.samples.end(), remote_has = ri != remote.samples.end();
    if (options.unit == BootstrapUnit::kUser && local_has != remote_has) {
      throw IncompatibleReports("per-user samples for '" + test + "' missing from one report");
    }
    // Tests that are not per-user means (slice worst groups) stay at run level.
    if (options.unit == BootstrapUnit::kUser && local_has) {
      lv = li->second;
      rv = ri->second;
    } else {
      lv = local.values_of(test);
      rv = remote.values_of(test);
    }
    if (lv.empty() || rv.empty()) {
      throw IncompatibleReports("no values for included test '" + test + "'");
    }
    const std::uint64_t seed = derive_seed(options.seed, stable_hash(test));
    TestVerification tv;
    tv.test_id = test;
    tv.local_mean = mean_of(lv);
    tv.remote_mean = mean_of(rv);
    tv.local_ci = bootstrap_mean_ci(lv, options.n_boot, options.alpha, seed);
    tv.remote_ci = bootstrap_mean_ci(rv, options.n_boot, options.alpha, seed);
    tv.pass = tv.local_ci.contains(tv.remote_mean) && tv.remote_ci.contains(tv.local_mean);
    out.overall_pass = out.overall_pass && tv.pass;
    out.tests.push_back(std::move(tv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical JSON
// ---------------------------------------------------------------------------

namespace detail {

inline void format_double(std::string& out, double v) {
  if (!std::isfinite(v)) throw InvalidParameter("non-finite number in report");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void write_canonical(std::string& out, const nlohmann::json& j, int indent, int depth) {
  const auto newline = [&](int d) {
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map: sorted keys
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += nlohmann::json(it.key()).dump();
        out += ": ";
        write_canonical(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        write_canonical(out, v, indent, depth + 1);
      }
      newline(depth);
      out += ']';
      return;
    }
    case nlohmann::json::value_t::number_float:
      format_double(out, j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

}  // namespace detail

// Sorted keys, two-space indent, doubles at 17 significant digits.
inline std::string canonical_dump(const nlohmann::json& j) {
  std::string out;
  detail::write_canonical(out, j, 2, 0);
  out += '\n';
  return out;
}

inline nlohmann::json slice_to_json(const SliceRecord& rec) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [label, g] : rec.report.groups) {
    groups[label] = {{"count", g.count}, {"hr", g.hr},     {"mrr", g.mrr},
                     {"ndcg", g.ndcg},   {"map", g.map},   {"low_support", g.low_support}};
  }
  return {{"run_id", rec.run_id},
          {"kind", slice_kind_name(rec.report.kind)},
          {"groups", groups},
          {"worst_group_hr", rec.report.worst_group_hr},
          {"hr_std_across_groups", rec.report.hr_std_across_groups}};
}

inline SliceRecord slice_from_json(const nlohmann::json& j) {
  SliceRecord rec;
  rec.run_id = j.at("run_id").get<int>();
  rec.report.kind = parse_slice_kind(j.at("kind").get<std::string>());
  for (const auto& [label, g] : j.at("groups").items()) {
    rec.report.groups.emplace(label, GroupStats{g.at("hr").get<double>(), g.at("mrr").get<double>(),
                                                g.at("ndcg").get<double>(), g.at("map").get<double>(),
                                                g.at("count").get<std::size_t>(),
                                                g.at("low_support").get<bool>()});
  }
  rec.report.worst_group_hr = j.at("worst_group_hr").get<double>();
  rec.report.hr_std_across_groups = j.at("hr_std_across_groups").get<double>();
  return rec;
}

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json results = nlohmann::json::array();
  auto sorted = r.results;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.test_id, a.run_id) < std::tie(b.test_id, b.run_id);
  });
  for (const auto& t : sorted) {
    results.push_back({{"test_id", t.test_id}, {"run_id", t.run_id}, {"value", t.value}});
  }
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& s : r.slices) slices.push_back(slice_to_json(s));
  nlohmann::json j = {{"harness_version", r.harness_version},
                      {"dataset_digest", r.dataset_digest},
                      {"fold_seed", r.fold_seed},
                      {"folds", r.folds},
                      {"k", r.k},
                      {"model", r.model},
                      {"included_tests", r.included_tests},
                      {"results", results},
                      {"final_score", r.final_score},
                      {"slices", slices},
                      {"config", r.config},
                      {"meta", r.meta}};
  if (!r.samples.empty()) j["samples"] = r.samples;
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  try {
    r.harness_version = j.at("harness_version").get<std::string>();
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.fold_seed = j.at("fold_seed").get<std::uint64_t>();
    r.folds = j.at("folds").get<int>();
    r.k = j.at("k").get<int>();
    r.model = j.at("model").get<std::string>();
    r.included_tests = j.at("included_tests").get<std::vector<std::string>>();
    r.results.clear();
    for (const auto& t : j.at("results")) {
      r.results.push_back({t.at("test_id").get<std::string>(), t.at("run_id").get<int>(),
                           t.at("value").get<double>()});
    }
    r.final_score = j.at("final_score").get<double>();
    for (const auto& s : j.at("slices")) r.slices.push_back(slice_from_json(s));
    if (j.contains("samples")) {
      r.samples = j.at("samples").get<std::map<std::string, std::vector<double>>>();
    }
    r.config = j.value("config", nlohmann::json::object());
    r.meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ReportParseError(std::string("invalid report: ") + e.what(), 0);
  }
  return r;
}

inline std::string serialize_report(const RunReport& r) { return canonical_dump(report_to_json(r)); }

// Canonical rendering without the "meta" block, for byte-level comparisons.
inline std::string report_body(const RunReport& r) {
  auto j = report_to_json(r);
  j.erase("meta");
  return canonical_dump(j);
}

inline RunReport parse_report(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ReportParseError("malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what(),
                           e.byte);
  }
  return report_from_json(j);
}

inline nlohmann::json verification_to_json(const VerificationResult& v) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : v.tests) {
    tests.push_back({{"test_id", t.test_id},
                     {"local_mean", t.local_mean},
                     {"remote_mean", t.remote_mean},
                     {"local_ci", {t.local_ci.low, t.local_ci.high}},
                     {"remote_ci", {t.remote_ci.low, t.remote_ci.high}},
                     {"pass", t.pass}});
  }
  return {{"tests", tests}, {"overall_pass", v.overall_pass}};
}

}  // namespace recheck

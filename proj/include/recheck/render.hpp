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

#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "recheck/scoring.hpp"

namespace recheck {

namespace detail {
inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
}  // namespace detail

// Markdown tables: one row per test with per-run values and the mean, then
// per-group HR for every slice kind.
inline std::string render_report(const RunReport& report) {
  std::ostringstream out;
  std::set<int> runs;
  std::map<std::string, std::map<int, double>> table;
  for (const auto& r : report.results) {
    runs.insert(r.run_id);
    table[r.test_id][r.run_id] = r.value;
  }
  const std::set<std::string> included(report.included_tests.begin(), report.included_tests.end());

  out << "# " << report.model << " (k=" << report.k << ", folds=" << report.folds
      << ", seed=" << report.fold_seed << ")\n\n";
  out << "| test |";
  for (int run : runs) out << " run " << run << " |";
  out << " mean | scored |\n|---|";
  for (std::size_t i = 0; i < runs.size(); ++i) out << "---|";
  out << "---|---|\n";
  for (const auto& [test, by_run] : table) {
    out << "| " << test << " |";
    double sum = 0.0;
    for (int run : runs) {
      auto it = by_run.find(run);
      if (it == by_run.end()) {
        out << " - |";
      } else {
        out << ' ' << detail::fixed4(it->second) << " |";
        sum += it->second;
      }
    }
    out << ' ' << detail::fixed4(sum / static_cast<double>(by_run.size())) << " | "
        << (included.contains(test) ? "yes" : "no") << " |\n";
  }
  out << "\nfinal score: " << detail::fixed4(report.final_score) << "\n";

  std::map<std::string, std::map<std::string, std::map<int, GroupStats>>> slices;
  for (const auto& s : report.slices) {
    for (const auto& [label, g] : s.report.groups) {
      slices[std::string(slice_kind_name(s.report.kind))][label][s.run_id] = g;
    }
  }
  for (const auto& [kind, groups] : slices) {
    out << "\n## slice " << kind << "\n\n| group |";
    for (int run : runs) out << " run " << run << " HR (n) |";
    out << " support |\n|---|";
    for (std::size_t i = 0; i < runs.size(); ++i) out << "---|";
    out << "---|\n";
    for (const auto& [label, by_run] : groups) {
      bool low = false;
      out << "| " << label << " |";
      for (int run : runs) {
        auto it = by_run.find(run);
        if (it == by_run.end()) {
          out << " - |";
          continue;
        }
        low = low || it->second.low_support;
        out << ' ' << detail::fixed4(it->second.hr) << " (" << it->second.count << ") |";
      }
      out << (low ? " low_support |" : " ok |") << "\n";
    }
  }
  return out.str();
}

}  // namespace recheck

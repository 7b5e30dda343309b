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

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "recheck/datamodel.hpp"
#include "recheck/digest.hpp"
#include "recheck/errors.hpp"
#include "recheck/folds.hpp"
#include "recheck/metrics.hpp"
#include "recheck/random.hpp"

extern char** environ;

namespace recheck {

// ---------------------------------------------------------------------------
// Hyperparameters and the per-run budget
// ---------------------------------------------------------------------------

class HyperparameterSetting {
 public:
  HyperparameterSetting() = default;
  HyperparameterSetting(std::initializer_list<std::pair<const std::string, std::string>> init)
      : values_(init) {}
  explicit HyperparameterSetting(std::map<std::string, std::string> values)
      : values_(std::move(values)) {}

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  // One "key=value\n" line per entry in key order.
  std::string canonical_rendering() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
    return out;
  }

  std::string canonical_hash() const { return sha256_hex(canonical_rendering()); }

  friend bool operator==(const HyperparameterSetting&, const HyperparameterSetting&) = default;

 private:
  std::map<std::string, std::string> values_;
};

// Distinct hyperparameter settings trained within one run. Re-training an
// already seen setting is free.
class TrainBudget {
 public:
  explicit TrainBudget(std::size_t limit = 50) : limit_(limit) {
    if (limit_ < 1) throw InvalidParameter("budget limit must be >= 1");
  }

  void charge(const HyperparameterSetting& setting) {
    const std::string hash = setting.canonical_hash();
    if (seen_.contains(hash)) return;
    if (seen_.size() >= limit_) {
      throw BudgetExceeded("setting #" + std::to_string(seen_.size() + 1) +
                           " exceeds the budget of " + std::to_string(limit_) +
                           " distinct hyperparameter settings per run");
    }
    seen_.insert(hash);
  }

  std::size_t limit() const { return limit_; }
  std::size_t used() const { return seen_.size(); }
  std::size_t remaining() const { return limit_ - seen_.size(); }
  const std::set<std::string>& seen_hashes() const { return seen_; }
  void reset() { seen_.clear(); }

 private:
  std::size_t limit_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// The black-box contract
// ---------------------------------------------------------------------------

struct TrainRequest {
  std::span<const InteractionEvent> train_events;
  HyperparameterSetting setting;
  const TruthMap* val_truth = nullptr;  // optional, for models that tune
  int run_id = 0;
  std::uint64_t seed = 0;
  int k = 20;
  std::size_t budget_remaining = 0;
};

struct Query {
  UserId user_id;
  std::vector<ItemId> history;
};

// A model the harness can only train and query.
class Recommender {
 public:
  virtual ~Recommender() = default;

  virtual std::string name() const = 0;
  virtual bool concurrent_query_safe() const { return false; }

  virtual void fit(const TrainRequest& request) = 0;

  // Returns at most k duplicate-free items. An empty history is a cold-start
  // query and must be answered.
  virtual RankedList recommend(const UserId& user, std::span<const ItemId> history,
                               int k) const = 0;

  virtual std::vector<RankedList> recommend_batch(std::span<const Query> queries, int k) const {
    std::vector<RankedList> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(recommend(q.user_id, q.history, k));
    return out;
  }
};

inline void validate_list(const RankedList& list, const UserId& user, int k) {
  if (list.user_id != user) {
    throw ModelQueryFailure("model answered for '" + list.user_id + "' when asked for '" +
                            user + "'");
  }
  if (list.items.size() > static_cast<std::size_t>(k)) {
    throw ModelQueryFailure("model returned " + std::to_string(list.items.size()) +
                            " items for user '" + user + "', k=" + std::to_string(k));
  }
  std::unordered_set<ItemId> seen;
  for (const auto& item : list.items) {
    if (!seen.insert(item).second) {
      throw ModelQueryFailure("duplicate item '" + item + "' in list for user '" + user + "'");
    }
  }
}

// Charges the budget, then fits.
inline void train(Recommender& model, TrainRequest request, TrainBudget& budget) {
  budget.charge(request.setting);
  request.budget_remaining = budget.remaining();
  model.fit(request);
}

inline RankedList recommend(const Recommender& model, const UserId& user,
                            std::span<const ItemId> history, int k) {
  if (k < 1) throw InvalidParameter("k must be >= 1");
  RankedList list;
  try {
    list = model.recommend(user, history, k);
  } catch (const ModelQueryFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelQueryFailure("model '" + model.name() + "' failed for user '" + user +
                            "': " + e.what());
  }
  validate_list(list, user, k);
  return list;
}

inline std::vector<RankedList> recommend_all(const Recommender& model,
                                             std::span<const Query> queries, int k) {
  if (k < 1) throw InvalidParameter("k must be >= 1");
  auto lists = model.recommend_batch(queries, k);
  if (lists.size() != queries.size()) {
    throw ModelQueryFailure("model '" + model.name() + "' answered " +
                            std::to_string(lists.size()) + " of " +
                            std::to_string(queries.size()) + " queries");
  }
  for (std::size_t i = 0; i < queries.size(); ++i) validate_list(lists[i], queries[i].user_id, k);
  return lists;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

// Items by total training playcount, descending, ties by item id.
inline std::vector<ItemId> popularity_order(std::span<const InteractionEvent> events) {
  std::unordered_map<ItemId, std::int64_t> counts;
  for (const auto& e : events) counts[e.item_id] += e.playcount;
  std::vector<std::pair<std::int64_t, ItemId>> order;
  order.reserve(counts.size());
  for (auto& [item, count] : counts) order.emplace_back(-count, item);
  std::sort(order.begin(), order.end());
  std::vector<ItemId> out;
  out.reserve(order.size());
  for (auto& [neg, item] : order) out.push_back(std::move(item));
  return out;
}

class PopularityRecommender final : public Recommender {
 public:
  explicit PopularityRecommender(bool exclude_seen = false) : exclude_seen_(exclude_seen) {}

  std::string name() const override { return "popularity"; }
  bool concurrent_query_safe() const override { return true; }

  void fit(const TrainRequest& request) override {
    if (request.train_events.empty()) throw EmptyTraining("popularity baseline needs training events");
    ranking_ = popularity_order(request.train_events);
  }

  RankedList recommend(const UserId& user, std::span<const ItemId> history,
                       int k) const override {
    RankedList out{user, {}};
    const std::unordered_set<ItemId> seen =
        exclude_seen_ ? std::unordered_set<ItemId>(history.begin(), history.end())
                      : std::unordered_set<ItemId>{};
    for (const auto& item : ranking_) {
      if (out.items.size() >= static_cast<std::size_t>(k)) break;
      if (!seen.contains(item)) out.items.push_back(item);
    }
    return out;
  }

  const std::vector<ItemId>& ranking() const { return ranking_; }

 private:
  bool exclude_seen_;
  std::vector<ItemId> ranking_;
};

// Uniform sample of training items, seeded per (seed, user).
class RandomRecommender final : public Recommender {
 public:
  explicit RandomRecommender(std::uint64_t seed = 0) : base_seed_(seed), seed_(seed) {}

  std::string name() const override { return "random"; }
  bool concurrent_query_safe() const override { return true; }

  void fit(const TrainRequest& request) override {
    if (request.train_events.empty()) throw EmptyTraining("random baseline needs training events");
    std::set<ItemId> distinct;
    for (const auto& e : request.train_events) distinct.insert(e.item_id);
    items_.assign(distinct.begin(), distinct.end());
    seed_ = base_seed_;
    if (auto s = request.setting.get("seed")) seed_ = derive_seed(base_seed_, stable_hash(*s));
  }

  RankedList recommend(const UserId& user, std::span<const ItemId>, int k) const override {
    Rng rng(derive_seed(seed_, stable_hash(user)));
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(k));
    RankedList out{user, {}};
    out.items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.index(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.items.push_back(items_[idx[i]]);
    }
    return out;
  }

 private:
  std::uint64_t base_seed_;
  std::uint64_t seed_;
  std::vector<ItemId> items_;
};

// Item-kNN over symmetric co-occurrence counts within user histories. Each
// user contributes at most one count per item pair. Candidates score the sum
// of co-occurrence with the distinct history items; history items are never
// recommended and the list is topped up in popularity order.
class CooccurrenceRecommender final : public Recommender {
 public:
  // neighborhood = 0 keeps every co-occurring neighbour.
  explicit CooccurrenceRecommender(std::size_t neighborhood = 0) : default_neighborhood_(neighborhood) {}

  std::string name() const override { return "cooc"; }
  bool concurrent_query_safe() const override { return true; }

  void fit(const TrainRequest& request) override {
    if (request.train_events.empty()) throw EmptyTraining("co-occurrence baseline needs training events");
    std::size_t neighborhood = default_neighborhood_;
    if (auto v = request.setting.get("neighborhood")) {
      auto parsed = tsv::parse_int(*v);
      if (!parsed || *parsed < 0) throw InvalidParameter("neighborhood must be a non-negative integer");
      neighborhood = static_cast<std::size_t>(*parsed);
    }

    popularity_ = popularity_order(request.train_events);
    index_.clear();
    for (std::size_t i = 0; i < popularity_.size(); ++i) index_.emplace(popularity_[i], i);

    std::vector<std::unordered_map<std::uint32_t, std::uint32_t>> counts(popularity_.size());
    std::unordered_map<UserId, std::vector<std::uint32_t>> baskets;
    for (const auto& e : request.train_events) {
      baskets[e.user_id].push_back(static_cast<std::uint32_t>(index_.at(e.item_id)));
    }
    for (auto& [user, basket] : baskets) {
      std::sort(basket.begin(), basket.end());
      basket.erase(std::unique(basket.begin(), basket.end()), basket.end());
      for (std::size_t a = 0; a < basket.size(); ++a) {
        for (std::size_t b = a + 1; b < basket.size(); ++b) {
          ++counts[basket[a]][basket[b]];
          ++counts[basket[b]][basket[a]];
        }
      }
    }

    neighbors_.assign(popularity_.size(), {});
    for (std::size_t item = 0; item < counts.size(); ++item) {
      auto& list = neighbors_[item];
      list.assign(counts[item].begin(), counts[item].end());
      // Count descending, then popularity index (ties resolved by item id).
      std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) {
        return x.second != y.second ? x.second > y.second : x.first < y.first;
      });
      if (neighborhood > 0 && list.size() > neighborhood) list.resize(neighborhood);
    }
  }

  RankedList recommend(const UserId& user, std::span<const ItemId> history,
                       int k) const override {
    std::vector<std::uint32_t> hist;
    for (const auto& item : history) {
      if (auto it = index_.find(item); it != index_.end()) {
        hist.push_back(static_cast<std::uint32_t>(it->second));
      }
    }
    std::sort(hist.begin(), hist.end());
    hist.erase(std::unique(hist.begin(), hist.end()), hist.end());
    const std::unordered_set<ItemId> excluded(history.begin(), history.end());

    std::unordered_map<std::uint32_t, double> scores;
    for (std::uint32_t h : hist) {
      for (const auto& [cand, count] : neighbors_[h]) scores[cand] += count;
    }
    std::vector<std::pair<double, std::uint32_t>> ranked;
    ranked.reserve(scores.size());
    for (const auto& [cand, score] : scores) {
      if (!excluded.contains(popularity_[cand])) ranked.emplace_back(score, cand);
    }
    const auto by_score_then_id = [this](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first
                                : popularity_[x.second] < popularity_[y.second];
    };
    const std::size_t want = static_cast<std::size_t>(k);
    if (ranked.size() > want) {
      std::partial_sort(ranked.begin(), ranked.begin() + want, ranked.end(), by_score_then_id);
      ranked.resize(want);
    } else {
      std::sort(ranked.begin(), ranked.end(), by_score_then_id);
    }

    RankedList out{user, {}};
    std::unordered_set<std::uint32_t> chosen;
    for (const auto& [score, cand] : ranked) {
      out.items.push_back(popularity_[cand]);
      chosen.insert(cand);
    }
    for (std::uint32_t i = 0; i < popularity_.size() && out.items.size() < want; ++i) {
      if (!chosen.contains(i) && !excluded.contains(popularity_[i])) {
        out.items.push_back(popularity_[i]);
      }
    }
    return out;
  }

  std::uint32_t cooccurrence(const ItemId& a, const ItemId& b) const {
    auto ia = index_.find(a), ib = index_.find(b);
    if (ia == index_.end() || ib == index_.end()) return 0;
    for (const auto& [cand, count] : neighbors_[ia->second]) {
      if (cand == ib->second) return count;
    }
    return 0;
  }

 private:
  std::size_t default_neighborhood_;
  std::vector<ItemId> popularity_;
  std::unordered_map<ItemId, std::size_t> index_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> neighbors_;
};

inline std::unique_ptr<PopularityRecommender> baseline_popularity(
    std::span<const InteractionEvent> train_events, bool exclude_seen) {
  auto model = std::make_unique<PopularityRecommender>(exclude_seen);
  model->fit({train_events, {}});
  return model;
}

inline std::unique_ptr<CooccurrenceRecommender> baseline_cooccurrence(
    std::span<const InteractionEvent> train_events, std::size_t neighborhood) {
  auto model = std::make_unique<CooccurrenceRecommender>(neighborhood);
  model->fit({train_events, {}});
  return model;
}

// ---------------------------------------------------------------------------
// File exchange with external model processes
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPredictionsHeader = "user_id\trank\titem_id";
inline constexpr std::string_view kTestUsersHeader = "user_id";
inline constexpr std::string_view kValHeader = "user_id\titem_id";

inline void write_predictions(std::ostream& out, std::span<const RankedList> lists) {
  out << kPredictionsHeader << '\n';
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      out << list.user_id << '\t' << (r + 1) << '\t' << list.items[r] << '\n';
    }
  }
}

// Parses predictions.tsv and checks it answers exactly the requested users
// with ranks 1..n (n <= k) and no repeated items.
inline std::vector<RankedList> read_predictions(std::istream& in, const std::string& name,
                                                std::span<const UserId> requested, int k) {
  std::unordered_map<UserId, std::map<std::int64_t, ItemId>> rows;
  const std::unordered_set<UserId> wanted(requested.begin(), requested.end());
  try {
    tsv::read_rows(in, name, kPredictionsHeader, [&](const auto& f, std::size_t ln) {
      const std::string user(f[0]);
      if (!wanted.contains(user)) {
        throw MalformedRow(name, ln, "user '" + user + "' was not requested");
      }
      auto rank = tsv::parse_int(f[1]);
      if (!rank || *rank < 1 || *rank > k) {
        throw MalformedRow(name, ln, "rank must be an integer in 1.." + std::to_string(k));
      }
      if (f[2].empty()) throw MalformedRow(name, ln, "empty item_id");
      if (!rows[user].emplace(*rank, std::string(f[2])).second) {
        throw MalformedRow(name, ln, "repeated rank for user '" + user + "'");
      }
    });
  } catch (const MalformedRow& e) {
    throw MalformedPredictions(e.what());
  }
  std::vector<RankedList> out;
  out.reserve(requested.size());
  for (const auto& user : requested) {
    auto it = rows.find(user);
    if (it == rows.end()) {
      throw MalformedPredictions(name + ": no predictions for requested user '" + user + "'");
    }
    RankedList list{user, {}};
    std::int64_t expected = 1;
    std::unordered_set<ItemId> seen;
    for (auto& [rank, item] : it->second) {
      if (rank != expected++) {
        throw MalformedPredictions(name + ": ranks for user '" + user + "' are not 1..n");
      }
      if (!seen.insert(item).second) {
        throw MalformedPredictions(name + ": duplicate item '" + item + "' for user '" + user + "'");
      }
      list.items.push_back(std::move(item));
    }
    out.push_back(std::move(list));
  }
  return out;
}

struct ExternalCommand {
  std::vector<std::string> argv;  // program followed by fixed arguments
  std::chrono::milliseconds timeout{std::chrono::hours(1)};

  // Whitespace-separated; no shell quoting.
  static ExternalCommand parse(const std::string& command,
                               std::chrono::milliseconds timeout = std::chrono::hours(1)) {
    ExternalCommand cmd;
    std::istringstream in(command);
    for (std::string word; in >> word;) cmd.argv.push_back(word);
    if (cmd.argv.empty()) throw InvalidParameter("empty external model command");
    cmd.timeout = timeout;
    return cmd;
  }
};

namespace detail {

inline std::string read_tail(const std::filesystem::path& path, std::size_t max_bytes = 2000) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() > max_bytes) data = "..." + data.substr(data.size() - max_bytes);
  return data;
}

// Runs argv with stdout/stderr captured under dir; returns the raw wait status
// or throws Timeout after killing the process group.
inline int spawn_and_wait(const std::vector<std::string>& argv, const std::filesystem::path& dir,
                          std::chrono::milliseconds timeout) {
  const std::string out_log = (dir / "stdout.log").string();
  const std::string err_log = (dir / "stderr.log").string();
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, out_log.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, err_log.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], &actions, &attr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) {
    throw ExternalModelFailure("cannot start '" + argv[0] + "': " + std::strerror(rc));
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  auto pause = std::chrono::milliseconds(1);
  int status = 0;
  while (true) {
    const pid_t done = waitpid(pid, &status, WNOHANG);
    if (done == pid) return status;
    if (done < 0 && errno != EINTR) {
      throw ExternalModelFailure(std::string("waitpid failed: ") + std::strerror(errno));
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw Timeout("external model exceeded " + std::to_string(timeout.count()) +
                    " ms; stderr: " + read_tail(err_log));
    }
    std::this_thread::sleep_for(pause);
    pause = std::min(pause * 2, std::chrono::milliseconds(50));
  }
}

}  // namespace detail

// Invokes the model with request_dir as its final argument and parses the
// predictions it leaves behind for the users in test_users.tsv.
inline std::vector<RankedList> run_external(const ExternalCommand& command,
                                            const std::filesystem::path& request_dir) {
  for (const char* required : {"train.tsv", "test_users.tsv", "request.json"}) {
    if (!std::filesystem::exists(request_dir / required)) {
      throw InvalidParameter("request directory lacks " + std::string(required));
    }
  }
  nlohmann::json request;
  {
    auto in = tsv::open_input(request_dir / "request.json");
    request = nlohmann::json::parse(in);
  }
  const int k = request.at("k").get<int>();
  std::vector<UserId> users;
  {
    auto in = tsv::open_input(request_dir / "test_users.tsv");
    tsv::read_rows(in, "test_users.tsv", kTestUsersHeader,
                   [&](const auto& f, std::size_t) { users.emplace_back(f[0]); });
  }

  auto argv = command.argv;
  argv.push_back(request_dir.string());
  const int status = detail::spawn_and_wait(argv, request_dir, command.timeout);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const std::string how = WIFEXITED(status)
                                ? "exit status " + std::to_string(WEXITSTATUS(status))
                                : "signal " + std::to_string(WTERMSIG(status));
    throw ExternalModelFailure("external model failed with " + how + "; stderr: " +
                               detail::read_tail(request_dir / "stderr.log"));
  }
  const auto pred_path = request_dir / "predictions.tsv";
  if (!std::filesystem::exists(pred_path)) {
    throw MalformedPredictions("external model exited 0 but wrote no predictions.tsv");
  }
  auto in = tsv::open_input(pred_path);
  return read_predictions(in, "predictions.tsv", users, k);
}

// Writes train.tsv, test_users.tsv, val.tsv and request.json.
inline void write_request_dir(const std::filesystem::path& dir,
                              std::span<const InteractionEvent> train_events,
                              std::span<const UserId> users, const TrainRequest& request) {
  std::filesystem::create_directories(dir);
  {
    auto out = tsv::open_output(dir / "train.tsv");
    write_events(out, train_events);
  }
  {
    auto out = tsv::open_output(dir / "test_users.tsv");
    out << kTestUsersHeader << '\n';
    for (const auto& u : users) out << u << '\n';
  }
  nlohmann::json manifest = {{"k", request.k},
                             {"run_id", request.run_id},
                             {"seed", request.seed},
                             {"phase", "fit_predict"},
                             {"budget_remaining", request.budget_remaining},
                             {"setting", request.setting.values()}};
  if (request.val_truth != nullptr) {
    auto out = tsv::open_output(dir / "val.tsv");
    out << kValHeader << '\n';
    for (const auto& [user, items] : *request.val_truth) {
      for (const auto& item : items) out << user << '\t' << item << '\n';
    }
    manifest["val_path"] = "val.tsv";
  }
  auto out = tsv::open_output(dir / "request.json");
  out << manifest.dump(2) << '\n';
}

// Binds a model living in another process. fit() only records the request;
// each batch of queries is one fit_predict exchange. Queries whose history
// differs from the user's training history are expressed by rewriting that
// user's events in train.tsv (same timestamps and playcounts when the length
// matches).
class ExternalRecommender final : public Recommender {
 public:
  ExternalRecommender(ExternalCommand command, std::filesystem::path work_dir,
                      bool keep_exchanges = false)
      : command_(std::move(command)),
        work_dir_(std::move(work_dir)),
        keep_(keep_exchanges) {}

  std::string name() const override { return "external:" + command_.argv.front(); }

  void fit(const TrainRequest& request) override {
    request_ = request;
    train_.assign(request.train_events.begin(), request.train_events.end());
    request_.train_events = train_;
    if (request.val_truth != nullptr) {
      val_truth_ = *request.val_truth;
      request_.val_truth = &val_truth_;
    }
  }

  RankedList recommend(const UserId& user, std::span<const ItemId> history,
                       int k) const override {
    const Query q{user, {history.begin(), history.end()}};
    return recommend_batch(std::span(&q, 1), k).front();
  }

  std::vector<RankedList> recommend_batch(std::span<const Query> queries, int k) const override {
    std::lock_guard lock(mutex_);
    std::map<UserId, const Query*> overrides;
    std::map<UserId, std::vector<const InteractionEvent*>> by_user;
    for (const auto& e : train_) by_user[e.user_id].push_back(&e);
    for (const auto& q : queries) {
      const auto& events = by_user[q.user_id];
      bool same = events.size() == q.history.size();
      for (std::size_t i = 0; same && i < events.size(); ++i) {
        same = events[i]->item_id == q.history[i];
      }
      if (!same) overrides[q.user_id] = &q;
    }
    std::vector<InteractionEvent> events;
    events.reserve(train_.size());
    for (const auto& e : train_) {
      if (!overrides.contains(e.user_id)) events.push_back(e);
    }
    for (const auto& [user, q] : overrides) {
      const auto& original = by_user[user];
      for (std::size_t i = 0; i < q->history.size(); ++i) {
        if (original.size() == q->history.size()) {
          events.push_back({user, q->history[i], original[i]->timestamp, original[i]->playcount});
        } else {
          events.push_back({user, q->history[i], static_cast<std::int64_t>(i), 1});
        }
      }
    }
    std::sort(events.begin(), events.end(), canonical_less);

    std::vector<UserId> users;
    users.reserve(queries.size());
    for (const auto& q : queries) users.push_back(q.user_id);

    TrainRequest req = request_;
    req.k = k;
    const auto dir = work_dir_ / ("exchange_" + std::to_string(exchange_count_++));
    write_request_dir(dir, events, users, req);
    auto lists = run_external(command_, dir);
    if (!keep_) std::filesystem::remove_all(dir);
    return lists;
  }

  std::size_t exchange_count() const { return exchange_count_; }

 private:
  ExternalCommand command_;
  std::filesystem::path work_dir_;
  bool keep_;
  TrainRequest request_;
  std::vector<InteractionEvent> train_;
  TruthMap val_truth_;
  mutable std::mutex mutex_;
  mutable std::size_t exchange_count_ = 0;
};

}  // namespace recheck

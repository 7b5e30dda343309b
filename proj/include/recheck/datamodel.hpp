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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "recheck/digest.hpp"
#include "recheck/errors.hpp"
#include "recheck/random.hpp"

namespace recheck {

using UserId = std::string;
using ItemId = std::string;

// One aggregated listening record.
struct InteractionEvent {
  UserId user_id;
  ItemId item_id;
  std::int64_t timestamp = 0;
  std::int64_t playcount = 1;

  friend bool operator==(const InteractionEvent&,
                         const InteractionEvent&) = default;
};

struct ItemRecord {
  ItemId item_id;
  std::string artist_id;
  std::string album_id;  // empty when absent
  std::string track_name;

  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

struct UserRecord {
  UserId user_id;
  std::string country;  // empty when absent
  std::optional<int> age;
  std::string gender;  // empty when absent
  std::int64_t total_playcount = 0;

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

inline bool canonical_less(const InteractionEvent& a,
                           const InteractionEvent& b) {
  return std::tie(a.user_id, a.timestamp, a.item_id, a.playcount) <
         std::tie(b.user_id, b.timestamp, b.item_id, b.playcount);
}

// Immutable container of events plus item and user catalogs.
//
// Construction validates every invariant and puts the data in canonical
// order: events by (user_id, timestamp, item_id), catalogs by id. All seeded
// randomness downstream indexes into this order, so two files holding the
// same records in different row order evaluate identically.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<InteractionEvent> events, std::vector<ItemRecord> items,
          std::vector<UserRecord> users)
      : events_(std::move(events)),
        items_(std::move(items)),
        users_(std::move(users)) {
    std::sort(items_.begin(), items_.end(),
              [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
    std::sort(users_.begin(), users_.end(),
              [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (items_[i].item_id.empty()) throw InvalidParameter("empty item_id");
      if (items_[i].artist_id.empty()) {
        throw InvalidParameter("item '" + items_[i].item_id +
                               "' has an empty artist_id");
      }
      if (!item_index_.emplace(items_[i].item_id, i).second) {
        throw DuplicateId("duplicate item_id '" + items_[i].item_id + "'");
      }
    }
    for (std::size_t i = 0; i < users_.size(); ++i) {
      if (users_[i].user_id.empty()) throw InvalidParameter("empty user_id");
      if (users_[i].total_playcount < 0) {
        throw InvalidParameter("user '" + users_[i].user_id +
                               "' has a negative total_playcount");
      }
      if (!user_index_.emplace(users_[i].user_id, i).second) {
        throw DuplicateId("duplicate user_id '" + users_[i].user_id + "'");
      }
    }
    for (const auto& e : events_) {
      if (e.playcount < 1) throw InvalidParameter("event playcount must be >= 1");
      if (e.timestamp < 0) throw InvalidParameter("event timestamp must be >= 0");
      if (!user_index_.contains(e.user_id)) {
        throw DanglingReference(e.user_id, "user_id");
      }
      if (!item_index_.contains(e.item_id)) {
        throw DanglingReference(e.item_id, "item_id");
      }
    }
    std::sort(events_.begin(), events_.end(), canonical_less);
    for (std::size_t i = 0; i < events_.size();) {
      std::size_t j = i;
      while (j < events_.size() && events_[j].user_id == events_[i].user_id) ++j;
      user_ranges_.emplace(events_[i].user_id, std::make_pair(i, j));
      i = j;
    }
  }

  std::span<const InteractionEvent> events() const { return events_; }
  std::span<const ItemRecord> items() const { return items_; }
  std::span<const UserRecord> users() const { return users_; }

  const ItemRecord* find_item(std::string_view id) const {
    auto it = item_index_.find(std::string(id));
    return it == item_index_.end() ? nullptr : &items_[it->second];
  }
  const UserRecord* find_user(std::string_view id) const {
    auto it = user_index_.find(std::string(id));
    return it == user_index_.end() ? nullptr : &users_[it->second];
  }

  // Events of one user, in timestamp order.
  std::span<const InteractionEvent> user_events(const UserId& user) const {
    auto it = user_ranges_.find(user);
    if (it == user_ranges_.end()) return {};
    return std::span(events_).subspan(it->second.first,
                                      it->second.second - it->second.first);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.events_ == b.events_ && a.items_ == b.items_ &&
           a.users_ == b.users_;
  }

 private:
  std::vector<InteractionEvent> events_;
  std::vector<ItemRecord> items_;
  std::vector<UserRecord> users_;
  std::unordered_map<std::string, std::size_t> item_index_;
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>>
      user_ranges_;
};

// ---------------------------------------------------------------------------
// TSV format
// ---------------------------------------------------------------------------

namespace tsv {

inline constexpr std::string_view kEventsHeader =
    "user_id\titem_id\ttimestamp\tplaycount";
inline constexpr std::string_view kItemsHeader =
    "item_id\tartist_id\talbum_id\ttrack_name";
inline constexpr std::string_view kUsersHeader =
    "user_id\tcountry\tage\tgender\ttotal_playcount";

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

inline void check_field(std::string_view field) {
  if (field.find_first_of("\t\r\n") != std::string_view::npos) {
    throw InvalidParameter("field contains a tab or newline: '" +
                           std::string(field) + "'");
  }
}

// Reads a header-checked TSV stream, invoking row(fields, line_no) for every
// data line. Lines are numbered from 1 with the header on line 1.
template <typename RowFn>
void read_rows(std::istream& in, const std::string& name,
               std::string_view header, RowFn&& row) {
  std::string line;
  if (!std::getline(in, line)) throw MalformedRow(name, 1, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw MalformedRow(name, 1,
                       "unexpected header, want '" + std::string(header) + "'");
  }
  const std::size_t n_columns = split(header).size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split(line);
    if (fields.size() != n_columns) {
      throw MalformedRow(name, line_no,
                         "expected " + std::to_string(n_columns) +
                             " columns, found " + std::to_string(fields.size()));
    }
    row(fields, line_no);
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace tsv

inline std::vector<InteractionEvent> read_events(std::istream& in,
                                                 const std::string& name) {
  std::vector<InteractionEvent> events;
  tsv::read_rows(in, name, tsv::kEventsHeader, [&](const auto& f, std::size_t ln) {
    if (f[0].empty() || f[1].empty()) {
      throw MalformedRow(name, ln, "empty user_id or item_id");
    }
    auto ts = tsv::parse_int(f[2]);
    if (!ts || *ts < 0) throw MalformedRow(name, ln, "timestamp must be a non-negative integer");
    std::int64_t playcount = 1;
    if (!f[3].empty()) {
      auto pc = tsv::parse_int(f[3]);
      if (!pc || *pc < 1) throw MalformedRow(name, ln, "playcount must be a positive integer");
      playcount = *pc;
    }
    events.push_back({std::string(f[0]), std::string(f[1]), *ts, playcount});
  });
  return events;
}

inline std::vector<ItemRecord> read_items(std::istream& in,
                                          const std::string& name) {
  std::vector<ItemRecord> items;
  tsv::read_rows(in, name, tsv::kItemsHeader, [&](const auto& f, std::size_t ln) {
    if (f[0].empty()) throw MalformedRow(name, ln, "empty item_id");
    if (f[1].empty()) throw MalformedRow(name, ln, "empty artist_id");
    items.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]),
                     std::string(f[3])});
  });
  return items;
}

inline std::vector<UserRecord> read_users(std::istream& in,
                                          const std::string& name) {
  std::vector<UserRecord> users;
  tsv::read_rows(in, name, tsv::kUsersHeader, [&](const auto& f, std::size_t ln) {
    if (f[0].empty()) throw MalformedRow(name, ln, "empty user_id");
    UserRecord u{std::string(f[0]), std::string(f[1]), std::nullopt,
                 std::string(f[3]), 0};
    if (!f[2].empty()) {
      auto age = tsv::parse_int(f[2]);
      if (!age || *age < 0 || *age > 1000) throw MalformedRow(name, ln, "age must be an integer");
      u.age = static_cast<int>(*age);
    }
    auto total = tsv::parse_int(f[4]);
    if (!total || *total < 0) {
      throw MalformedRow(name, ln, "total_playcount must be a non-negative integer");
    }
    u.total_playcount = *total;
    users.push_back(std::move(u));
  });
  return users;
}

inline void write_events(std::ostream& out,
                         std::span<const InteractionEvent> events) {
  out << tsv::kEventsHeader << '\n';
  for (const auto& e : events) {
    tsv::check_field(e.user_id);
    tsv::check_field(e.item_id);
    out << e.user_id << '\t' << e.item_id << '\t' << e.timestamp << '\t'
        << e.playcount << '\n';
  }
}

inline void write_items(std::ostream& out, std::span<const ItemRecord> items) {
  out << tsv::kItemsHeader << '\n';
  for (const auto& i : items) {
    for (const auto& f : {i.item_id, i.artist_id, i.album_id, i.track_name}) {
      tsv::check_field(f);
    }
    out << i.item_id << '\t' << i.artist_id << '\t' << i.album_id << '\t'
        << i.track_name << '\n';
  }
}

inline void write_users(std::ostream& out, std::span<const UserRecord> users) {
  out << tsv::kUsersHeader << '\n';
  for (const auto& u : users) {
    for (const auto& f : {u.user_id, u.country, u.gender}) tsv::check_field(f);
    out << u.user_id << '\t' << u.country << '\t';
    if (u.age) out << *u.age;
    out << '\t' << u.gender << '\t' << u.total_playcount << '\n';
  }
}

// Loads and validates the three catalog files. Dangling references and
// duplicate ids are rejected by the Dataset constructor.
inline Dataset load_dataset(const std::filesystem::path& events_path,
                            const std::filesystem::path& items_path,
                            const std::filesystem::path& users_path) {
  auto items_in = tsv::open_input(items_path);
  auto items = read_items(items_in, items_path.string());
  auto users_in = tsv::open_input(users_path);
  auto users = read_users(users_in, users_path.string());
  auto events_in = tsv::open_input(events_path);
  auto events = read_events(events_in, events_path.string());
  return Dataset(std::move(events), std::move(items), std::move(users));
}

inline void save_dataset(const Dataset& dataset,
                         const std::filesystem::path& events_path,
                         const std::filesystem::path& items_path,
                         const std::filesystem::path& users_path) {
  auto ev = tsv::open_output(events_path);
  write_events(ev, dataset.events());
  auto it = tsv::open_output(items_path);
  write_items(it, dataset.items());
  auto us = tsv::open_output(users_path);
  write_users(us, dataset.users());
  if (!ev || !it || !us) throw IoError("failed writing dataset files");
}

// SHA-256 over the canonical TSV rendering of all three tables.
inline std::string dataset_digest(const Dataset& dataset) {
  std::ostringstream out;
  write_events(out, dataset.events());
  write_items(out, dataset.items());
  write_users(out, dataset.users());
  return sha256_hex(out.str());
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

// Samples ranks 0..n-1 with P(rank r) proportional to (r + 1)^-exponent.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      total += std::pow(static_cast<double>(r + 1), -exponent);
      cdf_[r] = total;
    }
  }

  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1);
  }

  // Normalised probability of rank r.
  double probability(std::size_t r) const {
    const double lo = r == 0 ? 0.0 : cdf_[r - 1];
    return (cdf_[r] - lo) / cdf_.back();
  }

 private:
  std::vector<double> cdf_;
};

struct SyntheticParams {
  std::int64_t n_users = 100;
  std::int64_t n_items = 50;
  std::int64_t n_events = 5000;
  double zipf_exponent = 1.0;
  std::int64_t n_artists = 10;
  std::vector<std::string> countries = {"UK", "JP", "US", "DE", "BR"};
  std::uint64_t seed = 0;
  // Skew of per-user activity over a seeded permutation of users. Unset means
  // the item exponent is reused; 0 gives uniform activity.
  std::optional<double> user_exponent;
};

namespace detail {
inline std::string padded_id(char prefix, std::int64_t i, std::int64_t n) {
  const std::size_t width = std::to_string(std::max<std::int64_t>(n - 1, 0)).size();
  std::string digits = std::to_string(i);
  return prefix + std::string(width - digits.size(), '0') + digits;
}
}  // namespace detail

// Item ranks coincide with id order: item i0..0 is the most popular.
inline Dataset generate_synthetic(const SyntheticParams& p) {
  if (p.n_users <= 0 || p.n_items <= 0 || p.n_events <= 0 || p.n_artists <= 0) {
    throw InvalidParameter("sizes must be positive");
  }
  if (!(p.zipf_exponent > 0.0) || !std::isfinite(p.zipf_exponent)) {
    throw InvalidParameter("zipf_exponent must be positive");
  }
  const double user_exponent = p.user_exponent.value_or(p.zipf_exponent);
  if (!(user_exponent >= 0.0) || !std::isfinite(user_exponent)) {
    throw InvalidParameter("user_exponent must be non-negative");
  }
  if (p.n_artists > p.n_items) throw InvalidParameter("n_artists must be <= n_items");
  if (p.countries.empty()) throw InvalidParameter("countries must be non-empty");

  Rng rng(p.seed);
  std::vector<ItemRecord> items;
  items.reserve(p.n_items);
  for (std::int64_t i = 0; i < p.n_items; ++i) {
    const auto artist = static_cast<std::int64_t>(rng.index(p.n_artists));
    const auto album = rng.index(3);
    std::string artist_id = detail::padded_id('a', artist, p.n_artists);
    items.push_back({detail::padded_id('i', i, p.n_items), artist_id,
                     artist_id + "-l" + std::to_string(album),
                     "track " + std::to_string(i)});
  }

  static constexpr std::string_view kGenders[] = {"f", "m", "n"};
  std::vector<UserRecord> users;
  users.reserve(p.n_users);
  for (std::int64_t u = 0; u < p.n_users; ++u) {
    UserRecord rec;
    rec.user_id = detail::padded_id('u', u, p.n_users);
    rec.country = p.countries[rng.index(p.countries.size())];
    rec.age = 15 + static_cast<int>(rng.index(50));
    rec.gender = std::string(kGenders[rng.index(3)]);
    users.push_back(std::move(rec));
  }

  std::vector<std::size_t> activity_order(p.n_users);
  for (std::size_t u = 0; u < activity_order.size(); ++u) activity_order[u] = u;
  rng.shuffle(std::span(activity_order));

  const ZipfSampler item_sampler(p.n_items, p.zipf_exponent);
  const ZipfSampler user_sampler(p.n_users, user_exponent);
  std::vector<std::int64_t> clock(p.n_users);
  for (auto& c : clock) c = 1'500'000'000 + static_cast<std::int64_t>(rng.index(86'400));

  std::vector<InteractionEvent> events;
  events.reserve(p.n_events);
  for (std::int64_t e = 0; e < p.n_events; ++e) {
    const std::size_t u = activity_order[user_sampler(rng)];
    const std::size_t item = item_sampler(rng);
    clock[u] += 1 + static_cast<std::int64_t>(rng.index(3600));
    const auto playcount = 1 + static_cast<std::int64_t>(rng.index(3));
    users[u].total_playcount += playcount;
    events.push_back({users[u].user_id, items[item].item_id, clock[u], playcount});
  }
  return Dataset(std::move(events), std::move(items), std::move(users));
}

}  // namespace recheck

#include "smile/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "io_util.hpp"
#include "smile/rng.hpp"

namespace smile {

RatingsFormat parse_ratings_format(const std::string& name) {
  if (name == "tab_100k") return RatingsFormat::tab_100k;
  if (name == "doublecolon_1m") return RatingsFormat::doublecolon_1m;
  if (name == "ciao_csv") return RatingsFormat::ciao_csv;
  throw std::invalid_argument("unknown ratings format: " + name);
}

std::string ratings_format_name(RatingsFormat fmt) {
  switch (fmt) {
    case RatingsFormat::tab_100k: return "tab_100k";
    case RatingsFormat::doublecolon_1m: return "doublecolon_1m";
    case RatingsFormat::ciao_csv: return "ciao_csv";
  }
  return "?";
}

RatingsTable RatingsTable::from_interactions(UserId num_users,
                                             ItemId num_items,
                                             std::vector<Interaction> rows) {
  RatingsTable t(num_users, num_items);
  t.rows_.reserve(rows.size());
  for (const auto& r : rows) t.append(r);
  t.snapshot();
  return t;
}

void RatingsTable::append(const Interaction& row) {
  if (row.user >= num_users_ || row.item >= num_items_)
    throw std::out_of_range("interaction id outside table dimensions");
  RowId id = rows_.size();
  rows_.push_back(row);
  by_user_[row.user].push_back(id);
  by_item_[row.item].push_back(id);
  ++keys_[key(row.user, row.item)];
}

void RatingsTable::rollback() {
  // Appends only push to the tail of the per-user/per-item lists, so popping
  // in reverse row order restores the exact pre-snapshot index state.
  while (rows_.size() > mark_) {
    const Interaction& row = rows_.back();
    by_user_[row.user].pop_back();
    by_item_[row.item].pop_back();
    auto it = keys_.find(key(row.user, row.item));
    if (--it->second == 0) keys_.erase(it);
    rows_.pop_back();
  }
}

double RatingsTable::density() const {
  if (num_users_ == 0 || num_items_ == 0) return 0.0;
  return double(rows_.size()) / (double(num_users_) * double(num_items_));
}

void RatingsTable::save(const std::string& path) const {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILETB1");
  io::write_pod<uint64_t>(f, num_users_);
  io::write_pod<uint64_t>(f, num_items_);
  io::write_pod<uint64_t>(f, meta.seed);
  io::write_pod<double>(f, meta.fraction_a);
  io::write_pod<double>(f, meta.fraction_b);
  io::write_vec(f, rows_);
  if (!f) throw std::runtime_error("write failed: " + path);
}

RatingsTable RatingsTable::load(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILETB1", "ratings table cache");
  auto nu = io::read_pod<uint64_t>(f);
  auto ni = io::read_pod<uint64_t>(f);
  Meta meta;
  meta.seed = io::read_pod<uint64_t>(f);
  meta.fraction_a = io::read_pod<double>(f);
  meta.fraction_b = io::read_pod<double>(f);
  auto rows = io::read_vec<Interaction>(f);
  auto t = from_interactions(UserId(nu), ItemId(ni), std::move(rows));
  t.meta = meta;
  return t;
}

namespace {

struct RawTriple {
  int64_t user;
  int64_t item;
  double rating;
  int64_t timestamp;
};

bool parse_number(std::string_view s, int64_t& out) {
  auto [p, ec] = std::from_chars(s.begin(), s.end(), out);
  return ec == std::errc() && p == s.end();
}

bool parse_number(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.begin(), s.end(), out);
  return ec == std::errc() && p == s.end();
}

// Splits on the format's separators; empty fields are dropped.
std::vector<std::string_view> split_fields(std::string_view line,
                                           RatingsFormat fmt) {
  std::vector<std::string_view> out;
  auto push = [&](size_t b, size_t e) {
    if (e > b) out.push_back(line.substr(b, e - b));
  };
  if (fmt == RatingsFormat::doublecolon_1m) {
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t next = line.find("::", pos);
      if (next == std::string_view::npos) {
        push(pos, line.size());
        break;
      }
      push(pos, next);
      pos = next + 2;
    }
    return out;
  }
  const char* seps = fmt == RatingsFormat::tab_100k ? "\t" : ", \t";
  size_t b = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || std::string_view(seps).find(line[i]) !=
                                std::string_view::npos) {
      push(b, i);
      b = i + 1;
    }
  }
  return out;
}

bool parse_line(std::string_view line, RatingsFormat fmt, RawTriple& out) {
  auto fields = split_fields(line, fmt);
  size_t need = fmt == RatingsFormat::ciao_csv ? 3 : 4;
  if (fields.size() < need) return false;
  if (!parse_number(fields[0], out.user)) return false;
  if (!parse_number(fields[1], out.item)) return false;
  if (!parse_number(fields[2], out.rating)) return false;
  out.timestamp = 0;
  if (fields.size() >= 4) {
    if (!parse_number(fields[3], out.timestamp)) return false;
  }
  if (out.user < 0 || out.item < 0) return false;
  if (out.rating < 1.0 || out.rating > 5.0) return false;
  return true;
}

}  // namespace

RatingsTable load_ratings(const std::string& path, RatingsFormat fmt,
                          LoadReport* report) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read ratings file: " + path);

  LoadReport rep;
  std::vector<RawTriple> raw;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rep.lines;
    RawTriple t;
    if (parse_line(line, fmt, t))
      raw.push_back(t);
    else
      ++rep.malformed;
  }
  if (rep.lines > 0 && double(rep.malformed) > 0.001 * double(rep.lines))
    throw std::runtime_error("format mismatch: " +
                             std::to_string(rep.malformed) + " of " +
                             std::to_string(rep.lines) + " lines malformed");
  if (raw.empty()) throw std::runtime_error("empty result: " + path);

  // Dense ids in order of first appearance.
  std::unordered_map<int64_t, UserId> user_ids;
  std::unordered_map<int64_t, ItemId> item_ids;
  for (const auto& t : raw) {
    user_ids.emplace(t.user, UserId(user_ids.size()));
    item_ids.emplace(t.item, ItemId(item_ids.size()));
  }

  // Last occurrence wins on duplicate (user,item) pairs.
  std::unordered_map<uint64_t, size_t> last;
  std::vector<Interaction> rows;
  rows.reserve(raw.size());
  for (const auto& t : raw) {
    Interaction r{user_ids.at(t.user), item_ids.at(t.item), t.rating,
                  t.timestamp};
    uint64_t k = (uint64_t(r.user) << 32) | r.item;
    auto it = last.find(k);
    if (it == last.end()) {
      last.emplace(k, rows.size());
      rows.push_back(r);
    } else {
      rows[it->second] = r;
      ++rep.duplicates;
    }
  }

  if (report) *report = rep;
  return RatingsTable::from_interactions(UserId(user_ids.size()),
                                         ItemId(item_ids.size()),
                                         std::move(rows));
}

RatingsTable k_core_filter(const RatingsTable& table, size_t min_user,
                           size_t min_item) {
  if (min_user < 1 || min_item < 1)
    throw std::invalid_argument("k-core thresholds must be >= 1");

  std::vector<Interaction> rows = table.rows();
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<size_t> ucount(table.num_users(), 0);
    std::vector<size_t> icount(table.num_items(), 0);
    for (const auto& r : rows) {
      ++ucount[r.user];
      ++icount[r.item];
    }
    std::vector<Interaction> kept;
    kept.reserve(rows.size());
    for (const auto& r : rows) {
      if (ucount[r.user] >= min_user && icount[r.item] >= min_item)
        kept.push_back(r);
      else
        changed = true;
    }
    rows.swap(kept);
  }
  if (rows.empty())
    throw std::runtime_error("k-core filter removed every interaction");

  std::unordered_map<UserId, UserId> umap;
  std::unordered_map<ItemId, ItemId> imap;
  for (auto& r : rows) {
    auto u = umap.emplace(r.user, UserId(umap.size())).first->second;
    auto i = imap.emplace(r.item, ItemId(imap.size())).first->second;
    r.user = u;
    r.item = i;
  }
  return RatingsTable::from_interactions(UserId(umap.size()),
                                         ItemId(imap.size()),
                                         std::move(rows));
}

std::pair<RatingsTable, RatingsTable> split_train_test(
    const RatingsTable& table, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in (0,1)");

  std::vector<uint8_t> to_test(table.size(), 0);
  for (UserId u = 0; u < table.num_users(); ++u) {
    const auto& ids = table.rows_of_user(u);
    size_t m = ids.size();
    if (m < 2) continue;  // single-interaction users stay in train
    size_t k = size_t(std::floor(test_fraction * double(m)));
    if (k == 0) continue;
    Rng rng(derive_seed(seed, /*stream=*/0x5b111u, u));
    auto picks = rng.sample_without_replacement(m, k);
    for (auto p : picks) to_test[ids[p]] = 1;
  }

  std::vector<Interaction> train, test;
  const auto& rows = table.rows();
  for (size_t i = 0; i < rows.size(); ++i)
    (to_test[i] ? test : train).push_back(rows[i]);

  auto tr = RatingsTable::from_interactions(table.num_users(),
                                            table.num_items(),
                                            std::move(train));
  auto te = RatingsTable::from_interactions(table.num_users(),
                                            table.num_items(),
                                            std::move(test));
  tr.meta = {seed, test_fraction, 0.0};
  te.meta = {seed, test_fraction, 0.0};
  return {std::move(tr), std::move(te)};
}

bool PromotedSet::contains(ItemId i) const {
  return std::binary_search(item_ids.begin(), item_ids.end(), i);
}

std::pair<PromotedSet, RatingsTable> build_promoted_set(
    const RatingsTable& table, double top_fraction, double retained_fraction,
    uint64_t seed) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0) ||
      !(retained_fraction > 0.0 && retained_fraction <= 1.0))
    throw std::invalid_argument("fractions must be in (0,1]");

  size_t n_promoted =
      size_t(std::ceil(top_fraction * double(table.num_items())));
  std::vector<ItemId> order(table.num_items());
  for (ItemId i = 0; i < table.num_items(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](ItemId a, ItemId b) {
    size_t ca = table.rows_of_item(a).size();
    size_t cb = table.rows_of_item(b).size();
    if (ca != cb) return ca > cb;
    return a < b;
  });
  order.resize(std::min(n_promoted, order.size()));
  std::sort(order.begin(), order.end());

  PromotedSet ps;
  ps.item_ids = order;
  ps.retained_fraction = retained_fraction;

  // Per promoted item, keep a uniform random subset of llround(f*m) rows.
  std::vector<uint8_t> drop(table.size(), 0);
  for (ItemId p : ps.item_ids) {
    const auto& ids = table.rows_of_item(p);
    size_t m = ids.size();
    if (m == 0) continue;
    size_t keep = size_t(std::llround(retained_fraction * double(m)));
    if (keep >= m) continue;
    Rng rng(derive_seed(seed, /*stream=*/0x9307ed, p));
    auto kept = rng.sample_without_replacement(m, keep);
    std::vector<uint8_t> keep_mask(m, 0);
    for (auto k : kept) keep_mask[k] = 1;
    for (size_t j = 0; j < m; ++j)
      if (!keep_mask[j]) drop[ids[j]] = 1;
  }

  std::vector<Interaction> rows;
  rows.reserve(table.size());
  for (size_t i = 0; i < table.size(); ++i)
    if (!drop[i]) rows.push_back(table.rows()[i]);

  auto out = RatingsTable::from_interactions(table.num_users(),
                                             table.num_items(),
                                             std::move(rows));
  out.meta = {seed, top_fraction, retained_fraction};
  return {std::move(ps), std::move(out)};
}

void save_promoted(const PromotedSet& ps, const std::string& path) {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILEPS1");
  io::write_pod<double>(f, ps.retained_fraction);
  io::write_vec(f, ps.item_ids);
  if (!f) throw std::runtime_error("write failed: " + path);
}

PromotedSet load_promoted(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILEPS1", "promoted set");
  PromotedSet ps;
  ps.retained_fraction = io::read_pod<double>(f);
  ps.item_ids = io::read_vec<ItemId>(f);
  return ps;
}

}  // namespace smile

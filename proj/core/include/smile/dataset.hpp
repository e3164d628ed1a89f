#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace smile {

using UserId = uint32_t;
using ItemId = uint32_t;
using RowId = size_t;

/// One rating event with densified ids.
struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;
  int64_t timestamp = 0;  // 0 when the source format carries none

  bool operator==(const Interaction&) const = default;
};

enum class RatingsFormat {
  tab_100k,        // user \t item \t rating \t timestamp
  doublecolon_1m,  // user::item::rating::timestamp
  ciao_csv,        // user,item,rating  (comma or whitespace separated)
};

RatingsFormat parse_ratings_format(const std::string& name);
std::string ratings_format_name(RatingsFormat fmt);

struct LoadReport {
  size_t lines = 0;
  size_t malformed = 0;
  size_t duplicates = 0;  // (user,item) pairs collapsed, last kept
};

/// Append-only interaction log with per-user / per-item row indices and a
/// single snapshot mark. Appends after snapshot() can be undone exactly with
/// rollback(); that pair is what lets the simulation rewind to its pristine
/// dataset between episodes.
class RatingsTable {
 public:
  RatingsTable() = default;
  RatingsTable(UserId num_users, ItemId num_items)
      : num_users_(num_users),
        num_items_(num_items),
        by_user_(num_users),
        by_item_(num_items) {}

  static RatingsTable from_interactions(UserId num_users, ItemId num_items,
                                        std::vector<Interaction> rows);

  void append(const Interaction& row);
  bool has(UserId user, ItemId item) const {
    auto it = keys_.find(key(user, item));
    return it != keys_.end() && it->second > 0;
  }

  void snapshot() { mark_ = rows_.size(); }
  size_t snapshot_mark() const { return mark_; }
  /// Removes every row appended since the last snapshot().
  void rollback();

  const std::vector<Interaction>& rows() const { return rows_; }
  const std::vector<RowId>& rows_of_user(UserId u) const { return by_user_[u]; }
  const std::vector<RowId>& rows_of_item(ItemId i) const { return by_item_[i]; }

  UserId num_users() const { return num_users_; }
  ItemId num_items() const { return num_items_; }
  size_t size() const { return rows_.size(); }
  double density() const;

  /// Cache header carried through save()/load() for reproducibility.
  struct Meta {
    uint64_t seed = 0;
    double fraction_a = 0.0;  // meaning depends on the producing step
    double fraction_b = 0.0;
  };
  Meta meta;

  void save(const std::string& path) const;
  static RatingsTable load(const std::string& path);

  bool same_rows(const RatingsTable& o) const { return rows_ == o.rows_; }

 private:
  static uint64_t key(UserId u, ItemId i) {
    return (uint64_t(u) << 32) | uint64_t(i);
  }

  UserId num_users_ = 0;
  ItemId num_items_ = 0;
  std::vector<Interaction> rows_;
  std::vector<std::vector<RowId>> by_user_;
  std::vector<std::vector<RowId>> by_item_;
  std::unordered_map<uint64_t, uint32_t> keys_;  // (user,item) -> row count
  size_t mark_ = 0;
};

/// Parses a raw rating log, densifies ids in order of first appearance, and
/// collapses duplicate (user,item) pairs keeping the last occurrence.
/// Throws if the file is unreadable, produces no rows, or more than 0.1% of
/// nonempty lines fail to parse.
RatingsTable load_ratings(const std::string& path, RatingsFormat fmt,
                          LoadReport* report = nullptr);

/// Iterated degree filter: removes users with fewer than min_user ratings
/// and items with fewer than min_item until both bounds hold, then
/// re-densifies ids. Throws if nothing survives.
RatingsTable k_core_filter(const RatingsTable& table, size_t min_user,
                           size_t min_item);

/// Per-user stratified split: each user contributes floor(test_fraction * m)
/// of their m rows to the test side and always keeps at least one training
/// row. Ids and matrix dimensions are preserved on both sides.
std::pair<RatingsTable, RatingsTable> split_train_test(
    const RatingsTable& table, double test_fraction, uint64_t seed);

/// The free-trial target items the campaign wants surfaced.
struct PromotedSet {
  std::vector<ItemId> item_ids;  // ascending
  double retained_fraction = 1.0;

  bool contains(ItemId i) const;
};

/// Picks the ceil(top_fraction * num_items) most-rated items as the promoted
/// set and returns a copy of the table where each promoted item keeps a
/// uniformly random retained_fraction of its interactions. Interactions of
/// all other items are untouched.
std::pair<PromotedSet, RatingsTable> build_promoted_set(
    const RatingsTable& table, double top_fraction, double retained_fraction,
    uint64_t seed);

void save_promoted(const PromotedSet& ps, const std::string& path);
PromotedSet load_promoted(const std::string& path);

}  // namespace smile

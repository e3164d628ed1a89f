#pragma once

// Shared helpers for the test binaries: small hand-built tables and a
// process-wide cached MovieLens-100K-scale synthetic dataset for the tests
// that need realistic volume.

#include <string>
#include <vector>

#include "smile/dataset.hpp"
#include "smile/synth.hpp"

namespace smile::testing {

inline RatingsTable small_table(
    UserId num_users, ItemId num_items,
    const std::vector<std::tuple<UserId, ItemId, double>>& triples) {
  std::vector<Interaction> rows;
  for (auto [u, i, r] : triples) rows.push_back({u, i, r, 0});
  return RatingsTable::from_interactions(num_users, num_items,
                                         std::move(rows));
}

/// 943 x 1682 x 100000 synthetic log with ML-100K-like shape; built once.
inline const RatingsTable& ml100k_scale() {
  static const RatingsTable table = [] {
    SynthConfig cfg;  // defaults are the 100K shape
    return generate_synthetic_ratings(cfg, 20260808);
  }();
  return table;
}

/// A mid-size dataset for tests that train models but do not need the full
/// 100K volume.
inline const RatingsTable& midsize() {
  static const RatingsTable table = [] {
    SynthConfig cfg;
    cfg.num_users = 180;
    cfg.num_items = 240;
    cfg.num_ratings = 9000;
    cfg.min_per_user = 12;
    return generate_synthetic_ratings(cfg, 555);
  }();
  return table;
}

}  // namespace smile::testing

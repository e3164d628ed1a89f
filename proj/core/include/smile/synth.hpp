#pragma once

#include <cstdint>
#include <string>

#include "smile/dataset.hpp"

namespace smile {

struct SynthConfig {
  size_t num_users = 943;
  size_t num_items = 1682;
  size_t num_ratings = 100000;
  size_t latent_rank = 8;
  double noise = 0.5;
  size_t min_per_user = 20;
};

/// Seeded generator of a MovieLens-shaped rating log: power-law item
/// popularity, low-rank user/item preference structure, integer ratings in
/// [1,5], every user with at least min_per_user ratings and the total count
/// hit exactly. Popular items trend slightly higher-rated, which is what
/// makes a popularity-promoted set plausible trial merchandise.
RatingsTable generate_synthetic_ratings(const SynthConfig& cfg, uint64_t seed);

/// Writes a table to disk in the tab-separated format
/// (user \t item \t rating \t timestamp), so the normal loader can ingest it.
void write_ratings_file(const RatingsTable& table, const std::string& path);

}  // namespace smile

#include "smile/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

#include "smile/matrix.hpp"
#include "smile/rng.hpp"

namespace smile {

namespace {

// Gaussian via Box-Muller on the portable uniform stream.
double normal(Rng& rng) {
  double u1 = rng.next_double();
  double u2 = rng.next_double();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

RatingsTable generate_synthetic_ratings(const SynthConfig& cfg,
                                        uint64_t seed) {
  if (cfg.num_users * cfg.min_per_user > cfg.num_ratings)
    throw std::invalid_argument("num_ratings too small for min_per_user");
  if (cfg.num_ratings > cfg.num_users * cfg.num_items)
    throw std::invalid_argument("num_ratings exceeds the matrix size");
  if (cfg.min_per_user < 5 ||
      cfg.num_users * (cfg.min_per_user - 4) < cfg.num_items)
    throw std::invalid_argument(
        "min_per_user too small to give every item a rating");

  Rng rng(derive_seed(seed, 0x51e77));

  // Users and items sit in shared taste communities with power-law sizes,
  // the way genre audiences do; the community mix is what separates useful
  // trial adopters from interchangeable ones downstream.
  const size_t communities = 10;
  double scale = 1.0 / std::sqrt(double(cfg.latent_rank));
  Matrix centers(communities, cfg.latent_rank);
  for (auto& x : centers.data) x = normal(rng) * scale;
  // Equal-strength communities: rating levels must not encode membership,
  // only direction does.
  for (size_t k = 0; k < communities; ++k) {
    double norm = std::sqrt(dot(centers.row(k), centers.row(k),
                                cfg.latent_rank));
    for (size_t d = 0; d < cfg.latent_rank; ++d) centers.at(k, d) /= norm;
  }
  std::vector<double> community_weight(communities);
  for (size_t k = 0; k < communities; ++k)
    community_weight[k] = 1.0 / std::pow(double(k) + 1.0, 1.1);
  double wsum = 0.0;
  for (double w : community_weight) wsum += w;
  for (double& w : community_weight) w /= wsum;

  auto draw_community = [&](Rng& r) {
    double x = r.next_double();
    for (size_t k = 0; k < communities; ++k) {
      if (x < community_weight[k]) return k;
      x -= community_weight[k];
    }
    return communities - 1;
  };

  Matrix user_lat(cfg.num_users, cfg.latent_rank);
  Matrix item_lat(cfg.num_items, cfg.latent_rank);
  std::vector<size_t> item_community(cfg.num_items);
  for (size_t u = 0; u < cfg.num_users; ++u) {
    size_t k = draw_community(rng);
    for (size_t d = 0; d < cfg.latent_rank; ++d)
      user_lat.at(u, d) = centers.at(k, d) + 0.3 * scale * normal(rng);
  }
  for (size_t i = 0; i < cfg.num_items; ++i) {
    size_t k = draw_community(rng);
    item_community[i] = k;
    for (size_t d = 0; d < cfg.latent_rank; ++d)
      item_lat.at(i, d) = centers.at(k, d) + 0.45 * scale * normal(rng);
  }

  // Power-law popularity with the chart head owned by mainstream
  // communities, the way genre blockbusters crowd real popularity ranks.
  std::vector<std::pair<double, uint32_t>> pop_key(cfg.num_items);
  for (size_t i = 0; i < cfg.num_items; ++i) {
    double bonus = item_community[i] == 2 ? 2.6 : 0.0;
    pop_key[i] = {bonus + 0.8 * normal(rng), uint32_t(i)};
  }
  std::sort(pop_key.begin(), pop_key.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<double> popularity(cfg.num_items);
  for (size_t r = 0; r < cfg.num_items; ++r)
    popularity[pop_key[r].second] = 1.0 / std::pow(double(r) + 8.0, 0.9);

  // Personal rating scale: generous and grumpy raters exist independently
  // of taste, and dominate naive mean-rating statistics.
  std::vector<double> user_bias(cfg.num_users);
  for (auto& b : user_bias) b = 0.25 * normal(rng);

  // Activity per user: min_per_user base plus a heavy tail, scaled by
  // largest remainder so the totals match exactly.
  std::vector<double> activity(cfg.num_users);
  for (auto& a : activity) a = std::pow(rng.next_double(), 2.5);
  double act_total = 0.0;
  for (double a : activity) act_total += a;
  size_t budget = cfg.num_ratings - cfg.num_users * cfg.min_per_user;
  std::vector<size_t> count(cfg.num_users, cfg.min_per_user);
  std::vector<std::pair<double, size_t>> remainders(cfg.num_users);
  size_t assigned = 0;
  for (size_t u = 0; u < cfg.num_users; ++u) {
    double share = double(budget) * activity[u] / act_total;
    size_t whole = size_t(std::floor(share));
    size_t cap = cfg.num_items - cfg.min_per_user;
    whole = std::min(whole, cap);
    count[u] += whole;
    assigned += whole;
    remainders[u] = {share - double(whole), u};
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  size_t leftover = budget - assigned;
  for (size_t i = 0; leftover > 0; i = (i + 1) % cfg.num_users) {
    size_t u = remainders[i].second;
    if (count[u] < cfg.num_items) {
      ++count[u];
      --leftover;
    }
  }

  // Chart-head items please broadly while niche items live or die by taste
  // fit; headness interpolates the two rating regimes.
  double lp_min = std::log(popularity[pop_key.back().second]);
  double lp_max = std::log(popularity[pop_key.front().second]);
  auto headness = [&](uint32_t item) {
    return (std::log(popularity[item]) - lp_min) / (lp_max - lp_min);
  };

  // Every item needs at least one rating or it would vanish from the dense
  // id space; spread one forced pick per item over random users first.
  std::vector<std::vector<uint32_t>> forced(cfg.num_users);
  {
    Rng frng(derive_seed(seed, 0xf0ced));
    for (size_t i = 0; i < cfg.num_items; ++i) {
      size_t u = frng.index(cfg.num_users);
      while (forced[u].size() + 4 > cfg.min_per_user)
        u = (u + 1) % cfg.num_users;
      forced[u].push_back(uint32_t(i));
    }
  }

  // Remaining picks per user are popularity+affinity weighted without
  // replacement, via Gumbel top-k.
  std::vector<Interaction> rows;
  rows.reserve(cfg.num_ratings);
  std::vector<std::pair<double, uint32_t>> keys(cfg.num_items);
  int64_t ts = 874720000;  // arbitrary fixed epoch base
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (size_t u = 0; u < cfg.num_users; ++u) {
    Rng urng(derive_seed(seed, 0x91a2, u));
    for (size_t i = 0; i < cfg.num_items; ++i) {
      double gumbel = -std::log(-std::log(
          std::max(urng.next_double(), 1e-300)));
      double affinity =
          dot(user_lat.row(u), item_lat.row(i), cfg.latent_rank);
      keys[i] = {1.5 * std::log(popularity[i]) + 3.3 * affinity + gumbel,
                 uint32_t(i)};
    }
    std::vector<uint32_t> picked = forced[u];
    for (uint32_t i : picked) keys[i].first = neg_inf;
    size_t m = count[u] - std::min(count[u], picked.size());
    std::partial_sort(keys.begin(), keys.begin() + std::ptrdiff_t(m),
                      keys.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    for (size_t j = 0; j < m; ++j) picked.push_back(keys[j].second);

    for (uint32_t item : picked) {
      double z = dot(user_lat.row(u), item_lat.row(item), cfg.latent_rank);
      double h = headness(item);
      double y = 3.55 + 0.9 * z * (1.0 - h) + 1.1 * h + user_bias[u] +
                 cfg.noise * normal(urng);
      long r = std::lround(y);
      r = std::clamp(r, 1l, 5l);
      rows.push_back({UserId(u), ItemId(item), double(r), ts++});
    }
  }

  return RatingsTable::from_interactions(UserId(cfg.num_users),
                                         ItemId(cfg.num_items),
                                         std::move(rows));
}

void write_ratings_file(const RatingsTable& table, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write ratings file: " + path);
  for (const auto& r : table.rows())
    std::fprintf(f, "%u\t%u\t%g\t%lld\n", r.user, r.item, r.rating,
                 (long long)r.timestamp);
  std::fclose(f);
}

}  // namespace smile

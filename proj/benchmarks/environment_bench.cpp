// Cost of one simulation step: reward evaluation and the trial-plus-refresh
// path, at the 100K dataset scale.

#include <benchmark/benchmark.h>

#include <memory>

#include "smile/environment.hpp"
#include "smile/factorization.hpp"
#include "smile/synth.hpp"

namespace {

using namespace smile;

struct EnvFixture {
  RatingsTable lowexp;
  PromotedSet promoted;
  EmbeddingMatrix mf;
  BprModel bpr;
  std::unique_ptr<EnvState> env;

  EnvFixture() {
    SynthConfig sc;
    sc.num_users = 943;
    sc.num_items = 1682;
    sc.num_ratings = 100000;
    auto table = generate_synthetic_ratings(sc, 77);
    auto [ps, low] = build_promoted_set(table, 0.01, 0.05, 77);
    promoted = ps;
    lowexp = low;
    mf = train_mf(lowexp, MfConfig{.dim = 32, .epochs = 3, .lr = 0.005,
                                   .reg = 0.02}, 77);
    bpr = train_bpr(lowexp, BprConfig{.dim = 32, .epochs = 2, .lr = 0.01,
                                      .reg = 0.01}, 77);
    env = std::make_unique<EnvState>(lowexp, bpr, promoted, mf, EnvConfig{});
  }

  static EnvFixture& instance() {
    static EnvFixture f;
    return f;
  }
};

void RewardEvaluation(benchmark::State& state) {
  auto& f = EnvFixture::instance();
  f.env->reset_episode(1);
  for (auto _ : state) {
    double r = f.env->compute_reward();
    benchmark::DoNotOptimize(r);
  }
}

void TrialWithRefresh(benchmark::State& state) {
  auto& f = EnvFixture::instance();
  f.env->reset_episode(1);
  UserId u = 0;
  for (auto _ : state) {
    if (u >= f.lowexp.num_users()) {
      state.PauseTiming();
      f.env->reset_episode(1);
      u = 0;
      state.ResumeTiming();
    }
    auto res = f.env->apply_trial(u++, f.mf);
    benchmark::DoNotOptimize(res.appended);
  }
}

void CandidateRebuild(benchmark::State& state) {
  auto& f = EnvFixture::instance();
  uint64_t seed = 0;
  for (auto _ : state) {
    f.env->build_candidates(seed++);
    benchmark::DoNotOptimize(f.env->candidates().per_user.size());
  }
}

}  // namespace

BENCHMARK(RewardEvaluation)->Unit(benchmark::kMillisecond);
BENCHMARK(TrialWithRefresh)->Unit(benchmark::kMicrosecond);
BENCHMARK(CandidateRebuild)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

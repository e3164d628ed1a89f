#include "smile/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

#include "smile/action_tree.hpp"
#include "smile/agent.hpp"
#include "smile/dataset.hpp"
#include "smile/environment.hpp"
#include "smile/factorization.hpp"
#include "smile/harness.hpp"
#include "smile/state_tracker.hpp"
#include "smile/synth.hpp"

namespace smile {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& rel) {
  return (fs::path(dir) / rel).string();
}

void ensure_parent(const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

void write_json(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

void snapshot_config(const Config& cfg, const std::string& dir) {
  write_text(join(dir, "config.resolved.cfg"), cfg.dump());
}

RatingsTable load_table(const std::string& dir, const char* rel) {
  auto path = join(dir, rel);
  if (!fs::exists(path))
    throw std::runtime_error("missing artifact " + path +
                             " (run the earlier stages first)");
  return RatingsTable::load(path);
}

struct EnvParts {
  RatingsTable lowexp;
  PromotedSet promoted;
  EmbeddingMatrix mf;
  BprModel bpr;
  EnvConfig env_cfg;
};

EnvParts load_env_parts(const Config& cfg, const std::string& dir,
                        bool refreshed_ranker = false) {
  EnvParts parts;
  parts.lowexp = load_table(dir, paths::lowexp_table);
  parts.promoted = load_promoted(join(dir, paths::promoted));
  parts.mf = load_embeddings(join(dir, paths::mf_model));
  parts.bpr = load_bpr(
      join(dir, refreshed_ranker ? paths::bpr_refreshed : paths::bpr_model));
  parts.env_cfg.k = cfg.get_uint("env.k");
  parts.env_cfg.candidate_fraction = cfg.get_double("env.candidate_fraction");
  parts.env_cfg.finetune_steps = cfg.get_uint("env.finetune_steps");
  parts.env_cfg.finetune_lr = cfg.get_double("env.finetune_lr");
  parts.env_cfg.finetune_reg = cfg.get_double("env.finetune_reg");
  return parts;
}

TrainConfig make_train_config(const Config& cfg, size_t num_users) {
  TrainConfig tc;
  tc.episode_len = resolve_episode_len(cfg, num_users);
  tc.gamma = cfg.get_double("agent.gamma");
  tc.eta = cfg.get_double("agent.eta");
  tc.episodes = cfg.get_uint("agent.episodes");
  tc.filter_threshold = cfg.get_double("agent.filter_threshold");
  tc.filter_mode = parse_filter_mode(cfg.get_string("agent.filter_mode"));
  tc.max_retries = cfg.get_uint("agent.max_retries");
  tc.mean_baseline = cfg.get_bool("agent.mean_baseline");
  tc.reward_buckets = cfg.get_uint("state.reward_buckets");
  tc.reward_max = cfg.get_double("state.reward_max");
  tc.seed = cfg.get_uint("run.seed");
  return tc;
}

// Fixed-format CSV fields so identical runs serialize identically.
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

size_t resolve_episode_len(const Config& cfg, size_t num_users) {
  auto explicit_len = cfg.get_uint("agent.episode_len");
  if (explicit_len > 0) return explicit_len;
  double frac = cfg.get_double("agent.adopter_fraction");
  return size_t(std::ceil(frac * double(num_users)));
}

void run_prepare(const Config& cfg, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "data");
  snapshot_config(cfg, dir);
  uint64_t seed = cfg.get_uint("run.seed");

  RatingsTable original;
  LoadReport load_report;
  bool synthetic = cfg.get_string("dataset.synthetic", "false") == "true";
  if (synthetic) {
    SynthConfig sc;
    sc.num_users = cfg.get_uint("dataset.synth_users");
    sc.num_items = cfg.get_uint("dataset.synth_items");
    sc.num_ratings = cfg.get_uint("dataset.synth_ratings");
    original = generate_synthetic_ratings(sc, derive_seed(seed, 0xda7a));
  } else {
    original = load_ratings(cfg.get_string("dataset.path"),
                            parse_ratings_format(
                                cfg.get_string("dataset.format")),
                            &load_report);
  }

  size_t kcore_user = cfg.get_uint("dataset.kcore_user");
  size_t kcore_item = cfg.get_uint("dataset.kcore_item");
  if (kcore_user > 1 || kcore_item > 1)
    original = k_core_filter(original, kcore_user, kcore_item);

  auto [train, test] =
      split_train_test(original, cfg.get_double("dataset.test_fraction"),
                       derive_seed(seed, 0x59117));
  auto [promoted, lowexp] =
      build_promoted_set(train, cfg.get_double("promotion.top_fraction"),
                         cfg.get_double("promotion.retained_fraction"),
                         derive_seed(seed, 0x9200));

  original.save(join(dir, paths::original_table));
  train.save(join(dir, paths::train_table));
  test.save(join(dir, paths::test_table));
  lowexp.save(join(dir, paths::lowexp_table));
  save_promoted(promoted, join(dir, paths::promoted));

  json report = {
      {"num_users", original.num_users()},
      {"num_items", original.num_items()},
      {"num_ratings", original.size()},
      {"density", original.density()},
      {"train_rows", train.size()},
      {"test_rows", test.size()},
      {"lowexp_rows", lowexp.size()},
      {"promoted_items", promoted.item_ids.size()},
      {"malformed_lines", load_report.malformed},
      {"duplicate_pairs", load_report.duplicates},
      {"synthetic", synthetic},
  };
  write_json(join(dir, "prepare_report.json"), report);
  std::cerr << "prepare: " << original.num_users() << " users, "
            << original.num_items() << " items, " << original.size()
            << " ratings (density " << original.density() * 100.0 << "%), |Ip|="
            << promoted.item_ids.size() << "\n";
}

void run_train_mf(const Config& cfg, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "models");
  snapshot_config(cfg, dir);
  auto train = load_table(dir, paths::train_table);

  MfConfig mc;
  mc.dim = cfg.get_uint("mf.dim");
  mc.epochs = cfg.get_uint("mf.epochs");
  mc.lr = cfg.get_double("mf.lr");
  mc.reg = cfg.get_double("mf.reg");

  std::vector<double> rmse;
  auto emb = train_mf(train, mc, derive_seed(cfg.get_uint("run.seed"), 0x3f),
                      &rmse);
  save_embeddings(emb, join(dir, paths::mf_model));

  std::string csv = "epoch,train_rmse\n";
  for (size_t e = 0; e < rmse.size(); ++e)
    csv += std::to_string(e + 1) + "," + fmt_double(rmse[e]) + "\n";
  write_text(join(dir, "mf_rmse.csv"), csv);
  std::cerr << "train-mf: final train RMSE "
            << (rmse.empty() ? 0.0 : rmse.back()) << "\n";
}

void run_train_bpr(const Config& cfg, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "models");
  snapshot_config(cfg, dir);
  auto lowexp = load_table(dir, paths::lowexp_table);

  BprConfig bc;
  bc.dim = cfg.get_uint("bpr.dim");
  bc.epochs = cfg.get_uint("bpr.epochs");
  bc.lr = cfg.get_double("bpr.lr");
  bc.reg = cfg.get_double("bpr.reg");

  std::vector<double> auc;
  auto model = train_bpr(lowexp, bc,
                         derive_seed(cfg.get_uint("run.seed"), 0xb9), &auc);
  save_bpr(model, join(dir, paths::bpr_model));

  std::string csv = "epoch,sampled_auc\n";
  for (size_t e = 0; e < auc.size(); ++e)
    csv += std::to_string(e + 1) + "," + fmt_double(auc[e]) + "\n";
  write_text(join(dir, "bpr_auc.csv"), csv);
  std::cerr << "train-bpr: final sampled AUC "
            << (auc.empty() ? 0.0 : auc.back()) << "\n";
}

void run_build_tree(const Config& cfg, const std::string& dir) {
  snapshot_config(cfg, dir);
  auto mf = load_embeddings(join(dir, paths::mf_model));
  size_t depth = cfg.get_uint("tree.depth");
  auto tree = ClusterTree::build(mf.U, depth,
                                 derive_seed(cfg.get_uint("run.seed"), 0x7e));
  tree.save(join(dir, paths::tree));
  std::cerr << "build-tree: depth " << depth << ", arity " << tree.arity()
            << ", " << tree.num_internal() << " internal nodes, height "
            << tree.height() << "\n";
}

void run_train_agent(const Config& cfg, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "logs");
  fs::create_directories(fs::path(dir) / "models");
  snapshot_config(cfg, dir);

  auto parts = load_env_parts(cfg, dir);
  auto tree = ClusterTree::load(join(dir, paths::tree));
  uint64_t seed = cfg.get_uint("run.seed");

  size_t state_dim = parts.mf.dim + cfg.get_uint("state.reward_buckets");
  auto sru = init_sru(state_dim, derive_seed(seed, 0x52d));
  auto activation = parse_activation(cfg.get_string("agent.activation"));
  auto policies = init_policies(tree, state_dim, activation,
                                derive_seed(seed, 0x901));

  EnvState env(parts.lowexp, parts.bpr, parts.promoted, parts.mf,
               parts.env_cfg);
  auto tc = make_train_config(cfg, tree.num_users());

  std::ofstream train_log(join(dir, paths::train_log), std::ios::trunc);
  std::ofstream env_log(join(dir, paths::env_log), std::ios::trunc);
  std::ofstream ep_log(join(dir, paths::episode_log), std::ios::trunc);
  train_log << "episode,step,adopter,reward,return,log_prob\n";
  env_log << "episode,step,adopter,reward,appended,skipped\n";
  ep_log << "episode,steps,avg_reward,max_reward,filter_rejections\n";

  StepLogger logger = [&](const StepRecord& r) {
    train_log << r.episode << "," << r.step << "," << r.adopter << ","
              << fmt_double(r.reward) << "," << fmt_double(r.ret) << ","
              << fmt_double(r.log_prob) << "\n";
    env_log << r.episode << "," << r.step << "," << r.adopter << ","
            << fmt_double(r.reward) << "," << r.appended << "," << r.skipped
            << "\n";
  };

  auto result = train(env, tree, policies, sru, parts.mf, parts.promoted, tc,
                      logger);
  for (const auto& s : result.episodes)
    ep_log << s.episode << "," << s.steps << "," << fmt_double(s.avg_reward)
           << "," << fmt_double(s.max_reward) << "," << s.filter_rejections
           << "\n";

  // The ranker as the last episode left it: the refreshed model RQ4 compares
  // against the pristine checkpoint.
  save_bpr(env.ranker(), join(dir, paths::bpr_refreshed));
  save_policies(policies, join(dir, paths::policies));
  save_sru(sru, join(dir, paths::sru_model));

  // Post-training evaluation episodes with frozen policies, under the same
  // per-episode environment seeds the baselines use.
  TrainConfig ec = tc;
  ec.episodes = cfg.get_uint("agent.eval_episodes");
  ec.greedy = cfg.get_bool("agent.eval_greedy");
  double eval_avg = 0.0, eval_max = 0.0;
  if (ec.episodes > 0) {
    auto eval_result = train(env, tree, policies, sru, parts.mf,
                             parts.promoted, ec, nullptr,
                             /*update_policies=*/false);
    double total = 0.0;
    size_t steps = 0;
    for (const auto& s : eval_result.episodes) {
      total += s.avg_reward * double(s.steps);
      steps += s.steps;
      eval_max = std::max(eval_max, s.max_reward);
    }
    eval_avg = steps == 0 ? 0.0 : total / double(steps);
  }

  double tail_avg = 0.0;
  size_t tail = std::min<size_t>(result.episodes.size(),
                                 std::max<size_t>(result.episodes.size() / 10,
                                                  1));
  for (size_t i = result.episodes.size() - tail; i < result.episodes.size();
       ++i)
    tail_avg += result.episodes[i].avg_reward;
  if (tail > 0) tail_avg /= double(tail);

  json metrics = {
      {"episodes", result.episodes.size()},
      {"episode_len", tc.episode_len},
      {"best_episode_avg_reward", result.best_avg_reward},
      {"max_reward", result.max_reward},
      {"tail_avg_reward", tail_avg},
      {"eval_avg_reward", eval_avg},
      {"eval_max_reward", eval_max},
      {"eval_episodes", ec.episodes},
      {"pristine_reward", env.pristine_reward()},
      {"activation", activation_name(activation)},
      {"seed", seed},
  };
  write_json(join(dir, "metrics.json"), metrics);
  std::cerr << "train-agent: " << result.episodes.size()
            << " episodes, tail avg reward " << tail_avg
            << ", eval avg reward " << eval_avg << ", max " << result.max_reward
            << "\n";
}

void run_baseline_cmd(const Config& cfg, const std::string& dir,
                      const std::string& kind_name) {
  snapshot_config(cfg, dir);
  auto parts = load_env_parts(cfg, dir);
  auto train_tbl = load_table(dir, paths::train_table);
  EnvState env(parts.lowexp, parts.bpr, parts.promoted, parts.mf,
               parts.env_cfg);

  size_t episodes = cfg.get_uint("baseline.episodes");
  size_t episode_len = resolve_episode_len(cfg, train_tbl.num_users());
  double threshold = cfg.get_double("agent.filter_threshold");
  auto mode = parse_filter_mode(cfg.get_string("agent.filter_mode"));
  uint64_t seed = cfg.get_uint("run.seed");

  std::vector<BaselineKind> kinds;
  if (kind_name == "all")
    kinds = all_baseline_kinds();
  else
    kinds.push_back(parse_baseline_kind(kind_name));

  json out = json::object();
  for (auto kind : kinds) {
    auto report = run_baseline(env, train_tbl, parts.mf, kind, episodes,
                               episode_len, seed, threshold, mode);
    out[baseline_kind_name(kind)] = {
        {"avg_reward", report.avg_reward},
        {"max_reward", report.max_reward},
        {"episodes", report.episodes},
        {"steps", report.steps},
    };
    std::cerr << "baseline " << baseline_kind_name(kind) << ": avg "
              << report.avg_reward << ", max " << report.max_reward << "\n";
  }
  write_json(join(dir, "baselines.json"), out);
}

void run_eval_cmd(const Config& cfg, const std::string& dir, bool after) {
  snapshot_config(cfg, dir);
  auto lowexp = load_table(dir, paths::lowexp_table);
  auto test = load_table(dir, paths::test_table);
  auto model = load_bpr(
      join(dir, after ? paths::bpr_refreshed : paths::bpr_model));

  auto [precision, recall] =
      eval_ranking(model, lowexp, test, cfg.get_uint("eval.k"),
                   cfg.get_double("eval.relevance_threshold"));
  json out = {
      {"precision_at_k", precision},
      {"recall_at_k", recall},
      {"k", cfg.get_uint("eval.k")},
      {"model", after ? "refreshed" : "pristine"},
  };
  write_json(join(dir, after ? "eval_after.json" : "eval_before.json"), out);
  std::cerr << "eval " << (after ? "--after" : "--before") << ": P@"
            << cfg.get_uint("eval.k") << " " << precision << ", R@"
            << cfg.get_uint("eval.k") << " " << recall << "\n";
}

void run_rq1(const Config& cfg, const std::string& dir) {
  snapshot_config(cfg, dir);
  auto parts = load_env_parts(cfg, dir);
  EnvState env(parts.lowexp, parts.bpr, parts.promoted, parts.mf,
               parts.env_cfg);

  std::vector<size_t> counts;
  for (auto c : cfg.get_int_list("rq1.counts")) counts.push_back(size_t(c));
  auto rows = rq1_sweep(env, parts.mf, counts, cfg.get_uint("run.seed"));

  std::string csv = "adopters,increased_exposure\n";
  for (const auto& r : rows)
    csv += std::to_string(r.adopters) + "," +
           fmt_double(r.increased_exposure) + "\n";
  write_text(join(dir, "rq1.csv"), csv);
  std::cerr << "rq1: " << rows.size() << " rows written\n";
}

void run_rq3(const Config& cfg, const std::string& dir) {
  snapshot_config(cfg, dir);
  auto parts = load_env_parts(cfg, dir);
  EnvState env(parts.lowexp, parts.bpr, parts.promoted, parts.mf,
               parts.env_cfg);

  size_t state_dim = parts.mf.dim + cfg.get_uint("state.reward_buckets");
  auto sru = init_sru(state_dim,
                      derive_seed(cfg.get_uint("run.seed"), 0x52d));
  auto tc = make_train_config(cfg, parts.lowexp.num_users());
  tc.episodes = cfg.get_uint("rq3.episodes");

  std::vector<size_t> depths;
  for (auto d : cfg.get_int_list("rq3.depths")) depths.push_back(size_t(d));
  auto rows = rq3_depth_sweep(parts.mf, depths, cfg.get_uint("rq3.trials"),
                              cfg.get_uint("run.seed"), &env, &sru, &tc);

  std::string csv = "depth,mean_sample_ns,avg_reward\n";
  for (const auto& r : rows)
    csv += std::to_string(r.depth) + "," + fmt_double(r.mean_sample_ns) +
           "," + fmt_double(r.avg_reward) + "\n";
  write_text(join(dir, "rq3.csv"), csv);
  std::cerr << "rq3: " << rows.size() << " depths measured\n";
}

void run_report(const Config& cfg, const std::string& dir) {
  (void)cfg;
  auto read_json_if = [&](const std::string& rel) -> json {
    auto p = join(dir, rel);
    if (!fs::exists(p)) return json();
    std::ifstream f(p);
    json j;
    f >> j;
    return j;
  };

  auto metrics = read_json_if("metrics.json");
  auto baselines = read_json_if("baselines.json");
  auto before = read_json_if("eval_before.json");
  auto evalafter = read_json_if("eval_after.json");
  auto prep = read_json_if("prepare_report.json");

  std::printf("== run report: %s ==\n", dir.c_str());
  if (!prep.is_null())
    std::printf("dataset: %llu users, %llu items, %llu ratings\n",
                (unsigned long long)prep.value("num_users", 0),
                (unsigned long long)prep.value("num_items", 0),
                (unsigned long long)prep.value("num_ratings", 0));

  std::printf("\n%-14s %12s %12s\n", "policy", "avg_reward", "max_reward");
  if (!baselines.is_null())
    for (auto& [name, v] : baselines.items())
      std::printf("%-14s %12.4f %12.4f\n", name.c_str(),
                  v.value("avg_reward", 0.0), v.value("max_reward", 0.0));
  if (!metrics.is_null())
    std::printf("%-14s %12.4f %12.4f\n", "smile",
                metrics.value("eval_avg_reward", 0.0),
                metrics.value("eval_max_reward", 0.0));

  std::printf("\nranking accuracy (precision@k / recall@k):\n");
  if (!before.is_null())
    std::printf("  pristine : %.4f / %.4f\n",
                before.value("precision_at_k", 0.0),
                before.value("recall_at_k", 0.0));
  if (!evalafter.is_null())
    std::printf("  refreshed: %.4f / %.4f\n",
                evalafter.value("precision_at_k", 0.0),
                evalafter.value("recall_at_k", 0.0));

  std::printf("\nreference results (original SMILE evaluation, for "
              "comparison only):\n");
  std::printf("%-10s %-12s %10s %10s\n", "dataset", "policy", "avg", "max");
  for (const auto& r : reference_selection_results())
    std::printf("%-10s %-12s %10.2f %10.0f\n", r.dataset, r.policy,
                r.avg_reward, r.max_reward);
  std::printf("\n%-10s %22s %22s\n", "dataset", "P@10 before->after",
              "R@10 before->after");
  for (const auto& r : reference_ranking_results())
    std::printf("%-10s %11.4f -> %.4f %11.4f -> %.4f\n", r.dataset,
                r.precision_before, r.precision_after, r.recall_before,
                r.recall_after);
}

}  // namespace smile

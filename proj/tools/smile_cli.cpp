// Command-line front end for the adopter-selection pipeline. Every
// subcommand reads one config file (defaults apply for missing keys) plus
// --set overrides, and operates inside a run directory.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smile/config.hpp"
#include "smile/pipeline.hpp"
#include "smile/synth.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "run";
  std::vector<std::string> overrides;
  int64_t seed = -1;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "config file (key = value)");
  sub->add_option("--out", args.out_dir, "run directory")
      ->capture_default_str();
  sub->add_option("--set", args.overrides,
                  "override a config entry, section.key=value");
  sub->add_option("--seed", args.seed, "override run.seed");
}

smile::Config resolve_config(const CommonArgs& args) {
  auto cfg = smile::Config::defaults();
  if (!args.config_path.empty())
    cfg.merge_from(smile::Config::from_file(args.config_path));
  cfg.apply_overrides(args.overrides);
  if (args.seed >= 0) cfg.set("run.seed", std::to_string(args.seed));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smile: free-trial adopter selection pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string baseline_kind = "all";
  bool eval_before = false, eval_after = false;

  // Synthetic data generation has its own small flag set.
  std::string synth_out = "synthetic.data";
  uint64_t synth_users = 943, synth_items = 1682, synth_ratings = 100000,
           synth_seed = 7;

  auto* prepare = app.add_subcommand("prepare",
                                     "load, filter, split and cache data");
  auto* train_mf = app.add_subcommand("train-mf", "pretrain the rating model");
  auto* train_bpr = app.add_subcommand("train-bpr", "train the ranker");
  auto* build_tree = app.add_subcommand("build-tree",
                                        "cluster users into the action tree");
  auto* train_agent = app.add_subcommand("train-agent",
                                         "run the selection training loop");
  auto* baseline = app.add_subcommand("baseline", "run static policies");
  baseline->add_option("--kind", baseline_kind,
                       "random|activity|inactivity|high_rating|low_rating|all")
      ->capture_default_str();
  auto* eval = app.add_subcommand("eval", "ranking accuracy on the test split");
  eval->add_flag("--before", eval_before, "evaluate the pristine ranker");
  eval->add_flag("--after", eval_after, "evaluate the refreshed ranker");
  auto* rq1 = app.add_subcommand("rq1", "exposure vs adopter count sweep");
  auto* rq3 = app.add_subcommand("rq3", "tree depth sweep");
  auto* report = app.add_subcommand("report", "print a run summary");
  auto* synth = app.add_subcommand("synth-data",
                                   "write a synthetic rating log");
  synth->add_option("--out", synth_out, "output file")->capture_default_str();
  synth->add_option("--users", synth_users, "user count")
      ->capture_default_str();
  synth->add_option("--items", synth_items, "item count")
      ->capture_default_str();
  synth->add_option("--ratings", synth_ratings, "rating count")
      ->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")
      ->capture_default_str();

  for (auto* sub : {prepare, train_mf, train_bpr, build_tree, train_agent,
                    baseline, eval, rq1, rq3, report})
    add_common(sub, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      smile::SynthConfig sc;
      sc.num_users = synth_users;
      sc.num_items = synth_items;
      sc.num_ratings = synth_ratings;
      auto table = smile::generate_synthetic_ratings(sc, synth_seed);
      smile::write_ratings_file(table, synth_out);
      std::fprintf(stderr, "synth-data: wrote %zu ratings to %s\n",
                   table.size(), synth_out.c_str());
      return 0;
    }

    if (!args.config_path.empty() &&
        !std::filesystem::exists(args.config_path)) {
      std::fprintf(stderr, "error: config file not found: %s\n",
                   args.config_path.c_str());
      return 2;
    }
    auto cfg = resolve_config(args);
    if (prepare->parsed()) smile::run_prepare(cfg, args.out_dir);
    if (train_mf->parsed()) smile::run_train_mf(cfg, args.out_dir);
    if (train_bpr->parsed()) smile::run_train_bpr(cfg, args.out_dir);
    if (build_tree->parsed()) smile::run_build_tree(cfg, args.out_dir);
    if (train_agent->parsed()) smile::run_train_agent(cfg, args.out_dir);
    if (baseline->parsed())
      smile::run_baseline_cmd(cfg, args.out_dir, baseline_kind);
    if (eval->parsed()) {
      if (eval_before == eval_after) {
        std::fprintf(stderr, "eval: pass exactly one of --before/--after\n");
        return 2;
      }
      smile::run_eval_cmd(cfg, args.out_dir, eval_after);
    }
    if (rq1->parsed()) smile::run_rq1(cfg, args.out_dir);
    if (rq3->parsed()) smile::run_rq3(cfg, args.out_dir);
    if (report->parsed()) smile::run_report(cfg, args.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

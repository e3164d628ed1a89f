#pragma once

#include <string>
#include <vector>

#include "smile/config.hpp"

namespace smile {

/// Fixed layout of a run directory. Every stage reads its inputs from and
/// writes its outputs into one directory, so later stages can be re-run
/// without repeating earlier ones.
namespace paths {
inline constexpr const char* original_table = "data/original.tbl";
inline constexpr const char* train_table = "data/train.tbl";
inline constexpr const char* test_table = "data/test.tbl";
inline constexpr const char* lowexp_table = "data/lowexp.tbl";
inline constexpr const char* promoted = "data/promoted.bin";
inline constexpr const char* mf_model = "models/mf.bin";
inline constexpr const char* bpr_model = "models/bpr.bin";
inline constexpr const char* bpr_refreshed = "models/bpr_refreshed.bin";
inline constexpr const char* sru_model = "models/sru.bin";
inline constexpr const char* policies = "models/policies.bin";
inline constexpr const char* tree = "tree.bin";
inline constexpr const char* train_log = "logs/train_log.csv";
inline constexpr const char* episode_log = "logs/episodes.csv";
inline constexpr const char* env_log = "logs/env_steps.csv";
}  // namespace paths

/// Stage entry points used by the command-line tool (and by the acceptance
/// suite, which drives the same code paths in-process). Each stage writes
/// the fully resolved config it ran under into `dir`.
void run_prepare(const Config& cfg, const std::string& dir);
void run_train_mf(const Config& cfg, const std::string& dir);
void run_train_bpr(const Config& cfg, const std::string& dir);
void run_build_tree(const Config& cfg, const std::string& dir);
void run_train_agent(const Config& cfg, const std::string& dir);
void run_baseline_cmd(const Config& cfg, const std::string& dir,
                      const std::string& kind);  // "all" or a single kind
void run_eval_cmd(const Config& cfg, const std::string& dir, bool after);
void run_rq1(const Config& cfg, const std::string& dir);
void run_rq3(const Config& cfg, const std::string& dir);
void run_report(const Config& cfg, const std::string& dir);

/// Episode length: explicit agent.episode_len, or
/// ceil(agent.adopter_fraction * num_users).
size_t resolve_episode_len(const Config& cfg, size_t num_users);

}  // namespace smile

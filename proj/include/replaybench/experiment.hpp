#pragma once

#include <optional>
#include <string>
#include <vector>

#include "replaybench/config.hpp"
#include "replaybench/metrics.hpp"
#include "replaybench/methods.hpp"

namespace rb {

// One (strategy, seed) row of the per-seed results table.
struct SeedResult {
    std::string strategy;
    std::uint64_t seed = 0;
    double success = 0.0;
    std::optional<double> ft;
    std::optional<double> forgetting;
};

// Trains every (strategy, seed) cell through the stream with per-bucket
// checkpoints, evaluates the success matrices, and writes per-seed plus
// aggregate CSVs under cfg.out_dir. Fully deterministic per seed; cells run
// in parallel (cfg.n_threads) without affecting results. With resume = true,
// finished buckets are loaded from their checkpoints instead of retrained.
void run_experiment(const ExperimentConfig& cfg, bool resume = false);

// Reads back a finished cell's success matrix (column 0 = untrained policy).
SuccessMatrix load_matrix(const std::string& out_dir, const std::string& strategy,
                          std::uint64_t seed);

// Loads the per-seed results table written by run_experiment.
std::vector<SeedResult> load_per_seed(const std::string& out_dir);

// Markdown + CSV tables from a results directory; picks up ratio_* subruns
// into a replay-ratio sweep table when present. Missing pieces produce a
// partial-report warning instead of an error.
void emit_report(const std::string& results_dir);

// Internal hook reused by tests: trains one cell (checkpoints + matrix.csv).
void run_cell(const ExperimentConfig& cfg, const std::vector<TaskSpec>& suite,
              const std::string& strategy, std::uint64_t seed, bool resume);

// Single-task reference rates for one seed (trains one policy per task).
std::vector<double> run_reference(const ExperimentConfig& cfg,
                                  const std::vector<TaskSpec>& suite, std::uint64_t seed);

}  // namespace rb

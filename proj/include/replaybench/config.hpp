#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "replaybench/env.hpp"
#include "replaybench/methods.hpp"

namespace rb {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat declarative experiment description; every training hyperparameter is a
// field so a config file pins a run completely.
struct ExperimentConfig {
    // suite
    int n_tasks = 5;
    int demos_per_task = 50;
    int horizon = 200;
    std::uint64_t suite_seed = 7;
    double step_size = 0.05;
    double noise_sigma = 0.01;
    double success_radius = 0.1;
    double sigma_start = 0.02;
    // stream and run
    std::string stream = "sequential";
    std::vector<std::string> strategies = {"finetune"};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string profile = "desk";
    int n_eval = 100;
    std::string out_dir = "results";
    bool compute_ref = true;
    int n_threads = 1;
    // training
    ReplayConfig train;

    bool operator==(const ExperimentConfig&) const = default;
};

// Profile presets: "paper" mirrors the published hyperparameter tables,
// "desk" is the reduced profile sized for a workstation CPU.
ExperimentConfig default_config(const std::string& profile);

ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);

void validate_config(const ExperimentConfig& cfg);

SuiteParams make_suite_params(const ExperimentConfig& cfg);

}  // namespace rb

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "replaybench/diffusion.hpp"
#include "replaybench/env.hpp"

namespace rb {

enum class Strategy { Finetune, Multitask, Oewc, Packnet, Dgr, Cril, Tdgr };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);
bool uses_generator(Strategy s);

struct NoPreviousModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CapacityExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shared hyperparameters for all strategies. Defaults follow the full-scale
// profile; the config module provides the desk profile.
struct ReplayConfig {
    double replay_ratio = 0.9;  // r in [0, 1)
    int epochs = 250;           // learner epochs per bucket
    int epochs_replay = 300;    // learner epochs for CRIL / t-DGR
    int batch_size = 32;
    double lr_policy = 1e-4;  // lambda_theta
    double lr_gen = 1e-4;     // lambda_gamma
    long gen_steps = 10000;   // generator steps per bucket
    long gen_warmup_steps = 50000;  // extra generator steps on the first bucket
    int diffusion_steps = 1000;     // T
    int embed_dim = 32;
    std::vector<int> policy_hidden = {512, 512, 512, 512};
    std::vector<int> denoiser_hidden = {256, 256, 256};
    std::vector<int> dynamics_hidden = {512, 512, 512, 512};
    double fisher_lambda = 100.0;  // oEWC penalty multiplier
    double prune_fraction = 0.75;  // PackNet
    int retrain_epochs = 125;      // PackNet
    bool dgr_unconditional = false;
    int n_max = 10;     // one-hot width
    int n_threads = 1;  // sampler threads

    bool operator==(const ReplayConfig&) const = default;
    void validate() const;
};

// Number of trajectories to generate: round(r * |D| / (1 - r)).
long replay_count(double r, long dataset_size);

struct OewcAux {
    NetGrads fisher;
    DenseNet anchor;
    bool has_anchor = false;
};

struct PacknetAux {
    // Per layer, per weight: 0 = free, k = owned by consolidation k.
    std::vector<std::vector<int>> mask;
    int consolidations = 0;

    long free_weights() const;
};

// Per-timestep generation counts from the most recent replay call.
struct GenerationStats {
    std::vector<long> per_timestep;
    long total = 0;

    void reset(int l_max);
};

struct StrategyState {
    Strategy kind = Strategy::Finetune;
    DenseNet policy;
    DenseNet generator;  // denoiser (t-DGR/DGR) or start-state generator (CRIL)
    DenseNet dynamics;   // CRIL
    bool has_generator = false;
    bool has_dynamics = false;
    OewcAux oewc;
    PacknetAux packnet;
    std::vector<int> seen_task_ids;  // sorted, unique
    int l_max = 0;
    int task_count = 0;  // t, buckets consumed
    GenerationStats gen_stats;
    std::vector<Trajectory> store;        // multitask only (reference ceiling)
    std::vector<Trajectory> last_replay;  // replay used for the latest bucket
};

StrategyState init_strategy(Strategy kind, const ReplayConfig& cfg, std::uint64_t seed);

DenoiserSpec denoiser_spec(const ReplayConfig& cfg, bool timestep_cond = true);

// --- replay generation (Algorithm 1 lines 5-14 and the two baselines) ---

// n trajectories of length l_max; slot j is generated with condition
// (j, sampled task one-hot) and labeled by the current (pre-update) policy.
std::vector<Trajectory> tdgr_generate_replay(StrategyState& state, long n,
                                             const ReplayConfig& cfg, Rng& rng,
                                             int exclude_task = -1);

// n_states singleton trajectories; the timestep condition of each sample is
// drawn uniformly at random (i.i.d.-state semantics).
std::vector<Trajectory> dgr_generate_replay(StrategyState& state, long n_states,
                                            const ReplayConfig& cfg, Rng& rng,
                                            int exclude_task = -1);

// n autoregressive trajectories: diffusion start state, then dynamics-model
// rollouts labeled by the policy.
std::vector<Trajectory> cril_generate_replay(StrategyState& state, long n,
                                             const ReplayConfig& cfg, Rng& rng,
                                             int exclude_task = -1);

// Autoregression core shared by CRIL and its tests.
using PolicyFn = std::function<Vec2(Vec2, int /*task_id*/)>;
using DynamicsFn = std::function<Vec2(Vec2, Vec2, int /*traj*/, int /*j*/)>;
std::vector<Trajectory> autoregress_trajectories(const std::vector<Vec2>& starts,
                                                 const std::vector<int>& task_ids, int length,
                                                 const PolicyFn& policy,
                                                 const DynamicsFn& dynamics);

// --- per-strategy consolidation ---

void oewc_update(StrategyState& state, const StreamBucket& bucket, const ReplayConfig& cfg,
                 Rng& rng);
void packnet_update(StrategyState& state, const StreamBucket& bucket, const ReplayConfig& cfg,
                    Rng& rng);

// oEWC penalty value (lambda/2) sum F (theta - theta*)^2 for the current net.
double oewc_penalty(const StrategyState& state, double lambda);

// Trains one bucket under the given strategy; replay strategies augment the
// bucket per Algorithm 1 before updating policy and generator.
void train_on_bucket(Strategy kind, StrategyState& state, const StreamBucket& bucket,
                     const ReplayConfig& cfg, Rng& rng);

// Evaluation-time policy view. PackNet keeps only weights owned by
// consolidations <= mask_limit; other strategies return the policy as is.
DenseNet masked_policy(const StrategyState& state, int mask_limit);

// --- shared supervised training helpers ---

struct PairSet {
    Mat x;
    Mat y;
    long size() const { return x.rows; }
};
PairSet build_policy_pairs(const std::vector<Trajectory>& trajs, int n_max);
PairSet build_transition_pairs(const std::vector<Trajectory>& trajs);
DenoiseDataset build_denoise_data(const std::vector<Trajectory>& trajs, int n_max);

// Mini-batch Adam training on mean squared error; grad_hook (optional) can
// rewrite the gradients before each step (penalties, masks).
using GradHook = std::function<void(const DenseNet&, NetGrads&)>;
void train_mse(DenseNet& net, const PairSet& data, int epochs, int batch_size, double lr,
               Rng& rng, const GradHook& grad_hook = nullptr);

// Diagonal Fisher estimate: mean over samples of squared per-sample gradient.
NetGrads fisher_diag(const DenseNet& net, const PairSet& data);

// --- checkpointing ---

void save_strategy(const StrategyState& state, const std::string& dir);
StrategyState load_strategy(const std::string& dir);

}  // namespace rb

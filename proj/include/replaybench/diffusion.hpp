#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "replaybench/net.hpp"

namespace rb {

struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Variance schedule tables, 1-indexed in t; alpha_bar[0] == 1 exactly.
struct DiffusionSchedule {
    int steps = 0;  // T
    std::vector<double> beta;       // [0..T], [0] unused
    std::vector<double> alpha;      // [0..T], [0] unused
    std::vector<double> alpha_bar;  // [0..T]
};

// Cosine schedule: alpha_bar(t) = f(t)/f(0) with
// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), betas clipped to <= 0.999.
DiffusionSchedule cosine_schedule(int steps, double s = 0.008);

// Sampling condition: trajectory timestep j plus a task one-hot
// (all zeros = unconditional ablation). The diffusion step is supplied
// separately wherever the denoiser is evaluated.
struct Condition {
    int traj_step = 1;                  // j, 1-based
    std::vector<double> task_onehot;    // length n_max
};

// Denoiser input layout: [x_t | sin-cos embed of j | sin-cos embed of t | onehot].
struct DenoiserSpec {
    int state_dim = 2;
    int n_max = 1;
    int embed_dim = 32;          // per embedded integer
    bool timestep_cond = true;   // false: j-embedding slots stay zero (i.i.d.-state mode)

    int input_dim() const { return state_dim + 2 * embed_dim + n_max; }
};

// Writes the sinusoidal embedding of integer value v into out[0..dim).
void sin_embed(int v, int dim, double* out);

// Assembles one denoiser input row for (x_t, j, diffusion step t, onehot).
void build_denoiser_input(const DenoiserSpec& spec, std::span<const double> x_t,
                          const Condition& cond, int diff_step, double* row);

// Closed-form forward noising: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
std::vector<double> q_sample(std::span<const double> x0, int t,
                             std::span<const double> noise,
                             const DiffusionSchedule& sched);

// Noise-prediction loss for one sample at a fixed (t, eps): ||eps - eps_hat||^2
// plus its parameter gradients. The randomized public op draws t and eps.
struct DenoiseLoss {
    double loss = 0.0;
    NetGrads grads;
};
DenoiseLoss denoise_loss_at(const DenseNet& net, const DenoiserSpec& spec,
                            const DiffusionSchedule& sched, std::span<const double> x0,
                            const Condition& cond, int t, std::span<const double> eps);
DenoiseLoss denoise_loss(const DenseNet& net, const DenoiserSpec& spec,
                         const DiffusionSchedule& sched, std::span<const double> x0,
                         const Condition& cond, Rng& rng);

// One ancestral sampling step from x_t to x_{t-1}; z must be standard normal
// (ignored at t == 1, where the mean is returned exactly).
std::vector<double> p_sample_step_at(const DenseNet& net, const DenoiserSpec& spec,
                                     const DiffusionSchedule& sched,
                                     std::span<const double> x_t, int t,
                                     const Condition& cond, std::span<const double> z);
std::vector<double> p_sample_step(const DenseNet& net, const DenoiserSpec& spec,
                                  const DiffusionSchedule& sched,
                                  std::span<const double> x_t, int t,
                                  const Condition& cond, Rng& rng);

// Runs the full reverse chain from pure noise for every condition; output
// order matches input order. Deterministic given the rng state regardless of
// thread count (each condition gets a derived rng stream).
std::vector<std::vector<double>> generate_states(const DenseNet& net,
                                                 const DenoiserSpec& spec,
                                                 const DiffusionSchedule& sched,
                                                 const std::vector<Condition>& conds,
                                                 Rng& rng, int n_threads = 1);

// Training-set view for the denoiser: per sample a state, its trajectory
// timestep and a task index (-1 = no task conditioning).
struct DenoiseDataset {
    int state_dim = 2;
    std::vector<double> states;   // n * state_dim
    std::vector<int> steps;       // n
    std::vector<int> task_index;  // n, -1 for all-zero onehot

    size_t size() const { return steps.size(); }
    void add(std::span<const double> state, int j, int task);
};

// Uniform-batch Adam training on the noise-prediction objective.
// Returns the mean loss over the last 100 steps. Throws TrainingDiverged on
// non-finite loss.
double train_denoiser(DenseNet& net, const DenoiserSpec& spec, const DiffusionSchedule& sched,
                      const DenoiseDataset& data, long steps, int batch_size,
                      AdamState& adam, Rng& rng);

}  // namespace rb

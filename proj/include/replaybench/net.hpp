#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "replaybench/mat.hpp"
#include "replaybench/rng.hpp"

namespace rb {

// Fully connected net, tanh on hidden layers, identity output.
// Weights are stored fan_in x fan_out per layer, biases per output unit.
struct DenseNet {
    std::vector<int> layer_sizes;
    std::vector<Mat> w;
    std::vector<AVec> b;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int n_layers() const { return static_cast<int>(w.size()); }
    long param_count() const;
};

// Gradient (or any parameter-shaped) container matching a DenseNet.
struct NetGrads {
    std::vector<Mat> w;
    std::vector<AVec> b;

    void zero();
    void scale(double s);
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    NetGrads m;
    NetGrads v;
    long step = 0;
    AdamConfig cfg;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidArchitecture : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Uniform init in +-sqrt(6/(fan_in+fan_out)), biases zero. Deterministic per seed.
DenseNet init_net(const std::vector<int>& layer_sizes, std::uint64_t seed);

NetGrads zero_grads_like(const DenseNet& net);
AdamState init_adam(const DenseNet& net, const AdamConfig& cfg);

std::vector<double> forward(const DenseNet& net, std::span<const double> input);

// Batched forward keeping post-activation values for backprop.
// acts[0] is the input batch; acts.back() is the output batch.
struct FwdCache {
    std::vector<Mat> acts;
};
const Mat& forward_batch(const DenseNet& net, const Mat& inputs, FwdCache& cache);

// Accumulates parameter gradients given dL/d(output) for the cached batch.
void backward_batch(const DenseNet& net, const FwdCache& cache, const Mat& d_out,
                    NetGrads& grads);

double mse_loss(std::span<const double> pred, std::span<const double> target);

// Mean-over-batch of per-sample mean squared error, plus its gradients.
// inputs: (batch x in), targets: (batch x out).
struct LossGrads {
    double loss = 0.0;
    NetGrads grads;
};
LossGrads grad(const DenseNet& net, const Mat& inputs, const Mat& targets);

// Bias-corrected Adam update. Throws NonFiniteGradient before touching the
// net if any gradient entry is not finite.
void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state);

// Checkpoint format "RBNET1": magic, layer count, layer sizes, then per layer
// the weight matrix (fan_in x fan_out, row-major) followed by the bias vector.
void save_net(const DenseNet& net, const std::string& path);
DenseNet load_net(const std::string& path);

}  // namespace rb

#include "replaybench/net.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace rb {

long DenseNet::param_count() const {
    long n = 0;
    for (size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        n += static_cast<long>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
}

void NetGrads::zero() {
    for (auto& m : w) m.zero();
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

void NetGrads::scale(double s) {
    for (auto& m : w)
        for (auto& x : m.a) x *= s;
    for (auto& v : b)
        for (auto& x : v) x *= s;
}

DenseNet init_net(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw InvalidArchitecture("need at least two layer sizes");
    for (int s : layer_sizes)
        if (s < 1) throw InvalidArchitecture("layer size must be >= 1");

    DenseNet net;
    net.layer_sizes = layer_sizes;
    Rng rng = make_rng(seed);
    for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        Mat w(fan_in, fan_out);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& x : w.a) x = dist(rng);
        net.w.push_back(std::move(w));
        net.b.emplace_back(fan_out, 0.0);
    }
    return net;
}

NetGrads zero_grads_like(const DenseNet& net) {
    NetGrads g;
    for (const auto& m : net.w) g.w.emplace_back(m.rows, m.cols);
    for (const auto& v : net.b) g.b.emplace_back(v.size(), 0.0);
    return g;
}

AdamState init_adam(const DenseNet& net, const AdamConfig& cfg) {
    AdamState st;
    st.m = zero_grads_like(net);
    st.v = zero_grads_like(net);
    st.step = 0;
    st.cfg = cfg;
    return st;
}

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    if (static_cast<int>(input.size()) != net.input_dim())
        throw ShapeError("forward: input length " + std::to_string(input.size()) +
                         " != first layer size " + std::to_string(net.input_dim()));
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (int l = 0; l < net.n_layers(); ++l) {
        const Mat& w = net.w[l];
        next.assign(net.b[l].begin(), net.b[l].end());
        for (int i = 0; i < w.rows; ++i) {
            const double xi = cur[i];
            if (xi == 0.0) continue;
            const double* wr = w.row(i);
            for (int o = 0; o < w.cols; ++o) next[o] += xi * wr[o];
        }
        if (l + 1 < net.n_layers())
            for (auto& x : next) x = std::tanh(x);
        cur.swap(next);
    }
    return cur;
}

const Mat& forward_batch(const DenseNet& net, const Mat& inputs, FwdCache& cache) {
    if (inputs.cols != net.input_dim()) throw ShapeError("forward_batch: input dim mismatch");
    const int depth = net.n_layers();
    cache.acts.resize(depth + 1);
    cache.acts[0] = inputs;
    for (int l = 0; l < depth; ++l) {
        affine_forward(cache.acts[l], net.w[l], net.b[l], cache.acts[l + 1]);
        if (l + 1 < depth)
            for (auto& x : cache.acts[l + 1].a) x = std::tanh(x);
    }
    return cache.acts.back();
}

void backward_batch(const DenseNet& net, const FwdCache& cache, const Mat& d_out,
                    NetGrads& grads) {
    const int depth = net.n_layers();
    Mat delta = d_out;
    Mat delta_prev;
    for (int l = depth - 1; l >= 0; --l) {
        affine_backward_param(cache.acts[l], delta, grads.w[l], grads.b[l]);
        if (l == 0) break;
        affine_backward_data(delta, net.w[l], delta_prev);
        // tanh'(z) = 1 - a^2 with a the stored post-activation
        const Mat& act = cache.acts[l];
        for (size_t k = 0; k < delta_prev.a.size(); ++k)
            delta_prev.a[k] *= 1.0 - act.a[k] * act.a[k];
        delta.a.swap(delta_prev.a);
        std::swap(delta.rows, delta_prev.rows);
        std::swap(delta.cols, delta_prev.cols);
    }
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeError("mse_loss: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

LossGrads grad(const DenseNet& net, const Mat& inputs, const Mat& targets) {
    if (inputs.rows == 0) throw ShapeError("grad: empty batch");
    if (inputs.rows != targets.rows || targets.cols != net.output_dim())
        throw ShapeError("grad: batch shape mismatch");

    LossGrads out;
    out.grads = zero_grads_like(net);
    FwdCache cache;
    const Mat& pred = forward_batch(net, inputs, cache);
    const double norm = 1.0 / (static_cast<double>(inputs.rows) * targets.cols);
    Mat d_out(pred.rows, pred.cols);
    double loss = 0.0;
    for (size_t k = 0; k < pred.a.size(); ++k) {
        const double diff = pred.a[k] - targets.a[k];
        loss += diff * diff;
        d_out.a[k] = 2.0 * diff * norm;
    }
    out.loss = loss * norm;
    backward_batch(net, cache, d_out, out.grads);
    return out;
}

void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state) {
    for (const auto& m : grads.w)
        for (double x : m.a)
            if (!std::isfinite(x)) throw NonFiniteGradient("adam_step: non-finite gradient");
    for (const auto& v : grads.b)
        for (double x : v)
            if (!std::isfinite(x)) throw NonFiniteGradient("adam_step: non-finite gradient");

    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = state.cfg.lr, eps = state.cfg.epsilon;

    auto update = [&](double& p, double g, double& m, double& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double mhat = m / corr1;
        const double vhat = v / corr2;
        p -= lr * mhat / (std::sqrt(vhat) + eps);
    };

    for (size_t l = 0; l < net.w.size(); ++l) {
        for (size_t k = 0; k < net.w[l].a.size(); ++k)
            update(net.w[l].a[k], grads.w[l].a[k], state.m.w[l].a[k], state.v.w[l].a[k]);
        for (size_t k = 0; k < net.b[l].size(); ++k)
            update(net.b[l][k], grads.b[l][k], state.m.b[l][k], state.v.b[l][k]);
    }
}

static const char kMagic[7] = "RBNET1";

void save_net(const DenseNet& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_net: cannot open " + path);
    f.write(kMagic, 6);
    const std::uint32_t n = static_cast<std::uint32_t>(net.layer_sizes.size());
    f.write(reinterpret_cast<const char*>(&n), sizeof n);
    for (int s : net.layer_sizes) {
        const std::uint32_t u = static_cast<std::uint32_t>(s);
        f.write(reinterpret_cast<const char*>(&u), sizeof u);
    }
    for (size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        f.write(reinterpret_cast<const char*>(net.w[l].a.data()),
                static_cast<std::streamsize>(net.w[l].a.size() * sizeof(double)));
        f.write(reinterpret_cast<const char*>(net.b[l].data()),
                static_cast<std::streamsize>(net.b[l].size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("save_net: write failed for " + path);
}

DenseNet load_net(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_net: cannot open " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, kMagic, 6) != 0)
        throw std::runtime_error("load_net: bad magic in " + path);
    std::uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!f || n < 2 || n > 64) throw std::runtime_error("load_net: bad layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) {
        std::uint32_t u = 0;
        f.read(reinterpret_cast<char*>(&u), sizeof u);
        s = static_cast<int>(u);
    }
    DenseNet net;
    net.layer_sizes = sizes;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        Mat w(sizes[l], sizes[l + 1]);
        f.read(reinterpret_cast<char*>(w.a.data()),
               static_cast<std::streamsize>(w.a.size() * sizeof(double)));
        AVec b(sizes[l + 1]);
        f.read(reinterpret_cast<char*>(b.data()),
               static_cast<std::streamsize>(b.size() * sizeof(double)));
        net.w.push_back(std::move(w));
        net.b.push_back(std::move(b));
    }
    if (!f) throw std::runtime_error("load_net: truncated file " + path);
    return net;
}

}  // namespace rb

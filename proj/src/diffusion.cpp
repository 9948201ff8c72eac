#include "replaybench/diffusion.hpp"

#include <cmath>
#include <cstring>
#include <thread>

namespace rb {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxBeta = 0.999;
}  // namespace

DiffusionSchedule cosine_schedule(int steps, double s) {
    if (steps < 1) throw std::invalid_argument("cosine_schedule: T must be >= 1");
    auto f = [&](double t) {
        const double u = (t / steps + s) / (1.0 + s);
        const double c = std::cos(u * kPi / 2.0);
        return c * c;
    };
    DiffusionSchedule sched;
    sched.steps = steps;
    sched.beta.assign(steps + 1, 0.0);
    sched.alpha.assign(steps + 1, 0.0);
    sched.alpha_bar.assign(steps + 1, 0.0);
    sched.alpha_bar[0] = 1.0;
    const double f0 = f(0.0);
    for (int t = 1; t <= steps; ++t) {
        const double ratio = f(static_cast<double>(t)) / f(static_cast<double>(t - 1));
        double beta = 1.0 - ratio;
        beta = std::min(beta, kMaxBeta);
        beta = std::max(beta, 1e-12);
        sched.beta[t] = beta;
        sched.alpha[t] = 1.0 - beta;
        sched.alpha_bar[t] = sched.alpha_bar[t - 1] * sched.alpha[t];
    }
    (void)f0;
    return sched;
}

void sin_embed(int v, int dim, double* out) {
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        out[2 * i] = std::sin(v * freq);
        out[2 * i + 1] = std::cos(v * freq);
    }
    if (dim % 2) out[dim - 1] = 0.0;
}

void build_denoiser_input(const DenoiserSpec& spec, std::span<const double> x_t,
                          const Condition& cond, int diff_step, double* row) {
    const int sd = spec.state_dim, ed = spec.embed_dim;
    for (int i = 0; i < sd; ++i) row[i] = x_t[i];
    if (spec.timestep_cond) {
        sin_embed(cond.traj_step, ed, row + sd);
    } else {
        std::memset(row + sd, 0, sizeof(double) * ed);
    }
    sin_embed(diff_step, ed, row + sd + ed);
    double* oh = row + sd + 2 * ed;
    for (int i = 0; i < spec.n_max; ++i)
        oh[i] = i < static_cast<int>(cond.task_onehot.size()) ? cond.task_onehot[i] : 0.0;
}

std::vector<double> q_sample(std::span<const double> x0, int t,
                             std::span<const double> noise,
                             const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.steps) throw std::out_of_range("q_sample: t out of range");
    if (x0.size() != noise.size()) throw ShapeError("q_sample: x0/noise length mismatch");
    const double ab = sched.alpha_bar[t];
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    std::vector<double> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = c0 * x0[i] + c1 * noise[i];
    return out;
}

DenoiseLoss denoise_loss_at(const DenseNet& net, const DenoiserSpec& spec,
                            const DiffusionSchedule& sched, std::span<const double> x0,
                            const Condition& cond, int t, std::span<const double> eps) {
    const std::vector<double> xt = q_sample(x0, t, eps, sched);
    std::vector<double> row(spec.input_dim());
    build_denoiser_input(spec, xt, cond, t, row.data());

    Mat input(1, spec.input_dim());
    std::copy(row.begin(), row.end(), input.a.begin());
    FwdCache cache;
    const Mat& pred = forward_batch(net, input, cache);

    DenoiseLoss out;
    out.grads = zero_grads_like(net);
    Mat d_out(1, spec.state_dim);
    for (int i = 0; i < spec.state_dim; ++i) {
        const double diff = pred.a[i] - eps[i];
        out.loss += diff * diff;
        d_out.a[i] = 2.0 * diff;
    }
    if (!std::isfinite(out.loss)) throw TrainingDiverged("denoise_loss: non-finite loss");
    backward_batch(net, cache, d_out, out.grads);
    return out;
}

DenoiseLoss denoise_loss(const DenseNet& net, const DenoiserSpec& spec,
                         const DiffusionSchedule& sched, std::span<const double> x0,
                         const Condition& cond, Rng& rng) {
    std::uniform_int_distribution<int> tdist(1, sched.steps);
    const int t = tdist(rng);
    std::vector<double> eps(spec.state_dim);
    for (auto& e : eps) e = gauss(rng);
    return denoise_loss_at(net, spec, sched, x0, cond, t, eps);
}

std::vector<double> p_sample_step_at(const DenseNet& net, const DenoiserSpec& spec,
                                     const DiffusionSchedule& sched,
                                     std::span<const double> x_t, int t,
                                     const Condition& cond, std::span<const double> z) {
    if (t < 1 || t > sched.steps) throw std::out_of_range("p_sample_step: t out of range");
    std::vector<double> row(spec.input_dim());
    build_denoiser_input(spec, x_t, cond, t, row.data());
    const std::vector<double> eps_hat = forward(net, row);

    const double beta = sched.beta[t];
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t]);
    const double coef = beta / std::sqrt(1.0 - sched.alpha_bar[t]);
    const double sigma = std::sqrt(beta);
    std::vector<double> out(x_t.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double mu = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
        out[i] = t > 1 ? mu + sigma * z[i] : mu;
    }
    return out;
}

std::vector<double> p_sample_step(const DenseNet& net, const DenoiserSpec& spec,
                                  const DiffusionSchedule& sched,
                                  std::span<const double> x_t, int t,
                                  const Condition& cond, Rng& rng) {
    std::vector<double> z(x_t.size(), 0.0);
    if (t > 1)
        for (auto& v : z) v = gauss(rng);
    return p_sample_step_at(net, spec, sched, x_t, t, cond, z);
}

namespace {

// Reverse chain over one contiguous slice of conditions, all diffusion steps
// in lockstep so the denoiser runs batched.
void reverse_chain_chunk(const DenseNet& net, const DenoiserSpec& spec,
                         const DiffusionSchedule& sched, const std::vector<Condition>& conds,
                         size_t begin, size_t end, const std::vector<std::uint64_t>& seeds,
                         std::vector<std::vector<double>>& out) {
    const int n = static_cast<int>(end - begin);
    if (n == 0) return;
    const int sd = spec.state_dim, ed = spec.embed_dim, id = spec.input_dim();

    std::vector<Rng> rngs;
    rngs.reserve(n);
    for (int k = 0; k < n; ++k) rngs.emplace_back(seeds[begin + k]);

    Mat x(n, sd);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < sd; ++i) x(k, i) = gauss(rngs[k]);

    // j-embedding and one-hot are fixed per row; only x and the t-embedding
    // change along the chain.
    Mat input(n, id);
    for (int k = 0; k < n; ++k) {
        const Condition& c = conds[begin + k];
        if (c.traj_step < 1) throw std::invalid_argument("generate_states: traj_step < 1");
        build_denoiser_input(spec, std::span<const double>(x.row(k), sd), c, 1, input.row(k));
    }

    std::vector<double> t_embed(ed);
    FwdCache cache;
    for (int t = sched.steps; t >= 1; --t) {
        sin_embed(t, ed, t_embed.data());
        for (int k = 0; k < n; ++k) {
            double* row = input.row(k);
            std::memcpy(row, x.row(k), sizeof(double) * sd);
            std::memcpy(row + sd + ed, t_embed.data(), sizeof(double) * ed);
        }
        const Mat& eps_hat = forward_batch(net, input, cache);

        const double beta = sched.beta[t];
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t]);
        const double coef = beta / std::sqrt(1.0 - sched.alpha_bar[t]);
        const double sigma = std::sqrt(beta);
        for (int k = 0; k < n; ++k) {
            double* xr = x.row(k);
            const double* er = eps_hat.row(k);
            for (int i = 0; i < sd; ++i) {
                const double mu = inv_sqrt_alpha * (xr[i] - coef * er[i]);
                xr[i] = t > 1 ? mu + sigma * gauss(rngs[k]) : mu;
            }
        }
    }
    for (int k = 0; k < n; ++k)
        out[begin + k].assign(x.row(k), x.row(k) + sd);
}

}  // namespace

std::vector<std::vector<double>> generate_states(const DenseNet& net,
                                                 const DenoiserSpec& spec,
                                                 const DiffusionSchedule& sched,
                                                 const std::vector<Condition>& conds,
                                                 Rng& rng, int n_threads) {
    std::vector<std::vector<double>> out(conds.size());
    if (conds.empty()) return out;

    // One derived seed per condition keeps results independent of chunking.
    const std::uint64_t master = rng();
    std::vector<std::uint64_t> seeds(conds.size());
    for (size_t i = 0; i < conds.size(); ++i) seeds[i] = derive_seed(master, i);

    constexpr size_t kChunk = 2048;
    if (n_threads <= 1) {
        for (size_t b = 0; b < conds.size(); b += kChunk)
            reverse_chain_chunk(net, spec, sched, conds, b, std::min(b + kChunk, conds.size()),
                                seeds, out);
        return out;
    }

    std::vector<size_t> chunk_starts;
    for (size_t b = 0; b < conds.size(); b += kChunk) chunk_starts.push_back(b);
    std::atomic<size_t> next{0};
    auto worker = [&] {
        while (true) {
            const size_t idx = next.fetch_add(1);
            if (idx >= chunk_starts.size()) break;
            const size_t b = chunk_starts[idx];
            reverse_chain_chunk(net, spec, sched, conds, b,
                                std::min(b + kChunk, conds.size()), seeds, out);
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return out;
}

void DenoiseDataset::add(std::span<const double> state, int j, int task) {
    states.insert(states.end(), state.begin(), state.end());
    steps.push_back(j);
    task_index.push_back(task);
}

double train_denoiser(DenseNet& net, const DenoiserSpec& spec, const DiffusionSchedule& sched,
                      const DenoiseDataset& data, long steps, int batch_size,
                      AdamState& adam, Rng& rng) {
    if (data.size() == 0) return 0.0;
    const int sd = spec.state_dim, ed = spec.embed_dim, id = spec.input_dim();
    std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
    std::uniform_int_distribution<int> tdist(1, sched.steps);

    Mat input(batch_size, id);
    Mat eps(batch_size, sd);
    Mat d_out(batch_size, sd);
    std::vector<double> xt(sd);
    Condition cond;
    cond.task_onehot.assign(spec.n_max, 0.0);
    NetGrads grads = zero_grads_like(net);
    FwdCache cache;

    double tail_sum = 0.0;
    long tail_n = 0;
    for (long step = 0; step < steps; ++step) {
        for (int k = 0; k < batch_size; ++k) {
            const size_t s = pick(rng);
            const int t = tdist(rng);
            const double* x0 = &data.states[s * sd];
            const double ab = sched.alpha_bar[t];
            const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
            for (int i = 0; i < sd; ++i) {
                eps(k, i) = gauss(rng);
                xt[i] = c0 * x0[i] + c1 * eps(k, i);
            }
            cond.traj_step = data.steps[s];
            std::fill(cond.task_onehot.begin(), cond.task_onehot.end(), 0.0);
            const int task = data.task_index[s];
            if (task >= 0 && task < spec.n_max) cond.task_onehot[task] = 1.0;
            build_denoiser_input(spec, xt, cond, t, input.row(k));
        }
        (void)ed;
        const Mat& pred = forward_batch(net, input, cache);
        double loss = 0.0;
        const double inv_b = 1.0 / batch_size;
        for (size_t k = 0; k < pred.a.size(); ++k) {
            const double diff = pred.a[k] - eps.a[k];
            loss += diff * diff;
            d_out.a[k] = 2.0 * diff * inv_b;
        }
        loss *= inv_b;
        if (!std::isfinite(loss)) throw TrainingDiverged("train_denoiser: non-finite loss");
        grads.zero();
        backward_batch(net, cache, d_out, grads);
        adam_step(net, grads, adam);
        if (step >= steps - 100) {
            tail_sum += loss;
            ++tail_n;
        }
    }
    return tail_n ? tail_sum / tail_n : 0.0;
}

}  // namespace rb

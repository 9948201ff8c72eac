#include "replaybench/methods.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace rb {

Strategy strategy_from_string(const std::string& s) {
    if (s == "finetune") return Strategy::Finetune;
    if (s == "multitask") return Strategy::Multitask;
    if (s == "oewc") return Strategy::Oewc;
    if (s == "packnet") return Strategy::Packnet;
    if (s == "dgr") return Strategy::Dgr;
    if (s == "cril") return Strategy::Cril;
    if (s == "tdgr") return Strategy::Tdgr;
    throw std::invalid_argument("unknown strategy: " + s);
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Finetune: return "finetune";
        case Strategy::Multitask: return "multitask";
        case Strategy::Oewc: return "oewc";
        case Strategy::Packnet: return "packnet";
        case Strategy::Dgr: return "dgr";
        case Strategy::Cril: return "cril";
        case Strategy::Tdgr: return "tdgr";
    }
    return "?";
}

bool uses_generator(Strategy s) {
    return s == Strategy::Dgr || s == Strategy::Cril || s == Strategy::Tdgr;
}

void ReplayConfig::validate() const {
    if (replay_ratio < 0.0 || replay_ratio >= 1.0)
        throw std::invalid_argument("replay_ratio must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
}

long replay_count(double r, long dataset_size) {
    if (r < 0.0 || r >= 1.0) throw std::invalid_argument("replay_count: ratio must be in [0, 1)");
    return std::llround(r * static_cast<double>(dataset_size) / (1.0 - r));
}

long PacknetAux::free_weights() const {
    long n = 0;
    for (const auto& layer : mask)
        for (int m : layer)
            if (m == 0) ++n;
    return n;
}

void GenerationStats::reset(int l_max) {
    per_timestep.assign(l_max, 0);
    total = 0;
}

DenoiserSpec denoiser_spec(const ReplayConfig& cfg, bool timestep_cond) {
    DenoiserSpec spec;
    spec.state_dim = 2;
    spec.n_max = cfg.n_max;
    spec.embed_dim = cfg.embed_dim;
    spec.timestep_cond = timestep_cond;
    return spec;
}

namespace {

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> sizes;
    sizes.push_back(in);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

}  // namespace

StrategyState init_strategy(Strategy kind, const ReplayConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    StrategyState st;
    st.kind = kind;
    st.policy = init_net(with_io(2 + cfg.n_max, cfg.policy_hidden, 2), derive_seed(seed, 1));
    if (uses_generator(kind)) {
        const DenoiserSpec spec =
            denoiser_spec(cfg, !(kind == Strategy::Dgr && cfg.dgr_unconditional));
        st.generator =
            init_net(with_io(spec.input_dim(), cfg.denoiser_hidden, 2), derive_seed(seed, 2));
        st.has_generator = true;
    }
    if (kind == Strategy::Cril) {
        st.dynamics = init_net(with_io(4, cfg.dynamics_hidden, 2), derive_seed(seed, 3));
        st.has_dynamics = true;
    }
    if (kind == Strategy::Oewc) st.oewc.fisher = zero_grads_like(st.policy);
    if (kind == Strategy::Packnet) {
        for (const Mat& w : st.policy.w)
            st.packnet.mask.emplace_back(w.a.size(), 0);
    }
    return st;
}

namespace {

std::vector<int> replay_task_pool(const StrategyState& state, int exclude_task) {
    std::vector<int> pool;
    for (int id : state.seen_task_ids)
        if (id != exclude_task) pool.push_back(id);
    if (pool.empty()) pool = state.seen_task_ids;
    return pool;
}

void require_previous_model(const StrategyState& state) {
    if (state.task_count < 1 || !state.has_generator || state.seen_task_ids.empty())
        throw NoPreviousModel("replay requested before any task was trained");
}

// Batched action labeling with the current policy over flat states.
std::vector<Vec2> label_actions(const DenseNet& policy,
                                const std::vector<std::vector<double>>& states,
                                const std::vector<int>& task_ids, int n_max) {
    const long n = static_cast<long>(states.size());
    std::vector<Vec2> actions(n);
    constexpr long kChunk = 8192;
    Mat input;
    FwdCache cache;
    for (long b = 0; b < n; b += kChunk) {
        const long m = std::min(kChunk, n - b);
        input.resize(static_cast<int>(m), 2 + n_max);
        input.zero();
        for (long k = 0; k < m; ++k) {
            double* row = input.row(static_cast<int>(k));
            row[0] = states[b + k][0];
            row[1] = states[b + k][1];
            fill_onehot(task_ids[b + k], n_max, row + 2);
        }
        const Mat& out = forward_batch(policy, input, cache);
        for (long k = 0; k < m; ++k)
            actions[b + k] = {out(static_cast<int>(k), 0), out(static_cast<int>(k), 1)};
    }
    return actions;
}

std::vector<double> onehot_vec(int task_id, int n_max) {
    std::vector<double> v(n_max, 0.0);
    fill_onehot(task_id, n_max, v.data());
    return v;
}

}  // namespace

std::vector<Trajectory> tdgr_generate_replay(StrategyState& state, long n,
                                             const ReplayConfig& cfg, Rng& rng,
                                             int exclude_task) {
    require_previous_model(state);
    const int l_max = state.l_max;
    state.gen_stats.reset(l_max);
    std::vector<Trajectory> out;
    if (n <= 0) return out;

    const std::vector<int> pool = replay_task_pool(state, exclude_task);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::vector<int> traj_task(n);
    for (long i = 0; i < n; ++i) traj_task[i] = pool[pick(rng)];

    // Every timestep of every trajectory gets exactly one condition.
    std::vector<Condition> conds;
    conds.reserve(static_cast<size_t>(n) * l_max);
    std::vector<int> cond_task;
    cond_task.reserve(conds.capacity());
    for (long i = 0; i < n; ++i) {
        const std::vector<double> oh = onehot_vec(traj_task[i], cfg.n_max);
        for (int j = 1; j <= l_max; ++j) {
            conds.push_back({j, oh});
            cond_task.push_back(traj_task[i]);
            state.gen_stats.per_timestep[j - 1] += 1;
            state.gen_stats.total += 1;
        }
    }

    const DenoiserSpec spec = denoiser_spec(cfg);
    const DiffusionSchedule sched = cosine_schedule(cfg.diffusion_steps);
    const std::vector<std::vector<double>> states =
        generate_states(state.generator, spec, sched, conds, rng, cfg.n_threads);
    const std::vector<Vec2> actions = label_actions(state.policy, states, cond_task, cfg.n_max);

    out.resize(n);
    size_t at = 0;
    for (long i = 0; i < n; ++i) {
        out[i].task_id = traj_task[i];
        out[i].steps.resize(l_max);
        for (int j = 1; j <= l_max; ++j, ++at) {
            out[i].steps[j - 1] = {{states[at][0], states[at][1]}, actions[at], j};
        }
    }
    return out;
}

std::vector<Trajectory> dgr_generate_replay(StrategyState& state, long n_states,
                                            const ReplayConfig& cfg, Rng& rng,
                                            int exclude_task) {
    require_previous_model(state);
    const int l_max = state.l_max;
    state.gen_stats.reset(l_max);
    std::vector<Trajectory> out;
    if (n_states <= 0) return out;

    const std::vector<int> pool = replay_task_pool(state, exclude_task);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::uniform_int_distribution<int> jdist(1, l_max);

    std::vector<Condition> conds;
    conds.reserve(n_states);
    std::vector<int> cond_task(n_states);
    for (long i = 0; i < n_states; ++i) {
        const int task = pool[pick(rng)];
        const int j = jdist(rng);
        conds.push_back({j, onehot_vec(task, cfg.n_max)});
        cond_task[i] = task;
        state.gen_stats.per_timestep[j - 1] += 1;
        state.gen_stats.total += 1;
    }

    const DenoiserSpec spec = denoiser_spec(cfg, !cfg.dgr_unconditional);
    const DiffusionSchedule sched = cosine_schedule(cfg.diffusion_steps);
    const std::vector<std::vector<double>> states =
        generate_states(state.generator, spec, sched, conds, rng, cfg.n_threads);
    const std::vector<Vec2> actions = label_actions(state.policy, states, cond_task, cfg.n_max);

    out.resize(n_states);
    for (long i = 0; i < n_states; ++i) {
        out[i].task_id = cond_task[i];
        out[i].steps.push_back(
            {{states[i][0], states[i][1]}, actions[i], conds[i].traj_step});
    }
    return out;
}

std::vector<Trajectory> autoregress_trajectories(const std::vector<Vec2>& starts,
                                                 const std::vector<int>& task_ids, int length,
                                                 const PolicyFn& policy,
                                                 const DynamicsFn& dynamics) {
    std::vector<Trajectory> out(starts.size());
    for (size_t i = 0; i < starts.size(); ++i) {
        out[i].task_id = task_ids[i];
        out[i].steps.reserve(length);
        Vec2 s = starts[i];
        for (int j = 1; j <= length; ++j) {
            const Vec2 a = policy(s, task_ids[i]);
            out[i].steps.push_back({s, a, j});
            if (j < length) s = dynamics(s, a, static_cast<int>(i), j);
        }
    }
    return out;
}

std::vector<Trajectory> cril_generate_replay(StrategyState& state, long n,
                                             const ReplayConfig& cfg, Rng& rng,
                                             int exclude_task) {
    require_previous_model(state);
    if (!state.has_dynamics) throw NoPreviousModel("cril replay needs a dynamics model");
    state.gen_stats.reset(state.l_max);
    if (n <= 0) return {};

    const std::vector<int> pool = replay_task_pool(state, exclude_task);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::vector<int> traj_task(n);
    std::vector<Condition> conds;
    for (long i = 0; i < n; ++i) {
        traj_task[i] = pool[pick(rng)];
        conds.push_back({1, onehot_vec(traj_task[i], cfg.n_max)});
    }
    const DenoiserSpec spec = denoiser_spec(cfg);
    const DiffusionSchedule sched = cosine_schedule(cfg.diffusion_steps);
    const std::vector<std::vector<double>> s1 =
        generate_states(state.generator, spec, sched, conds, rng, cfg.n_threads);
    std::vector<Vec2> starts(n);
    for (long i = 0; i < n; ++i) starts[i] = {s1[i][0], s1[i][1]};

    std::vector<double> pol_in(2 + cfg.n_max, 0.0);
    const PolicyFn pol = [&](Vec2 s, int task) -> Vec2 {
        pol_in[0] = s[0];
        pol_in[1] = s[1];
        fill_onehot(task, cfg.n_max, pol_in.data() + 2);
        const std::vector<double> a = forward(state.policy, pol_in);
        return {a[0], a[1]};
    };
    const DynamicsFn dyn = [&](Vec2 s, Vec2 a, int, int) -> Vec2 {
        const std::vector<double> in{s[0], s[1], a[0], a[1]};
        const std::vector<double> nxt = forward(state.dynamics, in);
        return {nxt[0], nxt[1]};
    };
    std::vector<Trajectory> out =
        autoregress_trajectories(starts, traj_task, state.l_max, pol, dyn);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < state.l_max; ++j) {
            state.gen_stats.per_timestep[j] += 1;
            state.gen_stats.total += 1;
        }
    return out;
}

PairSet build_policy_pairs(const std::vector<Trajectory>& trajs, int n_max) {
    long total = 0;
    for (const auto& t : trajs) total += t.length();
    PairSet ps;
    ps.x.resize(static_cast<int>(total), 2 + n_max);
    ps.x.zero();
    ps.y.resize(static_cast<int>(total), 2);
    long at = 0;
    for (const auto& t : trajs) {
        for (const TrajStep& st : t.steps) {
            double* row = ps.x.row(static_cast<int>(at));
            row[0] = st.state[0];
            row[1] = st.state[1];
            fill_onehot(t.task_id, n_max, row + 2);
            ps.y(static_cast<int>(at), 0) = st.action[0];
            ps.y(static_cast<int>(at), 1) = st.action[1];
            ++at;
        }
    }
    return ps;
}

PairSet build_transition_pairs(const std::vector<Trajectory>& trajs) {
    long total = 0;
    for (const auto& t : trajs) total += std::max(0, t.length() - 1);
    PairSet ps;
    ps.x.resize(static_cast<int>(total), 4);
    ps.y.resize(static_cast<int>(total), 2);
    long at = 0;
    for (const auto& t : trajs) {
        for (int k = 0; k + 1 < t.length(); ++k) {
            ps.x(static_cast<int>(at), 0) = t.steps[k].state[0];
            ps.x(static_cast<int>(at), 1) = t.steps[k].state[1];
            ps.x(static_cast<int>(at), 2) = t.steps[k].action[0];
            ps.x(static_cast<int>(at), 3) = t.steps[k].action[1];
            ps.y(static_cast<int>(at), 0) = t.steps[k + 1].state[0];
            ps.y(static_cast<int>(at), 1) = t.steps[k + 1].state[1];
            ++at;
        }
    }
    return ps;
}

DenoiseDataset build_denoise_data(const std::vector<Trajectory>& trajs, int n_max) {
    DenoiseDataset data;
    data.state_dim = 2;
    for (const auto& t : trajs) {
        const int task = (t.task_id >= 1 && t.task_id <= n_max) ? t.task_id - 1 : -1;
        for (const TrajStep& st : t.steps)
            data.add(std::span<const double>(st.state.data(), 2), st.timestep, task);
    }
    return data;
}

void train_mse(DenseNet& net, const PairSet& data, int epochs, int batch_size, double lr,
               Rng& rng, const GradHook& grad_hook) {
    const long n = data.size();
    if (n == 0) return;
    AdamConfig acfg;
    acfg.lr = lr;
    AdamState adam = init_adam(net, acfg);
    NetGrads grads = zero_grads_like(net);
    FwdCache cache;
    Mat xb, yb, d_out;
    std::vector<long> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (long b = 0; b < n; b += batch_size) {
            const int m = static_cast<int>(std::min<long>(batch_size, n - b));
            xb.resize(m, data.x.cols);
            yb.resize(m, data.y.cols);
            for (int k = 0; k < m; ++k) {
                std::copy_n(data.x.row(static_cast<int>(perm[b + k])), data.x.cols, xb.row(k));
                std::copy_n(data.y.row(static_cast<int>(perm[b + k])), data.y.cols, yb.row(k));
            }
            const Mat& pred = forward_batch(net, xb, cache);
            d_out.resize(m, data.y.cols);
            const double norm = 2.0 / (static_cast<double>(m) * data.y.cols);
            for (size_t k = 0; k < pred.a.size(); ++k)
                d_out.a[k] = norm * (pred.a[k] - yb.a[k]);
            grads.zero();
            backward_batch(net, cache, d_out, grads);
            if (grad_hook) grad_hook(net, grads);
            adam_step(net, grads, adam);
        }
    }
}

NetGrads fisher_diag(const DenseNet& net, const PairSet& data) {
    NetGrads fisher = zero_grads_like(net);
    const long n = data.size();
    if (n == 0) return fisher;
    FwdCache cache;
    Mat xb(1, data.x.cols), d_out(1, data.y.cols);
    NetGrads g = zero_grads_like(net);
    for (long s = 0; s < n; ++s) {
        std::copy_n(data.x.row(static_cast<int>(s)), data.x.cols, xb.row(0));
        const Mat& pred = forward_batch(net, xb, cache);
        for (int o = 0; o < data.y.cols; ++o)
            d_out(0, o) = 2.0 * (pred(0, o) - data.y(static_cast<int>(s), o)) / data.y.cols;
        g.zero();
        backward_batch(net, cache, d_out, g);
        for (size_t l = 0; l < g.w.size(); ++l) {
            for (size_t k = 0; k < g.w[l].a.size(); ++k)
                fisher.w[l].a[k] += g.w[l].a[k] * g.w[l].a[k];
            for (size_t k = 0; k < g.b[l].size(); ++k)
                fisher.b[l][k] += g.b[l][k] * g.b[l][k];
        }
    }
    fisher.scale(1.0 / static_cast<double>(n));
    return fisher;
}

double oewc_penalty(const StrategyState& state, double lambda) {
    if (!state.oewc.has_anchor) return 0.0;
    double acc = 0.0;
    for (size_t l = 0; l < state.policy.w.size(); ++l) {
        for (size_t k = 0; k < state.policy.w[l].a.size(); ++k) {
            const double d = state.policy.w[l].a[k] - state.oewc.anchor.w[l].a[k];
            acc += state.oewc.fisher.w[l].a[k] * d * d;
        }
        for (size_t k = 0; k < state.policy.b[l].size(); ++k) {
            const double d = state.policy.b[l][k] - state.oewc.anchor.b[l][k];
            acc += state.oewc.fisher.b[l][k] * d * d;
        }
    }
    return 0.5 * lambda * acc;
}

void oewc_update(StrategyState& state, const StreamBucket& bucket, const ReplayConfig& cfg,
                 Rng& rng) {
    const PairSet pairs = build_policy_pairs(bucket.trajectories, cfg.n_max);
    const double lambda = cfg.fisher_lambda;
    GradHook hook = nullptr;
    if (state.oewc.has_anchor) {
        hook = [&state, lambda](const DenseNet& net, NetGrads& grads) {
            for (size_t l = 0; l < grads.w.size(); ++l) {
                for (size_t k = 0; k < grads.w[l].a.size(); ++k)
                    grads.w[l].a[k] += lambda * state.oewc.fisher.w[l].a[k] *
                                       (net.w[l].a[k] - state.oewc.anchor.w[l].a[k]);
                for (size_t k = 0; k < grads.b[l].size(); ++k)
                    grads.b[l][k] += lambda * state.oewc.fisher.b[l][k] *
                                     (net.b[l][k] - state.oewc.anchor.b[l][k]);
            }
        };
    }
    train_mse(state.policy, pairs, cfg.epochs, cfg.batch_size, cfg.lr_policy, rng, hook);

    // Consolidate: accumulate the new Fisher, move the anchor.
    const NetGrads f_new = fisher_diag(state.policy, pairs);
    for (size_t l = 0; l < f_new.w.size(); ++l) {
        for (size_t k = 0; k < f_new.w[l].a.size(); ++k)
            state.oewc.fisher.w[l].a[k] += f_new.w[l].a[k];
        for (size_t k = 0; k < f_new.b[l].size(); ++k)
            state.oewc.fisher.b[l][k] += f_new.b[l][k];
    }
    state.oewc.anchor = state.policy;
    state.oewc.has_anchor = true;
}

void packnet_update(StrategyState& state, const StreamBucket& bucket, const ReplayConfig& cfg,
                    Rng& rng) {
    PacknetAux& aux = state.packnet;
    if (aux.free_weights() == 0)
        throw CapacityExhausted("packnet: no free parameters remain for a new task");
    const int mask_id = aux.consolidations + 1;
    const bool train_biases = mask_id == 1;
    const PairSet pairs = build_policy_pairs(bucket.trajectories, cfg.n_max);

    const auto mask_hook = [&aux, train_biases](int allowed) {
        return [&aux, train_biases, allowed](const DenseNet&, NetGrads& grads) {
            for (size_t l = 0; l < grads.w.size(); ++l) {
                for (size_t k = 0; k < grads.w[l].a.size(); ++k)
                    if (aux.mask[l][k] != allowed) grads.w[l].a[k] = 0.0;
                if (!train_biases)
                    std::fill(grads.b[l].begin(), grads.b[l].end(), 0.0);
            }
        };
    };

    // Train the free weights, then keep the largest-magnitude quarter of them
    // for this task and zero out the rest.
    train_mse(state.policy, pairs, cfg.epochs, cfg.batch_size, cfg.lr_policy, rng,
              mask_hook(0));
    for (size_t l = 0; l < state.policy.w.size(); ++l) {
        std::vector<size_t> free_idx;
        for (size_t k = 0; k < aux.mask[l].size(); ++k)
            if (aux.mask[l][k] == 0) free_idx.push_back(k);
        if (free_idx.empty()) continue;
        const long keep = static_cast<long>(
            std::ceil((1.0 - cfg.prune_fraction) * static_cast<double>(free_idx.size())));
        std::sort(free_idx.begin(), free_idx.end(), [&](size_t a, size_t b) {
            const double ma = std::abs(state.policy.w[l].a[a]);
            const double mb = std::abs(state.policy.w[l].a[b]);
            return ma != mb ? ma > mb : a < b;
        });
        for (long k = 0; k < static_cast<long>(free_idx.size()); ++k) {
            if (k < keep)
                aux.mask[l][free_idx[k]] = mask_id;
            else
                state.policy.w[l].a[free_idx[k]] = 0.0;
        }
    }
    train_mse(state.policy, pairs, cfg.retrain_epochs, cfg.batch_size, cfg.lr_policy, rng,
              mask_hook(mask_id));
    aux.consolidations = mask_id;
}

DenseNet masked_policy(const StrategyState& state, int mask_limit) {
    if (state.kind != Strategy::Packnet) return state.policy;
    DenseNet net = state.policy;
    for (size_t l = 0; l < net.w.size(); ++l)
        for (size_t k = 0; k < net.w[l].a.size(); ++k) {
            const int m = state.packnet.mask[l][k];
            if (m == 0 || m > mask_limit) net.w[l].a[k] = 0.0;
        }
    return net;
}

namespace {

void train_generators(StrategyState& state, const std::vector<Trajectory>& dataset,
                      const ReplayConfig& cfg, Rng& rng) {
    const bool first_bucket = state.task_count == 0;
    const long steps = cfg.gen_steps + (first_bucket ? cfg.gen_warmup_steps : 0);
    AdamConfig acfg;
    acfg.lr = cfg.lr_gen;
    const DiffusionSchedule sched = cosine_schedule(cfg.diffusion_steps);

    if (state.kind == Strategy::Cril) {
        // Start-state generator sees only the first step of each trajectory.
        std::vector<Trajectory> starts;
        starts.reserve(dataset.size());
        for (const auto& t : dataset) {
            Trajectory s;
            s.task_id = t.task_id;
            s.steps.push_back(t.steps.front());
            s.steps.back().timestep = 1;
            starts.push_back(std::move(s));
        }
        const DenoiseDataset start_data = build_denoise_data(starts, cfg.n_max);
        AdamState adam = init_adam(state.generator, acfg);
        train_denoiser(state.generator, denoiser_spec(cfg), sched, start_data, steps,
                       cfg.batch_size, adam, rng);

        const PairSet transitions = build_transition_pairs(dataset);
        train_mse(state.dynamics, transitions, cfg.epochs_replay, cfg.batch_size, cfg.lr_gen,
                  rng);
        return;
    }

    const bool timestep_cond = !(state.kind == Strategy::Dgr && cfg.dgr_unconditional);
    const DenoiseDataset data = build_denoise_data(dataset, cfg.n_max);
    AdamState adam = init_adam(state.generator, acfg);
    train_denoiser(state.generator, denoiser_spec(cfg, timestep_cond), sched, data, steps,
                   cfg.batch_size, adam, rng);
}

}  // namespace

void train_on_bucket(Strategy kind, StrategyState& state, const StreamBucket& bucket,
                     const ReplayConfig& cfg, Rng& rng) {
    cfg.validate();
    if (bucket.trajectories.empty()) {
        std::fprintf(stderr, "warning: empty bucket %d ignored\n", bucket.index);
        return;
    }
    for (const Trajectory& t : bucket.trajectories)
        state.l_max = std::max(state.l_max, t.length());

    // Replay is generated with the models as they stood after the previous
    // bucket, before any training on the current one.
    state.last_replay.clear();
    std::vector<Trajectory>& replay = state.last_replay;
    if (uses_generator(kind) && state.task_count >= 1) {
        const long n = replay_count(cfg.replay_ratio,
                                    static_cast<long>(bucket.trajectories.size()));
        const int exclude = dominant_task(bucket);
        if (n > 0) {
            if (kind == Strategy::Tdgr)
                replay = tdgr_generate_replay(state, n, cfg, rng, exclude);
            else if (kind == Strategy::Dgr)
                replay = dgr_generate_replay(state, n * static_cast<long>(state.l_max), cfg,
                                             rng, exclude);
            else
                replay = cril_generate_replay(state, n, cfg, rng, exclude);
        }
    }

    switch (kind) {
        case Strategy::Finetune: {
            const PairSet pairs = build_policy_pairs(bucket.trajectories, cfg.n_max);
            train_mse(state.policy, pairs, cfg.epochs, cfg.batch_size, cfg.lr_policy, rng);
            break;
        }
        case Strategy::Multitask: {
            state.store.insert(state.store.end(), bucket.trajectories.begin(),
                               bucket.trajectories.end());
            const PairSet pairs = build_policy_pairs(state.store, cfg.n_max);
            train_mse(state.policy, pairs, cfg.epochs, cfg.batch_size, cfg.lr_policy, rng);
            break;
        }
        case Strategy::Oewc:
            oewc_update(state, bucket, cfg, rng);
            break;
        case Strategy::Packnet:
            packnet_update(state, bucket, cfg, rng);
            break;
        case Strategy::Dgr:
        case Strategy::Cril:
        case Strategy::Tdgr: {
            std::vector<Trajectory> dataset = bucket.trajectories;
            dataset.insert(dataset.end(), replay.begin(), replay.end());
            const PairSet pairs = build_policy_pairs(dataset, cfg.n_max);
            const int epochs = kind == Strategy::Dgr ? cfg.epochs : cfg.epochs_replay;
            train_mse(state.policy, pairs, epochs, cfg.batch_size, cfg.lr_policy, rng);
            train_generators(state, dataset, cfg, rng);
            break;
        }
    }

    for (const Trajectory& t : bucket.trajectories) {
        auto it = std::lower_bound(state.seen_task_ids.begin(), state.seen_task_ids.end(),
                                   t.task_id);
        if (it == state.seen_task_ids.end() || *it != t.task_id)
            state.seen_task_ids.insert(it, t.task_id);
    }
    state.task_count += 1;
}

namespace {

void save_grads(const NetGrads& g, const std::vector<int>& sizes, const std::string& path) {
    DenseNet shell;
    shell.layer_sizes = sizes;
    shell.w = g.w;
    shell.b = g.b;
    save_net(shell, path);
}

NetGrads load_grads(const std::string& path) {
    const DenseNet shell = load_net(path);
    NetGrads g;
    g.w = shell.w;
    g.b = shell.b;
    return g;
}

}  // namespace

void save_strategy(const StrategyState& state, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json man;
    man["strategy"] = to_string(state.kind);
    man["task_count"] = state.task_count;
    man["l_max"] = state.l_max;
    man["seen_task_ids"] = state.seen_task_ids;
    man["has_generator"] = state.has_generator;
    man["has_dynamics"] = state.has_dynamics;
    man["packnet_consolidations"] = state.packnet.consolidations;
    man["oewc_has_anchor"] = state.oewc.has_anchor;

    save_net(state.policy, dir + "/policy.net");
    if (state.has_generator) save_net(state.generator, dir + "/generator.net");
    if (state.has_dynamics) save_net(state.dynamics, dir + "/dynamics.net");
    if (state.kind == Strategy::Oewc && state.oewc.has_anchor) {
        save_net(state.oewc.anchor, dir + "/oewc_anchor.net");
        save_grads(state.oewc.fisher, state.policy.layer_sizes, dir + "/oewc_fisher.net");
    }
    if (state.kind == Strategy::Packnet) {
        std::ofstream f(dir + "/masks.bin", std::ios::binary);
        for (const auto& layer : state.packnet.mask)
            f.write(reinterpret_cast<const char*>(layer.data()),
                    static_cast<std::streamsize>(layer.size() * sizeof(int)));
        if (!f) throw std::runtime_error("save_strategy: cannot write masks");
    }
    std::ofstream mf(dir + "/manifest.json");
    mf << man.dump(2) << "\n";
    if (!mf) throw std::runtime_error("save_strategy: cannot write manifest");
}

StrategyState load_strategy(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("load_strategy: missing manifest in " + dir);
    nlohmann::json man = nlohmann::json::parse(mf);

    StrategyState state;
    state.kind = strategy_from_string(man.at("strategy").get<std::string>());
    state.task_count = man.at("task_count").get<int>();
    state.l_max = man.at("l_max").get<int>();
    state.seen_task_ids = man.at("seen_task_ids").get<std::vector<int>>();
    state.has_generator = man.at("has_generator").get<bool>();
    state.has_dynamics = man.at("has_dynamics").get<bool>();

    state.policy = load_net(dir + "/policy.net");
    if (state.has_generator) state.generator = load_net(dir + "/generator.net");
    if (state.has_dynamics) state.dynamics = load_net(dir + "/dynamics.net");
    if (state.kind == Strategy::Oewc) {
        state.oewc.has_anchor = man.at("oewc_has_anchor").get<bool>();
        state.oewc.fisher = zero_grads_like(state.policy);
        if (state.oewc.has_anchor) {
            state.oewc.anchor = load_net(dir + "/oewc_anchor.net");
            state.oewc.fisher = load_grads(dir + "/oewc_fisher.net");
        }
    }
    if (state.kind == Strategy::Packnet) {
        state.packnet.consolidations = man.at("packnet_consolidations").get<int>();
        std::ifstream f(dir + "/masks.bin", std::ios::binary);
        if (!f) throw std::runtime_error("load_strategy: missing masks in " + dir);
        for (const Mat& w : state.policy.w) {
            std::vector<int> layer(w.a.size());
            f.read(reinterpret_cast<char*>(layer.data()),
                   static_cast<std::streamsize>(layer.size() * sizeof(int)));
            state.packnet.mask.push_back(std::move(layer));
        }
        if (!f) throw std::runtime_error("load_strategy: truncated masks in " + dir);
    }
    return state;
}

}  // namespace rb

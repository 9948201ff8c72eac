#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "replaybench/methods.hpp"

using namespace rb;

namespace {

ReplayConfig tiny_cfg(int n_max = 2) {
    ReplayConfig cfg;
    cfg.replay_ratio = 0.5;
    cfg.epochs = 2;
    cfg.epochs_replay = 2;
    cfg.batch_size = 8;
    cfg.gen_steps = 30;
    cfg.gen_warmup_steps = 0;
    cfg.diffusion_steps = 6;
    cfg.embed_dim = 8;
    cfg.policy_hidden = {16, 16};
    cfg.denoiser_hidden = {16};
    cfg.dynamics_hidden = {16};
    cfg.retrain_epochs = 1;
    cfg.n_max = n_max;
    return cfg;
}

Trajectory line_traj(int task, int len, double x0 = 0.1) {
    Trajectory t;
    t.task_id = task;
    for (int j = 1; j <= len; ++j)
        t.steps.push_back({{x0 + 0.01 * j, 0.5}, {0.01, 0.0}, j});
    return t;
}

StreamBucket bucket_of(int index, std::vector<Trajectory> trajs) {
    StreamBucket b;
    b.index = index;
    b.trajectories = std::move(trajs);
    return b;
}

}  // namespace

TEST_CASE("replay_count follows round(r|D|/(1-r))") {
    CHECK(replay_count(0.9, 100) == 900);
    CHECK(replay_count(0.0, 1234) == 0);
    CHECK(replay_count(0.5, 10) == 10);
    CHECK(replay_count(0.7, 50) == 117);  // 116.67 rounds to nearest
    CHECK_THROWS_AS(replay_count(1.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(replay_count(-0.1, 10), std::invalid_argument);
}

TEST_CASE("config validation rejects bad ratios") {
    ReplayConfig cfg = tiny_cfg();
    cfg.replay_ratio = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("t-DGR replay covers every timestep exactly n times") {
    const ReplayConfig cfg = tiny_cfg();
    StrategyState st = init_strategy(Strategy::Tdgr, cfg, 1);
    st.task_count = 1;
    st.seen_task_ids = {1};
    st.l_max = 20;
    Rng rng = make_rng(3);

    SUBCASE("n = 0 yields nothing") {
        CHECK(tdgr_generate_replay(st, 0, cfg, rng).empty());
    }
    SUBCASE("n = 2 covers each slot twice") {
        const auto replay = tdgr_generate_replay(st, 2, cfg, rng);
        REQUIRE(replay.size() == 2);
        for (const Trajectory& t : replay) {
            CHECK(t.length() == 20);
            CHECK(t.task_id == 1);
            for (int j = 0; j < 20; ++j) {
                CHECK(t.steps[j].timestep == j + 1);
                CHECK(std::isfinite(t.steps[j].state[0]));
                CHECK(std::isfinite(t.steps[j].action[0]));
            }
        }
        REQUIRE(st.gen_stats.per_timestep.size() == 20);
        for (long c : st.gen_stats.per_timestep) CHECK(c == 2);
        CHECK(st.gen_stats.total == 40);
    }
    SUBCASE("before any training the call is rejected") {
        StrategyState fresh = init_strategy(Strategy::Tdgr, cfg, 2);
        CHECK_THROWS_AS(tdgr_generate_replay(fresh, 1, cfg, rng), NoPreviousModel);
    }
}

TEST_CASE("DGR replay draws timesteps i.i.d.") {
    const ReplayConfig cfg = tiny_cfg();
    StrategyState st = init_strategy(Strategy::Dgr, cfg, 5);
    st.task_count = 1;
    st.seen_task_ids = {1};
    st.l_max = 200;
    Rng rng = make_rng(17);

    SUBCASE("n = 0 yields nothing") {
        CHECK(dgr_generate_replay(st, 0, cfg, rng).empty());
    }
    SUBCASE("budget equality with t-DGR") {
        const long n = replay_count(0.5, 10);
        const auto replay = dgr_generate_replay(st, n * st.l_max, cfg, rng);
        CHECK(static_cast<long>(replay.size()) == n * st.l_max);
        CHECK(st.gen_stats.total == n * st.l_max);
        for (const Trajectory& t : replay) CHECK(t.length() == 1);
    }
    SUBCASE("uncovered fraction of 200 draws over 200 slots is about (1-1/200)^200") {
        // exact binomial expectation, cross-checked by simulation
        const double expect = std::pow(1.0 - 1.0 / 200.0, 200);
        CHECK(expect == doctest::Approx(0.3668).epsilon(1e-3));
        double frac_sum = 0.0;
        const int reps = 25;
        for (int rep = 0; rep < reps; ++rep) {
            dgr_generate_replay(st, 200, cfg, rng);
            int uncovered = 0;
            for (long c : st.gen_stats.per_timestep)
                if (c == 0) ++uncovered;
            frac_sum += uncovered / 200.0;
        }
        CHECK(std::abs(frac_sum / reps - expect) < 0.03);
    }
}

TEST_CASE("autoregression core") {
    SUBCASE("identity dynamics give constant trajectories") {
        const auto trajs = autoregress_trajectories(
            {{0.2, 0.3}}, {1}, 10, [](Vec2, int) { return Vec2{0.05, 0.0}; },
            [](Vec2 s, Vec2, int, int) { return s; });
        REQUIRE(trajs.size() == 1);
        CHECK(trajs[0].length() == 10);
        for (const TrajStep& s : trajs[0].steps) {
            CHECK(s.state == Vec2{0.2, 0.3});
            CHECK(s.action == Vec2{0.05, 0.0});
        }
    }
    SUBCASE("empty starts give nothing") {
        CHECK(autoregress_trajectories({}, {}, 5, nullptr, nullptr).empty());
    }
    SUBCASE("1% per-step deviation compounds to about 0.87 by step 200") {
        Rng rng = make_rng(23);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int n = 4000;
        std::vector<Vec2> starts(n, Vec2{0.0, 0.0});
        std::vector<int> tasks(n, 1);
        std::vector<char> off(n, 0);
        const auto trajs = autoregress_trajectories(
            starts, tasks, 200, [](Vec2, int) { return Vec2{0.0, 0.0}; },
            [&](Vec2 s, Vec2, int i, int) -> Vec2 {
                if (off[i] || unit(rng) < 0.01) {
                    off[i] = 1;
                    return {9.0, 9.0};  // clearly off course
                }
                return s;
            });
        int deviated = 0;
        for (int i = 0; i < n; ++i)
            if (off[i]) ++deviated;
        const double frac = static_cast<double>(deviated) / n;
        CHECK(frac == doctest::Approx(0.87).epsilon(0.03));
    }
}

TEST_CASE("CRIL replay runs the full pipeline") {
    const ReplayConfig cfg = tiny_cfg();
    StrategyState st = init_strategy(Strategy::Cril, cfg, 9);
    st.task_count = 1;
    st.seen_task_ids = {1};
    st.l_max = 12;
    Rng rng = make_rng(2);
    const auto replay = cril_generate_replay(st, 3, cfg, rng);
    REQUIRE(replay.size() == 3);
    for (const Trajectory& t : replay) {
        CHECK(t.length() == 12);
        CHECK(t.task_id == 1);
    }
    CHECK(cril_generate_replay(st, 0, cfg, rng).empty());
}

TEST_CASE("oEWC penalty math") {
    const ReplayConfig cfg = tiny_cfg();

    SUBCASE("anchor equals parameters: zero penalty") {
        StrategyState st = init_strategy(Strategy::Oewc, cfg, 3);
        st.oewc.anchor = st.policy;
        st.oewc.has_anchor = true;
        for (auto& m : st.oewc.fisher.w)
            for (auto& v : m.a) v = 1.0;
        CHECK(oewc_penalty(st, 100.0) == doctest::Approx(0.0));
    }
    SUBCASE(" F=1, lambda=100, single parameter offset 0.1 gives 0.5") {
        ReplayConfig one = tiny_cfg(1);
        one.policy_hidden = {};
        StrategyState st = init_strategy(Strategy::Oewc, one, 3);
        // policy is a single affine layer (3 inputs -> 2 outputs)
        st.oewc.anchor = st.policy;
        st.oewc.has_anchor = true;
        st.oewc.fisher = zero_grads_like(st.policy);
        st.oewc.fisher.w[0](0, 0) = 1.0;
        st.policy.w[0](0, 0) = st.oewc.anchor.w[0](0, 0) + 0.1;
        CHECK(oewc_penalty(st, 100.0) == doctest::Approx(0.5));
    }
    SUBCASE("fisher of a perfectly fitting model is zero") {
        DenseNet zero = init_net({2, 2}, 1);
        for (auto& w : zero.w) w.zero();
        PairSet data;
        data.x.resize(4, 2);
        data.y.resize(4, 2);
        Rng rng = make_rng(1);
        for (auto& v : data.x.a) v = gauss(rng);
        data.y.zero();  // zero net predicts exactly zero
        const NetGrads f = fisher_diag(zero, data);
        for (const auto& m : f.w)
            for (double v : m.a) CHECK(v == doctest::Approx(0.0));
    }
    SUBCASE("consolidation zeroes the penalty immediately") {
        StrategyState st = init_strategy(Strategy::Oewc, cfg, 4);
        const StreamBucket b = bucket_of(1, {line_traj(1, 8), line_traj(1, 8, 0.3)});
        Rng rng = make_rng(5);
        oewc_update(st, b, cfg, rng);
        CHECK(st.oewc.has_anchor);
        CHECK(oewc_penalty(st, cfg.fisher_lambda) == doctest::Approx(0.0));
    }
}

TEST_CASE("PackNet pruning arithmetic and freeze contracts") {
    // single 10x10 weight layer = 100 weights
    ReplayConfig cfg = tiny_cfg(10);
    cfg.policy_hidden = {};
    cfg.epochs = 1;
    cfg.retrain_epochs = 1;
    // 12 inputs (2 + 10 one-hot) x 2 outputs = 24 weights is too few; build
    // the 100-weight example directly instead.
    StrategyState st;
    st.kind = Strategy::Packnet;
    st.policy = init_net({10, 10}, 7);
    st.packnet.mask.emplace_back(100, 0);

    // fake consolidation 1: keep = ceil(0.25 * 100) = 25
    {
        std::vector<size_t> idx(100);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return std::abs(st.policy.w[0].a[a]) > std::abs(st.policy.w[0].a[b]);
        });
        for (int k = 0; k < 25; ++k) st.packnet.mask[0][idx[k]] = 1;
        st.packnet.consolidations = 1;
    }
    CHECK(st.packnet.free_weights() == 75);

    SUBCASE("task 2 trains 75 free weights and keeps ceil(0.25*75) = 19") {
        ReplayConfig c2 = tiny_cfg(10);
        c2.epochs = 1;
        c2.retrain_epochs = 1;
        // build a compatible bucket: inputs are 10-dim here, so train through
        // the internal helpers instead of trajectories
        const DenseNet before = st.policy;
        PairSet data;
        data.x.resize(16, 10);
        data.y.resize(16, 10);
        Rng rng = make_rng(8);
        for (auto& v : data.x.a) v = gauss(rng);
        for (auto& v : data.y.a) v = 0.1 * gauss(rng);

        // emulate packnet_update's phases on raw pairs
        auto hook0 = [&](const DenseNet&, NetGrads& g) {
            for (size_t k = 0; k < g.w[0].a.size(); ++k)
                if (st.packnet.mask[0][k] != 0) g.w[0].a[k] = 0.0;
            std::fill(g.b[0].begin(), g.b[0].end(), 0.0);
        };
        train_mse(st.policy, data, 2, 8, 1e-3, rng, hook0);

        // frozen weights did not move
        for (size_t k = 0; k < 100; ++k)
            if (st.packnet.mask[0][k] == 1)
                CHECK(st.policy.w[0].a[k] == before.w[0].a[k]);

        // prune step arithmetic
        std::vector<size_t> free_idx;
        for (size_t k = 0; k < 100; ++k)
            if (st.packnet.mask[0][k] == 0) free_idx.push_back(k);
        CHECK(free_idx.size() == 75);
        const long keep = static_cast<long>(std::ceil(0.25 * 75));
        CHECK(keep == 19);
    }
}

TEST_CASE("PackNet via train_on_bucket: masks, eval independence, capacity") {
    ReplayConfig cfg = tiny_cfg(2);
    cfg.policy_hidden = {6};
    cfg.epochs = 2;
    cfg.retrain_epochs = 1;
    StrategyState st = init_strategy(Strategy::Packnet, cfg, 3);
    Rng rng = make_rng(4);

    train_on_bucket(Strategy::Packnet, st, bucket_of(1, {line_traj(1, 10)}), cfg, rng);
    CHECK(st.packnet.consolidations == 1);
    const DenseNet after1 = st.policy;
    std::vector<std::vector<int>> mask1 = st.packnet.mask;

    train_on_bucket(Strategy::Packnet, st, bucket_of(2, {line_traj(2, 10)}), cfg, rng);
    CHECK(st.packnet.consolidations == 2);

    SUBCASE("weights frozen for task 1 are bit-identical after task 2") {
        for (size_t l = 0; l < st.policy.w.size(); ++l)
            for (size_t k = 0; k < st.policy.w[l].a.size(); ++k)
                if (mask1[l][k] == 1)
                    CHECK(st.policy.w[l].a[k] == after1.w[l].a[k]);
    }
    SUBCASE("task-1 evaluation ignores weights owned by task 2") {
        DenseNet view1 = masked_policy(st, 1);
        StrategyState poked = st;
        for (size_t l = 0; l < poked.policy.w.size(); ++l)
            for (size_t k = 0; k < poked.policy.w[l].a.size(); ++k)
                if (poked.packnet.mask[l][k] == 2) poked.policy.w[l].a[k] = 99.0;
        DenseNet view1_poked = masked_policy(poked, 1);
        const std::vector<double> x{0.3, 0.4, 1.0, 0.0};
        CHECK(forward(view1, x) == forward(view1_poked, x));
    }
    SUBCASE("capacity exhausts on a deliberately tiny net") {
        ReplayConfig tiny = tiny_cfg(2);
        tiny.policy_hidden = {};
        tiny.epochs = 1;
        tiny.retrain_epochs = 1;
        StrategyState small = init_strategy(Strategy::Packnet, tiny, 6);
        bool threw = false;
        for (int task = 1; task <= 12 && !threw; ++task) {
            try {
                train_on_bucket(Strategy::Packnet, small,
                                bucket_of(task, {line_traj(1 + (task % 2), 6)}), tiny, rng);
            } catch (const CapacityExhausted&) {
                threw = true;
            }
        }
        CHECK(threw);
    }
}

TEST_CASE("train_on_bucket per-strategy contracts") {
    const ReplayConfig cfg = tiny_cfg(2);
    Rng rng = make_rng(6);

    SUBCASE("finetune: no generator, policy updated, no replay") {
        StrategyState st = init_strategy(Strategy::Finetune, cfg, 7);
        const DenseNet before = st.policy;
        train_on_bucket(Strategy::Finetune, st, bucket_of(1, {line_traj(2, 10)}), cfg, rng);
        CHECK_FALSE(st.has_generator);
        CHECK(st.last_replay.empty());
        CHECK(st.policy.w[0].a != before.w[0].a);
        CHECK(st.seen_task_ids == std::vector<int>{2});
        CHECK(st.task_count == 1);
        CHECK(st.l_max == 10);
    }
    SUBCASE("empty bucket is a warned no-op") {
        StrategyState st = init_strategy(Strategy::Finetune, cfg, 7);
        train_on_bucket(Strategy::Finetune, st, bucket_of(1, {}), cfg, rng);
        CHECK(st.task_count == 0);
    }
    SUBCASE("multitask accumulates all buckets") {
        StrategyState st = init_strategy(Strategy::Multitask, cfg, 8);
        train_on_bucket(Strategy::Multitask, st, bucket_of(1, {line_traj(1, 10)}), cfg, rng);
        train_on_bucket(Strategy::Multitask, st, bucket_of(2, {line_traj(2, 10)}), cfg, rng);
        CHECK(st.store.size() == 2);
        CHECK(st.seen_task_ids == std::vector<int>{1, 2});
    }
    SUBCASE("tdgr bucket 2 sees bucket + replay at the configured ratio") {
        StrategyState st = init_strategy(Strategy::Tdgr, cfg, 9);
        train_on_bucket(Strategy::Tdgr, st, bucket_of(1, {line_traj(1, 10), line_traj(1, 10)}),
                        cfg, rng);
        CHECK(st.last_replay.empty());  // nothing to replay at t = 1
        train_on_bucket(Strategy::Tdgr, st, bucket_of(2, {line_traj(2, 10), line_traj(2, 10)}),
                        cfg, rng);
        // r = 0.5, |D| = 2 -> 2 generated trajectories of length l_max
        CHECK(st.last_replay.size() == 2);
        for (const Trajectory& t : st.last_replay) {
            CHECK(t.task_id == 1);  // only past task available
            CHECK(t.length() == 10);
        }
        CHECK(st.gen_stats.total == 2 * 10);
    }
    SUBCASE("replay is labeled by the pre-update policy (generator lineage)") {
        StrategyState st = init_strategy(Strategy::Tdgr, cfg, 10);
        train_on_bucket(Strategy::Tdgr, st, bucket_of(1, {line_traj(1, 10)}), cfg, rng);
        const DenseNet prev_policy = st.policy;
        train_on_bucket(Strategy::Tdgr, st, bucket_of(2, {line_traj(2, 10)}), cfg, rng);
        REQUIRE_FALSE(st.last_replay.empty());
        std::vector<double> in(2 + cfg.n_max, 0.0);
        for (const Trajectory& t : st.last_replay)
            for (const TrajStep& s : t.steps) {
                in[0] = s.state[0];
                in[1] = s.state[1];
                fill_onehot(t.task_id, cfg.n_max, in.data() + 2);
                const std::vector<double> a = forward(prev_policy, in);
                CHECK(s.action[0] == doctest::Approx(a[0]).epsilon(1e-12));
                CHECK(s.action[1] == doctest::Approx(a[1]).epsilon(1e-12));
            }
    }
}

TEST_CASE("strategy checkpoints round-trip") {
    namespace fs = std::filesystem;
    const ReplayConfig cfg = tiny_cfg(2);
    Rng rng = make_rng(12);
    const auto dir = fs::temp_directory_path() / "rb_strategy_ckpt";
    fs::remove_all(dir);

    for (Strategy kind : {Strategy::Finetune, Strategy::Oewc, Strategy::Packnet,
                          Strategy::Tdgr, Strategy::Cril}) {
        StrategyState st = init_strategy(kind, cfg, 13);
        train_on_bucket(kind, st, bucket_of(1, {line_traj(1, 8)}), cfg, rng);
        const std::string d = (dir / to_string(kind)).string();
        save_strategy(st, d);
        const StrategyState back = load_strategy(d);
        CHECK(back.kind == st.kind);
        CHECK(back.task_count == st.task_count);
        CHECK(back.l_max == st.l_max);
        CHECK(back.seen_task_ids == st.seen_task_ids);
        for (size_t l = 0; l < st.policy.w.size(); ++l)
            CHECK(back.policy.w[l].a == st.policy.w[l].a);
        if (st.has_generator)
            for (size_t l = 0; l < st.generator.w.size(); ++l)
                CHECK(back.generator.w[l].a == st.generator.w[l].a);
        if (st.has_dynamics)
            for (size_t l = 0; l < st.dynamics.w.size(); ++l)
                CHECK(back.dynamics.w[l].a == st.dynamics.w[l].a);
        if (kind == Strategy::Packnet) CHECK(back.packnet.mask == st.packnet.mask);
        if (kind == Strategy::Oewc && st.oewc.has_anchor) {
            for (size_t l = 0; l < st.oewc.fisher.w.size(); ++l)
                CHECK(back.oewc.fisher.w[l].a == st.oewc.fisher.w[l].a);
        }
    }
    fs::remove_all(dir);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "replaybench/metrics.hpp"

using namespace rb;

namespace {
SuccessMatrix matrix_from(const std::vector<std::vector<double>>& rows) {
    SuccessMatrix m;
    m.n_tasks = static_cast<int>(rows.size());
    m.n_checkpoints = static_cast<int>(rows[0].size());
    m.s.resize(m.n_tasks, m.n_checkpoints);
    for (int i = 0; i < m.n_tasks; ++i)
        for (int t = 0; t < m.n_checkpoints; ++t) m.s(i, t) = rows[i][t];
    m.first_bucket.resize(m.n_tasks);
    for (int i = 0; i < m.n_tasks; ++i) m.first_bucket[i] = i + 1;
    return m;
}
}  // namespace

TEST_CASE("avg_success examples") {
    SuccessMatrix m = matrix_from({{0, 1}, {0, 0}, {0, 1}, {0, 0}});
    CHECK(avg_success(m) == doctest::Approx(0.5));
    m = matrix_from({{1, 1}, {1, 1}});
    CHECK(avg_success(m) == doctest::Approx(1.0));
    m = matrix_from({{0.1, 0.73}});
    CHECK(avg_success(m) == doctest::Approx(0.73));
}

TEST_CASE("forward_transfer formula") {
    SUBCASE("worked example") {
        SuccessMatrix m = matrix_from({{0.1, 0.9}});
        m.s_ref = {0.96};
        const PerTaskMetric ft = forward_transfer(m);
        CHECK(ft.per_task[0] == doctest::Approx(0.0384615).epsilon(1e-4));
    }
    SUBCASE("algebraic identity when the curve is flat at s_ref") {
        const double ref = 0.8;
        SuccessMatrix m = matrix_from({{ref, ref}});
        m.s_ref = {ref};
        const PerTaskMetric ft = forward_transfer(m);
        CHECK(ft.per_task[0] == doctest::Approx((ref - ref / 2) / (1.0 - ref / 2)));
    }
    SUBCASE("zero policy has negative transfer when s_ref > 0") {
        SuccessMatrix m = matrix_from({{0.0, 0.0}});
        m.s_ref = {0.9};
        CHECK(forward_transfer(m).per_task[0] < 0.0);
    }
    SUBCASE("missing references throw") {
        SuccessMatrix m = matrix_from({{0.1, 0.9}});
        CHECK_THROWS(forward_transfer(m));
    }
}

TEST_CASE("forgetting formula") {
    SUBCASE("worked example") {
        SuccessMatrix m = matrix_from({{0, 0.9, 0.7}});
        CHECK(forgetting(m).per_task[0] == doctest::Approx(0.2));
    }
    SUBCASE("no forgetting") {
        SuccessMatrix m = matrix_from({{0, 0.9, 0.9}});
        CHECK(forgetting(m).mean == doctest::Approx(0.0));
    }
    SUBCASE("backward transfer is negative and allowed") {
        SuccessMatrix m = matrix_from({{0, 0.7, 0.8}});
        CHECK(forgetting(m).per_task[0] == doctest::Approx(-0.1));
    }
}

TEST_CASE("metrics are invariant under task permutation") {
    SuccessMatrix m = matrix_from({{0.0, 0.9, 0.5, 0.4},
                                   {0.1, 0.2, 0.8, 0.6},
                                   {0.0, 0.1, 0.3, 0.9}});
    m.s_ref = {0.9, 0.8, 0.95};

    // permute rows and keep first_bucket/ref aligned with each task
    SuccessMatrix p = m;
    const std::vector<int> perm{2, 0, 1};
    for (int i = 0; i < 3; ++i) {
        for (int t = 0; t < 4; ++t) p.s(i, t) = m.s(perm[i], t);
        p.s_ref[i] = m.s_ref[perm[i]];
        p.first_bucket[i] = m.first_bucket[perm[i]];
    }
    CHECK(avg_success(p) == doctest::Approx(avg_success(m)));
    CHECK(forgetting(p).mean == doctest::Approx(forgetting(m).mean));
    CHECK(forward_transfer(p).mean == doctest::Approx(forward_transfer(m).mean));
}

TEST_CASE("metric outputs stay in their analytic ranges") {
    Rng rng = make_rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        SuccessMatrix m;
        m.n_tasks = 4;
        m.n_checkpoints = 5;
        m.s.resize(4, 5);
        for (auto& v : m.s.a) v = unit(rng);
        m.first_bucket = {1, 2, 3, 4};
        m.s_ref = {unit(rng), unit(rng), unit(rng), unit(rng)};
        const double s = avg_success(m);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        for (double f : forgetting(m).per_task) {
            CHECK(f >= -1.0);
            CHECK(f <= 1.0);
        }
        for (double ft : forward_transfer(m).per_task) CHECK(ft <= 1.0);
    }
}

TEST_CASE("confidence_interval") {
    SUBCASE("all equal values collapse the interval") {
        const Interval ci = confidence_interval({0.4, 0.4, 0.4});
        CHECK(ci.mean == doctest::Approx(0.4));
        CHECK(ci.half_width == doctest::Approx(0.0));
    }
    SUBCASE("two-point interval uses t(0.95, 1)") {
        const Interval ci = confidence_interval({0.0, 1.0});
        CHECK(ci.mean == doctest::Approx(0.5));
        CHECK(ci.half_width == doctest::Approx(3.157).epsilon(1e-3));
    }
    SUBCASE("fewer than two values throw") {
        CHECK_THROWS(confidence_interval({0.5}));
    }
}

TEST_CASE("confidence_interval coverage is near its level") {
    Rng rng = make_rng(11);
    const double mu = 0.3, sd = 0.2;
    int covered = 0;
    const int trials = 3000;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> xs(5);
        for (auto& x : xs) x = mu + sd * gauss(rng);
        const Interval ci = confidence_interval(xs, 0.90);
        if (std::abs(ci.mean - mu) <= ci.half_width) ++covered;
    }
    const double rate = static_cast<double>(covered) / trials;
    CHECK(rate > 0.87);
    CHECK(rate < 0.93);
}

TEST_CASE("welch_t") {
    SUBCASE("identical samples") {
        const WelchResult r = welch_t({0.5, 0.6, 0.7}, {0.5, 0.6, 0.7});
        CHECK(r.t == doctest::Approx(0.0));
        CHECK(r.p == doctest::Approx(1.0));
    }
    SUBCASE("degenerate zero-variance samples are flagged") {
        const WelchResult r = welch_t({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
        CHECK(r.degenerate);
        CHECK(r.p == doctest::Approx(0.0));
        const WelchResult eq = welch_t({1.0, 1.0}, {1.0, 1.0});
        CHECK(eq.degenerate);
        CHECK(eq.t == 0.0);
        CHECK(eq.p == 1.0);
    }
    SUBCASE("separated samples are significant") {
        const WelchResult r = welch_t({2.1, 2.0, 1.9}, {1.0, 1.1, 0.9});
        CHECK(r.t == doctest::Approx(12.247).epsilon(1e-3));
        CHECK(r.dof == doctest::Approx(4.0).epsilon(1e-6));
        CHECK(r.p < 0.005);
    }
    SUBCASE("tiny samples throw") {
        CHECK_THROWS(welch_t({1.0}, {0.0, 0.1}));
    }
}

TEST_CASE("eval_success_matrix plumbing") {
    // Straight-line task solvable by a constant-action policy.
    TaskSpec task;
    task.task_id = 1;
    task.waypoints = {{0.2, 0.5}, {0.7, 0.5}};
    task.noise_sigma = 0.0;
    task.sigma_start = 0.0;
    const std::vector<TaskSpec> suite{task};

    DenseNet go = init_net({3, 2}, 1);
    for (auto& w : go.w) w.zero();
    go.b[0] = {task.step_size, 0.0};
    DenseNet stay = go;
    stay.b[0] = {0.0, 0.0};

    SUBCASE("perfect policy fills the matrix with ones") {
        const SuccessMatrix m = eval_success_matrix(
            suite, 1, 3, 20, 5, [&](int, int) { return go; });
        for (int t = 0; t < 3; ++t) CHECK(m.s(0, t) == doctest::Approx(1.0));
    }
    SUBCASE("zero policy fills the matrix with zeros") {
        const SuccessMatrix m = eval_success_matrix(
            suite, 1, 3, 20, 5, [&](int, int) { return stay; });
        for (int t = 0; t < 3; ++t) CHECK(m.s(0, t) == doctest::Approx(0.0));
    }
    SUBCASE("fixed seed reproduces the matrix exactly") {
        TaskSpec noisy = task;
        noisy.noise_sigma = 0.02;
        noisy.sigma_start = 0.02;
        const std::vector<TaskSpec> nsuite{noisy};
        const SuccessMatrix a = eval_success_matrix(
            nsuite, 1, 2, 50, 9, [&](int, int) { return go; });
        const SuccessMatrix b = eval_success_matrix(
            nsuite, 1, 2, 50, 9, [&](int, int) { return go; });
        CHECK(a.s.a == b.s.a);
    }
    SUBCASE("provider failure propagates as an evaluation error") {
        CHECK_THROWS(eval_success_matrix(suite, 1, 1, 5, 1, [&](int, int) -> DenseNet {
            throw std::runtime_error("missing checkpoint");
        }));
    }
}

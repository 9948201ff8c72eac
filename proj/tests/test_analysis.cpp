#include <doctest.h>

#include <cmath>

#include "replaybench/analysis.hpp"

using namespace rb;

TEST_CASE("coverage_sim: n = 1 needs exactly m draws") {
    for (int m : {1, 3, 10}) {
        const CoverageReport r = coverage_sim(1, m, 50, 1);
        CHECK(r.empirical_mean_draws == doctest::Approx(m));
    }
}

TEST_CASE("coverage_sim: coupon collector n = 2 mean is 3") {
    const CoverageReport r = coverage_sim(2, 1, 20000, 2);
    CHECK(r.analytic_reference == doctest::Approx(3.0));
    CHECK(std::abs(r.empirical_mean_draws - 3.0) < 0.1);
}

TEST_CASE("coverage_sim: n = 200 matches 200*H_200") {
    const CoverageReport r = coverage_sim(200, 1, 2000, 3);
    CHECK(r.analytic_reference == doctest::Approx(200.0 * harmonic(200)));
    CHECK(r.analytic_reference == doctest::Approx(1175.606).epsilon(1e-4));
    CHECK(std::abs(r.empirical_mean_draws - r.analytic_reference) <
          0.05 * r.analytic_reference);
}

TEST_CASE("coverage_sim: mean draws grow with n and m") {
    double prev_m = 0.0;
    for (int m : {1, 2, 5}) {
        const CoverageReport r = coverage_sim(50, m, 2000, 4);
        CHECK(r.empirical_mean_draws > prev_m);
        CHECK(r.empirical_mean_draws >= static_cast<double>(r.n) * r.m);
        prev_m = r.empirical_mean_draws;
    }
    double prev_n = 0.0;
    for (int n : {10, 50, 200}) {
        const CoverageReport r = coverage_sim(n, 2, 1000, 5);
        CHECK(r.empirical_mean_draws > prev_n);
        prev_n = r.empirical_mean_draws;
    }
}

TEST_CASE("drift_analytic values") {
    const double p = drift_analytic(0.01, 200);
    CHECK(std::round(p * 100.0) / 100.0 == doctest::Approx(0.87));
    CHECK(drift_analytic(0.3, 1) == doctest::Approx(0.3));
    CHECK(drift_analytic(0.0, 500) == 0.0);
    CHECK_THROWS(drift_analytic(-0.1, 10));
}

TEST_CASE("drift_sim edge cases and agreement with the closed form") {
    CHECK(drift_sim(1.0, 3, 100, 1) == doctest::Approx(1.0));
    CHECK(drift_sim(0.0, 3, 1, 1) == doctest::Approx(0.0));

    const int trials = 100000;
    const double analytic = drift_analytic(0.01, 200);
    const double sim = drift_sim(0.01, 200, trials, 7);
    const double se = std::sqrt(analytic * (1.0 - analytic) / trials);
    CHECK(std::abs(sim - analytic) < 3.0 * se);
}

TEST_CASE("coherence_check accepts real rollouts and rejects teleports") {
    const auto suite = make_task_suite(1, 5);
    const TaskSpec& task = suite[0];

    const auto demos = collect_demos(task, 5, 9);
    for (const Trajectory& d : demos) CHECK(coherence_check(d, task));

    Trajectory tele;
    tele.task_id = task.task_id;
    tele.steps = {{{0.1, 0.1}, {0, 0}, 1}, {{0.9, 0.9}, {0, 0}, 2},
                  {{0.1, 0.1}, {0, 0}, 3}};
    CHECK_FALSE(coherence_check(tele, task));

    CHECK_THROWS(coherence_check(Trajectory{1, {{{0, 0}, {0, 0}, 1}}}, task));
}

TEST_CASE("coherence_check with a noiseless transition model") {
    TaskSpec t;
    t.task_id = 1;
    t.waypoints = {{0.0, 0.0}, {1.0, 0.0}};
    t.noise_sigma = 0.0;
    t.action_max = 0.1;

    Trajectory reachable;
    reachable.steps = {{{0.0, 0.0}, {0, 0}, 1}, {{0.05, 0.0}, {0, 0}, 2}};
    CHECK(coherence_check(reachable, t));

    Trajectory too_far;
    too_far.steps = {{{0.0, 0.0}, {0, 0}, 1}, {{0.2, 0.0}, {0, 0}, 2}};
    CHECK_FALSE(coherence_check(too_far, t));
}

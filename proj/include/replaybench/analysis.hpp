#pragma once

#include <cstdint>

#include "replaybench/env.hpp"

namespace rb {

// Empirical draws needed until every one of n timesteps is hit m times,
// with the exact coupon-collector mean n*H_n attached when m == 1.
struct CoverageReport {
    int n = 0;
    int m = 0;
    int trials = 0;
    double empirical_mean_draws = 0.0;
    double analytic_reference = 0.0;  // NaN when no closed form is attached
};

struct CoherenceParams {
    double epsilon = 1e-6;  // negligible-probability threshold, in (0,1)
};

double harmonic(int n);

CoverageReport coverage_sim(int n, int m, int trials, std::uint64_t seed);

// 1 - (1 - p_step)^n: probability an n-step autoregressive chain has drifted.
double drift_analytic(double p_step, int n);

// Monte Carlo estimate of the same quantity.
double drift_sim(double p_step, int n, int trials, std::uint64_t seed);

// True iff every consecutive state pair admits an action in the admissible
// ball whose transition density exceeds epsilon. The best action for the
// additive-noise model is s' - s clamped to the ball, so the check is closed
// form. Noiseless tasks degenerate to exact reachability.
bool coherence_check(const Trajectory& traj, const TaskSpec& task,
                     const CoherenceParams& params = {});

}  // namespace rb

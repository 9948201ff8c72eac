#include "replaybench/analysis.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rb {

double harmonic(int n) {
    double h = 0.0;
    for (int k = 1; k <= n; ++k) h += 1.0 / k;
    return h;
}

CoverageReport coverage_sim(int n, int m, int trials, std::uint64_t seed) {
    if (n < 1 || m < 1 || trials < 1)
        throw std::invalid_argument("coverage_sim: n, m, trials must be >= 1");
    Rng rng = make_rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<int> counts(n);
    double total = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        std::fill(counts.begin(), counts.end(), 0);
        int uncovered = n;
        long draws = 0;
        while (uncovered > 0) {
            const int k = pick(rng);
            if (++counts[k] == m) --uncovered;
            ++draws;
        }
        total += static_cast<double>(draws);
    }
    CoverageReport rep;
    rep.n = n;
    rep.m = m;
    rep.trials = trials;
    rep.empirical_mean_draws = total / trials;
    rep.analytic_reference =
        m == 1 ? n * harmonic(n) : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

double drift_analytic(double p_step, int n) {
    if (p_step < 0.0 || p_step > 1.0)
        throw std::invalid_argument("drift_analytic: p_step must be in [0,1]");
    if (n < 0) throw std::invalid_argument("drift_analytic: n must be >= 0");
    return 1.0 - std::pow(1.0 - p_step, n);
}

double drift_sim(double p_step, int n, int trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("drift_sim: trials must be >= 1");
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    long off_course = 0;
    for (int trial = 0; trial < trials; ++trial) {
        for (int step = 0; step < n; ++step) {
            if (unit(rng) < p_step) {
                ++off_course;
                break;
            }
        }
    }
    return static_cast<double>(off_course) / trials;
}

bool coherence_check(const Trajectory& traj, const TaskSpec& task,
                     const CoherenceParams& params) {
    if (traj.length() < 2)
        throw std::invalid_argument("coherence_check: trajectory length must be >= 2");
    if (params.epsilon <= 0.0 || params.epsilon >= 1.0)
        throw std::invalid_argument("coherence_check: epsilon must be in (0,1)");

    const double sigma = task.noise_sigma;
    for (int i = 0; i + 1 < traj.length(); ++i) {
        const Vec2 delta = traj.steps[i + 1].state - traj.steps[i].state;
        Vec2 best = delta;
        const double dn = norm(delta);
        if (dn > task.action_max) best = (task.action_max / dn) * delta;
        const Vec2 resid = delta - best;
        const double r2 = resid[0] * resid[0] + resid[1] * resid[1];
        if (sigma == 0.0) {
            if (r2 > 1e-24) return false;
            continue;
        }
        const double density =
            std::exp(-r2 / (2.0 * sigma * sigma)) / (2.0 * 3.14159265358979323846 * sigma * sigma);
        if (!(density > params.epsilon)) return false;
    }
    return true;
}

}  // namespace rb

#include "replaybench/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace rb {

SuccessMatrix eval_success_matrix(const std::vector<TaskSpec>& suite, int n_max,
                                  int n_checkpoints, int n_eval, std::uint64_t seed,
                                  const PolicyProvider& provider) {
    if (n_eval < 1) throw std::invalid_argument("eval_success_matrix: n_eval must be >= 1");
    SuccessMatrix m;
    m.n_tasks = static_cast<int>(suite.size());
    m.n_checkpoints = n_checkpoints;
    m.s.resize(m.n_tasks, n_checkpoints);
    m.s.zero();
    m.first_bucket.resize(m.n_tasks);
    for (int i = 0; i < m.n_tasks; ++i) m.first_bucket[i] = i + 1;

    for (int t = 0; t < n_checkpoints; ++t) {
        for (int i = 0; i < m.n_tasks; ++i) {
            const DenseNet policy = provider(t, i);
            int wins = 0;
            for (int k = 0; k < n_eval; ++k) {
                const RolloutResult r =
                    rollout_policy(policy, suite[i], n_max, derive_seed(seed, i, t, k));
                if (r.success) ++wins;
            }
            m.s(i, t) = static_cast<double>(wins) / n_eval;
        }
    }
    return m;
}

double avg_success(const SuccessMatrix& m) {
    double acc = 0.0;
    for (int i = 0; i < m.n_tasks; ++i) acc += m.s(i, m.n_checkpoints - 1);
    return acc / m.n_tasks;
}

PerTaskMetric forward_transfer(const SuccessMatrix& m) {
    if (static_cast<int>(m.s_ref.size()) != m.n_tasks)
        throw std::invalid_argument("forward_transfer: s_ref not populated");
    PerTaskMetric out;
    out.per_task.resize(m.n_tasks);
    for (int i = 0; i < m.n_tasks; ++i) {
        const int b = m.first_bucket[i];
        const double d = 0.5 * (m.s(i, b) + m.s(i, b - 1));
        const double d_ref = 0.5 * m.s_ref[i];
        if (d_ref >= 1.0)
            throw std::domain_error("forward_transfer: reference denominator is zero");
        out.per_task[i] = (d - d_ref) / (1.0 - d_ref);
        out.mean += out.per_task[i];
    }
    out.mean /= m.n_tasks;
    return out;
}

PerTaskMetric forgetting(const SuccessMatrix& m) {
    PerTaskMetric out;
    out.per_task.resize(m.n_tasks);
    const int last = m.n_checkpoints - 1;
    for (int i = 0; i < m.n_tasks; ++i) {
        out.per_task[i] = m.s(i, m.first_bucket[i]) - m.s(i, last);
        out.mean += out.per_task[i];
    }
    out.mean /= m.n_tasks;
    return out;
}

namespace {
double sample_mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
}
}  // namespace

Interval confidence_interval(const std::vector<double>& values, double level) {
    const size_t n = values.size();
    if (n < 2) throw std::invalid_argument("confidence_interval: need at least 2 values");
    const double mean = sample_mean(values);
    const double sd = std::sqrt(sample_var(values, mean));
    boost::math::students_t dist(static_cast<double>(n - 1));
    const double q = boost::math::quantile(dist, 0.5 + level / 2.0);
    return {mean, q * sd / std::sqrt(static_cast<double>(n))};
}

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("welch_t: each sample needs at least 2 values");
    const double ma = sample_mean(a), mb = sample_mean(b);
    const double va = sample_var(a, ma), vb = sample_var(b, mb);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());

    WelchResult out;
    if (va == 0.0 && vb == 0.0) {
        out.degenerate = true;
        out.dof = na + nb - 2.0;
        if (ma == mb) {
            out.t = 0.0;
            out.p = 1.0;
        } else {
            out.t = ma > mb ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
            out.p = 0.0;
        }
        return out;
    }
    const double se2 = va / na + vb / nb;
    out.t = (ma - mb) / std::sqrt(se2);
    out.dof = se2 * se2 /
              (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    boost::math::students_t dist(out.dof);
    out.p = 2.0 * boost::math::cdf(dist, -std::abs(out.t));
    return out;
}

}  // namespace rb

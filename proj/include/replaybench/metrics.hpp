#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "replaybench/env.hpp"
#include "replaybench/mat.hpp"

namespace rb {

// Success-rate grid: s(i, t) = success rate of task row i evaluated with the
// checkpoint after bucket t; column 0 is the untrained policy. Rows usually
// correspond to suite tasks; for PackNet on repeated streams the caller maps
// rows to task occurrences instead.
struct SuccessMatrix {
    int n_tasks = 0;
    int n_checkpoints = 0;  // includes column 0
    Mat s;
    std::vector<double> s_ref;      // single-task reference rates, may be empty
    std::vector<int> first_bucket;  // 1-based column where row i was first trained

    double at(int task_row, int ckpt) const { return s(task_row, ckpt); }
};

// Supplies the evaluation policy for (checkpoint index, task row); throws if
// the checkpoint is missing. Lets strategy-specific masking (PackNet) stay on
// the caller's side.
using PolicyProvider = std::function<DenseNet(int ckpt, int task_row)>;

// Evaluates every (task row, checkpoint) cell with n_eval rollouts; rollout
// seeds are derived from (seed, row, ckpt, k) so the grid is reproducible and
// embarrassingly parallel.
SuccessMatrix eval_success_matrix(const std::vector<TaskSpec>& suite, int n_max,
                                  int n_checkpoints, int n_eval, std::uint64_t seed,
                                  const PolicyProvider& provider);

// Mean of the final column.
double avg_success(const SuccessMatrix& m);

struct PerTaskMetric {
    std::vector<double> per_task;
    double mean = 0.0;
};

// FT_i = (D_i - D_i_ref) / (1 - D_i_ref), D_i = (s_i(b_i) + s_i(b_i - 1))/2,
// D_i_ref = s_ref_i / 2, with b_i the task's first training bucket.
PerTaskMetric forward_transfer(const SuccessMatrix& m);

// F_i = s_i(b_i) - s_i(last). Negative values mean backward transfer.
PerTaskMetric forgetting(const SuccessMatrix& m);

struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

// Student-t confidence interval, default level 0.90.
Interval confidence_interval(const std::vector<double>& values, double level = 0.90);

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p = 1.0;
    bool degenerate = false;  // both samples had zero variance
};

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace rb

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "replaybench/net.hpp"
#include "replaybench/rng.hpp"

namespace rb {

using Vec2 = std::array<double, 2>;

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a[0], s * a[1]}; }
inline double norm(Vec2 a) { return std::sqrt(a[0] * a[0] + a[1] * a[1]); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

// One waypoint-following task: the MDP is s' = s + clamp(a) + noise with the
// goal of reaching the final waypoint.
struct TaskSpec {
    int task_id = 0;
    std::vector<Vec2> waypoints;
    double step_size = 0.05;
    double noise_sigma = 0.01;
    double success_radius = 0.1;  // rho, closed ball
    double sigma_start = 0.02;
    int horizon = 200;  // L
    double clearance = 0.15;
    double action_max = 0.1;  // admissible action ball

    Vec2 goal() const { return waypoints.back(); }
};

struct TrajStep {
    Vec2 state{};
    Vec2 action{};
    int timestep = 0;  // 1-based; equals the position for rolled-out data
};

struct Trajectory {
    int task_id = 0;
    std::vector<TrajStep> steps;

    int length() const { return static_cast<int>(steps.size()); }
};

struct StreamBucket {
    int index = 0;  // 1-based
    std::vector<Trajectory> trajectories;
};

enum class StreamMode { Sequential, Repeat, Blurry };
StreamMode stream_mode_from_string(const std::string& s);
std::string to_string(StreamMode m);

struct SuiteParams {
    int n_segments_min = 3;
    int n_segments_max = 6;
    double seg_len_min = 0.20;
    double seg_len_max = 0.45;
    double step_size = 0.05;
    double noise_sigma = 0.01;
    double success_radius = 0.1;
    double sigma_start = 0.02;
    int horizon = 200;
    double sharp_turn_min_deg = 95.0;
    double sharp_turn_max_deg = 140.0;
    double gentle_turn_max_deg = 70.0;
    double margin = 0.05;  // keep paths inside [margin, 1-margin]^2
    int max_tries = 20000;
};

struct TaskGenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic per seed. Every path has 3-6 segments, at least one turn
// sharper than 90 degrees, non-adjacent segment clearance >= 3*step_size, and
// is traversable by the noiseless expert well inside the horizon.
std::vector<TaskSpec> make_task_suite(int n_tasks, std::uint64_t seed,
                                      const SuiteParams& params = {});

// Noisy expert: unit direction toward the current target waypoint (the
// forward end of the nearest path segment) scaled by step_size, plus
// N(0, noise_sigma^2) exploration noise. Zero at the final waypoint.
Vec2 expert_action(const TaskSpec& task, Vec2 state, Rng& rng);

// Environment transition: clamp the action to the admissible ball, then add
// fresh Gaussian noise.
Vec2 env_step(const TaskSpec& task, Vec2 state, Vec2 action, Rng& rng);

bool is_success(const TaskSpec& task, const Trajectory& traj);
inline bool at_goal(const TaskSpec& task, Vec2 s) {
    return dist(s, task.goal()) <= task.success_radius;
}

// Shared rollout core. The policy callback sees the raw state; one-hot task
// conditioning is applied by the DenseNet overload below.
using ActFn = std::function<Vec2(Vec2, Rng&)>;
struct RolloutResult {
    Trajectory traj;
    bool success = false;
};
RolloutResult rollout_with(const ActFn& act, const TaskSpec& task, std::uint64_t seed,
                           bool stop_at_success, bool start_at_waypoint = false);

// Expert rollout over the full horizon (demos dwell at the goal after
// reaching it, so every trajectory timestep is populated).
Trajectory rollout_expert(const TaskSpec& task, std::uint64_t seed,
                          bool stop_at_success = false, bool start_at_waypoint = false);

// Expert rollouts resampled until successful (bounded retries).
std::vector<Trajectory> collect_demos(const TaskSpec& task, int count, std::uint64_t seed);

// Policy rollout; the net consumes [state, one-hot(task_id)] and is run until
// success or the horizon. Non-finite outputs abort the rollout as a failure.
RolloutResult rollout_policy(const DenseNet& policy, const TaskSpec& task, int n_max,
                             std::uint64_t seed);

void fill_onehot(int task_id, int n_max, double* out);

// Continual data stream. sequential: bucket i = task i. repeat: the suite
// twice with fresh demos. blurry: task demos split across adjacent buckets
// (first task entirely in bucket 1, last split over the final two).
std::vector<StreamBucket> make_stream(const std::vector<TaskSpec>& suite, int demos_per_task,
                                      StreamMode mode, std::uint64_t seed);

// Dominant task id of a bucket (most trajectories, ties to the smaller id).
int dominant_task(const StreamBucket& bucket);

// Persistence: suite as a JSON document, trajectories as JSON lines of
// {task_id, [[sx,sy,ax,ay], ...]}.
void save_suite(const std::vector<TaskSpec>& suite, const std::string& path);
std::vector<TaskSpec> load_suite(const std::string& path);
void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

}  // namespace rb

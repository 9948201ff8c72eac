#include "replaybench/env.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace rb {

namespace {
constexpr double kPi = 3.14159265358979323846;

double point_segment_dist2(Vec2 p, Vec2 a, Vec2 b, double* t_out = nullptr) {
    const Vec2 ab = b - a;
    const double len2 = ab[0] * ab[0] + ab[1] * ab[1];
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2;
        t = std::clamp(t, 0.0, 1.0);
    }
    const Vec2 q = a + t * ab;
    if (t_out) *t_out = t;
    const Vec2 d = p - q;
    return d[0] * d[0] + d[1] * d[1];
}

double segment_segment_dist(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
    // Segments in the suite never intersect (clearance is validated), so the
    // endpoint-to-segment minimum suffices.
    double d2 = point_segment_dist2(a0, b0, b1);
    d2 = std::min(d2, point_segment_dist2(a1, b0, b1));
    d2 = std::min(d2, point_segment_dist2(b0, a0, a1));
    d2 = std::min(d2, point_segment_dist2(b1, a0, a1));
    return std::sqrt(d2);
}

// Index of the segment holding the nearest path point, ties to the later
// segment so motion along the path is always forward.
int nearest_segment(const std::vector<Vec2>& wp, Vec2 p) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k + 1 < wp.size(); ++k) {
        const double d2 = point_segment_dist2(p, wp[k], wp[k + 1]);
        if (d2 <= best_d2) {
            best_d2 = d2;
            best = static_cast<int>(k);
        }
    }
    return best;
}

bool waypoints_valid(const std::vector<Vec2>& wp, const SuiteParams& pr) {
    for (const Vec2& p : wp)
        if (p[0] < pr.margin || p[0] > 1.0 - pr.margin || p[1] < pr.margin ||
            p[1] > 1.0 - pr.margin)
            return false;
    const double clear = 3.0 * pr.step_size;
    for (size_t i = 0; i + 1 < wp.size(); ++i)
        for (size_t j = i + 2; j + 1 < wp.size(); ++j)
            if (segment_segment_dist(wp[i], wp[i + 1], wp[j], wp[j + 1]) < clear) return false;
    // The goal region must only be reachable via the last segment, otherwise
    // success would trigger while traversing the middle of the path.
    const Vec2 goal = wp.back();
    const double keep_out = pr.success_radius + 3.0 * pr.step_size;
    for (size_t i = 0; i + 2 < wp.size(); ++i)
        if (std::sqrt(point_segment_dist2(goal, wp[i], wp[i + 1])) < keep_out) return false;
    if (dist(wp.front(), goal) < 0.3) return false;
    return true;
}

}  // namespace

StreamMode stream_mode_from_string(const std::string& s) {
    if (s == "sequential") return StreamMode::Sequential;
    if (s == "repeat") return StreamMode::Repeat;
    if (s == "blurry") return StreamMode::Blurry;
    throw std::invalid_argument("unknown stream mode: " + s);
}

std::string to_string(StreamMode m) {
    switch (m) {
        case StreamMode::Sequential: return "sequential";
        case StreamMode::Repeat: return "repeat";
        case StreamMode::Blurry: return "blurry";
    }
    return "?";
}

std::vector<TaskSpec> make_task_suite(int n_tasks, std::uint64_t seed,
                                      const SuiteParams& pr) {
    if (n_tasks < 1) throw std::invalid_argument("make_task_suite: n_tasks must be >= 1");
    std::vector<TaskSpec> suite;
    Rng rng = make_rng(derive_seed(seed, 0x5017eULL));

    std::uniform_int_distribution<int> nseg_dist(pr.n_segments_min, pr.n_segments_max);
    std::uniform_real_distribution<double> len_dist(pr.seg_len_min, pr.seg_len_max);
    std::uniform_real_distribution<double> ang_dist(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int id = 1; id <= n_tasks; ++id) {
        bool ok = false;
        for (int attempt = 0; attempt < pr.max_tries && !ok; ++attempt) {
            const int n_seg = nseg_dist(rng);
            const int sharp_at = std::uniform_int_distribution<int>(1, n_seg - 1)(rng);
            std::vector<Vec2> wp;
            const double lo = pr.margin + 0.15, hi = 1.0 - pr.margin - 0.15;
            wp.push_back({lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng)});
            double heading = ang_dist(rng);
            bool fits = true;
            for (int k = 0; k < n_seg; ++k) {
                if (k > 0) {
                    double turn;
                    if (k == sharp_at) {
                        turn = pr.sharp_turn_min_deg +
                               (pr.sharp_turn_max_deg - pr.sharp_turn_min_deg) * unit(rng);
                    } else {
                        turn = pr.gentle_turn_max_deg * unit(rng);
                    }
                    turn *= (unit(rng) < 0.5 ? -1.0 : 1.0);
                    heading += turn * kPi / 180.0;
                }
                const double len = len_dist(rng);
                const Vec2 next = wp.back() + len * Vec2{std::cos(heading), std::sin(heading)};
                if (next[0] < pr.margin || next[0] > 1.0 - pr.margin || next[1] < pr.margin ||
                    next[1] > 1.0 - pr.margin) {
                    fits = false;
                    break;
                }
                wp.push_back(next);
            }
            if (!fits || !waypoints_valid(wp, pr)) continue;

            TaskSpec task;
            task.task_id = id;
            task.waypoints = wp;
            task.step_size = pr.step_size;
            task.noise_sigma = pr.noise_sigma;
            task.success_radius = pr.success_radius;
            task.sigma_start = pr.sigma_start;
            task.horizon = pr.horizon;
            task.clearance = 3.0 * pr.step_size;
            task.action_max = 2.0 * pr.step_size;

            // The noiseless expert must finish comfortably inside the horizon.
            TaskSpec probe = task;
            probe.noise_sigma = 0.0;
            const RolloutResult r = rollout_with(
                [&probe](Vec2 s, Rng& rr) { return expert_action(probe, s, rr); }, probe,
                /*seed=*/1, /*stop_at_success=*/true, /*start_at_waypoint=*/true);
            if (!r.success || r.traj.length() > (8 * task.horizon) / 10) continue;

            suite.push_back(std::move(task));
            ok = true;
        }
        if (!ok)
            throw TaskGenerationError("make_task_suite: no valid path for task " +
                                      std::to_string(id));
    }
    return suite;
}

Vec2 expert_action(const TaskSpec& task, Vec2 state, Rng& rng) {
    const int seg = nearest_segment(task.waypoints, state);
    const Vec2 target = task.waypoints[seg + 1];
    const Vec2 d = target - state;
    const double dn = norm(d);
    Vec2 a{0.0, 0.0};
    if (dn > 1e-12) a = (std::min(task.step_size, dn) / dn) * d;
    if (task.noise_sigma > 0.0) {
        a[0] += task.noise_sigma * gauss(rng);
        a[1] += task.noise_sigma * gauss(rng);
    }
    return a;
}

Vec2 env_step(const TaskSpec& task, Vec2 state, Vec2 action, Rng& rng) {
    const double an = norm(action);
    if (an > task.action_max) action = (task.action_max / an) * action;
    Vec2 next = state + action;
    if (task.noise_sigma > 0.0) {
        next[0] += task.noise_sigma * gauss(rng);
        next[1] += task.noise_sigma * gauss(rng);
    }
    return next;
}

bool is_success(const TaskSpec& task, const Trajectory& traj) {
    for (const TrajStep& st : traj.steps)
        if (at_goal(task, st.state)) return true;
    return false;
}

RolloutResult rollout_with(const ActFn& act, const TaskSpec& task, std::uint64_t seed,
                           bool stop_at_success, bool start_at_waypoint) {
    Rng rng = make_rng(seed);
    Vec2 s = task.waypoints.front();
    if (!start_at_waypoint && task.sigma_start > 0.0) {
        s[0] += task.sigma_start * gauss(rng);
        s[1] += task.sigma_start * gauss(rng);
    }
    RolloutResult out;
    out.traj.task_id = task.task_id;
    out.traj.steps.reserve(task.horizon);
    for (int j = 1; j <= task.horizon; ++j) {
        const Vec2 a = act(s, rng);
        if (!std::isfinite(a[0]) || !std::isfinite(a[1])) {
            out.success = false;
            return out;
        }
        out.traj.steps.push_back({s, a, j});
        if (at_goal(task, s)) {
            out.success = true;
            if (stop_at_success) return out;
        }
        s = env_step(task, s, a, rng);
    }
    return out;
}

Trajectory rollout_expert(const TaskSpec& task, std::uint64_t seed, bool stop_at_success,
                          bool start_at_waypoint) {
    return rollout_with([&task](Vec2 s, Rng& rng) { return expert_action(task, s, rng); },
                        task, seed, stop_at_success, start_at_waypoint)
        .traj;
}

std::vector<Trajectory> collect_demos(const TaskSpec& task, int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("collect_demos: count must be >= 1");
    constexpr int kMaxAttempts = 50;
    std::vector<Trajectory> demos;
    demos.reserve(count);
    for (int i = 0; i < count; ++i) {
        bool got = false;
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            Trajectory t = rollout_expert(task, derive_seed(seed, i, attempt));
            if (is_success(task, t)) {
                demos.push_back(std::move(t));
                got = true;
                break;
            }
        }
        if (!got)
            throw std::runtime_error("collect_demos: expert kept failing on task " +
                                     std::to_string(task.task_id));
    }
    return demos;
}

void fill_onehot(int task_id, int n_max, double* out) {
    if (task_id < 1 || task_id > n_max)
        throw ShapeError("fill_onehot: task_id " + std::to_string(task_id) +
                         " outside [1, " + std::to_string(n_max) + "]");
    std::fill(out, out + n_max, 0.0);
    out[task_id - 1] = 1.0;
}

RolloutResult rollout_policy(const DenseNet& policy, const TaskSpec& task, int n_max,
                             std::uint64_t seed) {
    if (policy.input_dim() != 2 + n_max)
        throw ShapeError("rollout_policy: policy input dim != state_dim + n_max");
    std::vector<double> input(2 + n_max, 0.0);
    fill_onehot(task.task_id, n_max, input.data() + 2);
    const auto act = [&](Vec2 s, Rng&) -> Vec2 {
        input[0] = s[0];
        input[1] = s[1];
        const std::vector<double> a = forward(policy, input);
        return {a[0], a[1]};
    };
    return rollout_with(act, task, seed, /*stop_at_success=*/true);
}

namespace {
// count split into parts of size floor or floor+1, leftovers go first.
std::vector<int> split_counts(int count, int parts) {
    std::vector<int> out(parts, count / parts);
    for (int i = 0; i < count % parts; ++i) out[i] += 1;
    return out;
}
}  // namespace

std::vector<StreamBucket> make_stream(const std::vector<TaskSpec>& suite, int demos_per_task,
                                      StreamMode mode, std::uint64_t seed) {
    const int n = static_cast<int>(suite.size());
    if (n == 0) throw std::invalid_argument("make_stream: empty suite");
    const int reps = mode == StreamMode::Repeat ? 2 : 1;
    const int n_buckets = n * reps;
    std::vector<StreamBucket> buckets(n_buckets);
    for (int b = 0; b < n_buckets; ++b) buckets[b].index = b + 1;

    for (int rep = 0; rep < reps; ++rep) {
        for (int i = 0; i < n; ++i) {
            std::vector<Trajectory> demos =
                collect_demos(suite[i], demos_per_task, derive_seed(seed, i + 1, rep));
            if (mode == StreamMode::Blurry) {
                // Task 1 lands entirely in bucket 1 (its nominal bucket 0 does
                // not exist); the last task splits over the final two buckets;
                // middle tasks split in thirds over i-1, i, i+1.
                std::vector<int> dest;
                if (i == 0) {
                    dest = {0, 0};
                } else if (i == n - 1) {
                    dest = {n - 2, n - 1};
                } else {
                    dest = {i - 1, i, i + 1};
                }
                const std::vector<int> counts =
                    split_counts(static_cast<int>(demos.size()), static_cast<int>(dest.size()));
                size_t at = 0;
                for (size_t part = 0; part < dest.size(); ++part) {
                    for (int k = 0; k < counts[part]; ++k)
                        buckets[dest[part]].trajectories.push_back(std::move(demos[at++]));
                }
            } else {
                const int b = rep * n + i;
                for (auto& t : demos) buckets[b].trajectories.push_back(std::move(t));
            }
        }
    }
    for (int b = 0; b < n_buckets; ++b) {
        Rng rng = make_rng(derive_seed(seed, 0xb0c4e7ULL, b));
        std::shuffle(buckets[b].trajectories.begin(), buckets[b].trajectories.end(), rng);
    }
    return buckets;
}

int dominant_task(const StreamBucket& bucket) {
    std::vector<std::pair<int, int>> counts;  // (task_id, count)
    for (const Trajectory& t : bucket.trajectories) {
        bool found = false;
        for (auto& [id, c] : counts)
            if (id == t.task_id) {
                ++c;
                found = true;
            }
        if (!found) counts.emplace_back(t.task_id, 1);
    }
    int best_id = 0, best_c = -1;
    for (auto& [id, c] : counts)
        if (c > best_c || (c == best_c && id < best_id)) {
            best_id = id;
            best_c = c;
        }
    return best_id;
}

void save_suite(const std::vector<TaskSpec>& suite, const std::string& path) {
    nlohmann::json doc;
    doc["tasks"] = nlohmann::json::array();
    for (const TaskSpec& t : suite) {
        nlohmann::json j;
        j["task_id"] = t.task_id;
        j["waypoints"] = nlohmann::json::array();
        for (const Vec2& p : t.waypoints) j["waypoints"].push_back({p[0], p[1]});
        j["step_size"] = t.step_size;
        j["noise_sigma"] = t.noise_sigma;
        j["success_radius"] = t.success_radius;
        j["sigma_start"] = t.sigma_start;
        j["horizon"] = t.horizon;
        j["clearance"] = t.clearance;
        j["action_max"] = t.action_max;
        doc["tasks"].push_back(std::move(j));
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_suite: cannot open " + path);
    f << doc.dump(2) << "\n";
}

std::vector<TaskSpec> load_suite(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_suite: cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(f);
    std::vector<TaskSpec> suite;
    for (const auto& j : doc.at("tasks")) {
        TaskSpec t;
        t.task_id = j.at("task_id").get<int>();
        for (const auto& p : j.at("waypoints"))
            t.waypoints.push_back({p[0].get<double>(), p[1].get<double>()});
        t.step_size = j.at("step_size").get<double>();
        t.noise_sigma = j.at("noise_sigma").get<double>();
        t.success_radius = j.at("success_radius").get<double>();
        t.sigma_start = j.at("sigma_start").get<double>();
        t.horizon = j.at("horizon").get<int>();
        t.clearance = j.at("clearance").get<double>();
        t.action_max = j.at("action_max").get<double>();
        suite.push_back(std::move(t));
    }
    return suite;
}

void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_trajectories: cannot open " + path);
    for (const Trajectory& t : trajs) {
        nlohmann::json rec;
        rec["task_id"] = t.task_id;
        nlohmann::json steps = nlohmann::json::array();
        for (const TrajStep& s : t.steps)
            steps.push_back({s.state[0], s.state[1], s.action[0], s.action[1]});
        rec["steps"] = std::move(steps);
        f << rec.dump() << "\n";
    }
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_trajectories: cannot open " + path);
    std::vector<Trajectory> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line);
        Trajectory t;
        t.task_id = rec.at("task_id").get<int>();
        int j = 1;
        for (const auto& s : rec.at("steps")) {
            TrajStep st;
            st.state = {s[0].get<double>(), s[1].get<double>()};
            st.action = {s[2].get<double>(), s[3].get<double>()};
            st.timestep = j++;
            t.steps.push_back(st);
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace rb

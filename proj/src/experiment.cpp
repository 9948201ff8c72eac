#include "replaybench/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace rb {

namespace {

constexpr std::uint64_t kStreamTag = 0x57e4a;
constexpr std::uint64_t kInitTag = 0x1a17;
constexpr std::uint64_t kTrainTag = 0x7247;
constexpr std::uint64_t kEvalTag = 0xe7a1;
constexpr std::uint64_t kRefTag = 0x4ef;

std::string cell_dir(const ExperimentConfig& cfg, const std::string& strategy,
                     std::uint64_t seed) {
    return cfg.out_dir + "/results/" + strategy + "/" + std::to_string(seed);
}

std::string ckpt_dir(const std::string& cell, int t) {
    return cell + "/ckpt_" + std::to_string(t);
}

bool ckpt_complete(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) return false;
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str().find('}') != std::string::npos;
}

int n_buckets_for(const ExperimentConfig& cfg) {
    return cfg.stream == "repeat" ? 2 * cfg.n_tasks : cfg.n_tasks;
}

int matrix_rows_for(const ExperimentConfig& cfg, Strategy kind) {
    // PackNet on repeated streams treats the second pass as new tasks.
    if (kind == Strategy::Packnet && cfg.stream == "repeat") return 2 * cfg.n_tasks;
    return cfg.n_tasks;
}

int packnet_mask_limit(const ExperimentConfig& cfg, int row, int ckpt) {
    if (cfg.stream == "blurry") return ckpt;  // last fixed set of parameters
    return std::min(row + 1, ckpt);
}

void write_matrix_csv(const std::string& path, const SuccessMatrix& m,
                      const std::vector<int>& row_task) {
    std::ofstream f(path + ".tmp");
    f << "row,task,ref";
    for (int t = 0; t < m.n_checkpoints; ++t) f << ",t" << t;
    f << "\n";
    for (int i = 0; i < m.n_tasks; ++i) {
        f << i << "," << row_task[i] << ",";
        if (i < static_cast<int>(m.s_ref.size())) f << m.s_ref[i];
        for (int t = 0; t < m.n_checkpoints; ++t) f << "," << m.s(i, t);
        f << "\n";
    }
    f.close();
    fs::rename(path + ".tmp", path);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::uint64_t stream_seed(std::uint64_t run_seed) { return derive_seed(run_seed, kStreamTag); }

std::vector<double> load_ref_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) return {};
    std::vector<double> ref;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cols = split_csv(line);
        ref.push_back(std::stod(cols.at(1)));
    }
    return ref;
}

}  // namespace

std::vector<double> run_reference(const ExperimentConfig& cfg,
                                  const std::vector<TaskSpec>& suite, std::uint64_t seed) {
    std::vector<double> ref(suite.size(), 0.0);
    for (size_t i = 0; i < suite.size(); ++i) {
        // Same demo set the stream uses for this task's first occurrence.
        const std::vector<Trajectory> demos = collect_demos(
            suite[i], cfg.demos_per_task, derive_seed(stream_seed(seed), i + 1, 0));
        DenseNet policy = init_net(
            [&] {
                std::vector<int> sizes{2 + cfg.train.n_max};
                sizes.insert(sizes.end(), cfg.train.policy_hidden.begin(),
                             cfg.train.policy_hidden.end());
                sizes.push_back(2);
                return sizes;
            }(),
            derive_seed(seed, kRefTag, i, 1));
        const PairSet pairs = build_policy_pairs(demos, cfg.train.n_max);
        Rng rng = make_rng(derive_seed(seed, kRefTag, i, 2));
        train_mse(policy, pairs, cfg.train.epochs, cfg.train.batch_size, cfg.train.lr_policy,
                  rng);
        int wins = 0;
        for (int k = 0; k < cfg.n_eval; ++k) {
            if (rollout_policy(policy, suite[i], cfg.train.n_max,
                               derive_seed(seed, kRefTag, i, 100 + k))
                    .success)
                ++wins;
        }
        ref[i] = static_cast<double>(wins) / cfg.n_eval;
    }
    return ref;
}

void run_cell(const ExperimentConfig& cfg, const std::vector<TaskSpec>& suite,
              const std::string& strategy, std::uint64_t seed, bool resume) {
    const Strategy kind = strategy_from_string(strategy);
    const std::string cell = cell_dir(cfg, strategy, seed);
    fs::create_directories(cell);

    const StreamMode mode = stream_mode_from_string(cfg.stream);
    const std::vector<StreamBucket> stream =
        make_stream(suite, cfg.demos_per_task, mode, stream_seed(seed));
    const int n_buckets = static_cast<int>(stream.size());

    StrategyState state;
    int start_t = 0;
    if (resume) {
        for (int t = n_buckets; t >= 0; --t) {
            if (ckpt_complete(ckpt_dir(cell, t))) {
                start_t = t;
                break;
            }
        }
    }
    if (resume && start_t > 0) {
        state = load_strategy(ckpt_dir(cell, start_t));
        if (kind == Strategy::Multitask)
            for (int t = 0; t < start_t; ++t)
                state.store.insert(state.store.end(), stream[t].trajectories.begin(),
                                   stream[t].trajectories.end());
    } else {
        state = init_strategy(kind, cfg.train,
                              derive_seed(seed, kInitTag, static_cast<int>(kind)));
        save_strategy(state, ckpt_dir(cell, 0));
        start_t = 0;
    }

    for (int t = start_t + 1; t <= n_buckets; ++t) {
        Rng rng = make_rng(derive_seed(seed, kTrainTag, static_cast<int>(kind), t));
        train_on_bucket(kind, state, stream[t - 1], cfg.train, rng);
        save_strategy(state, ckpt_dir(cell, t));
        std::fprintf(stderr, "[%s/%llu] bucket %d/%d done\n", strategy.c_str(),
                     static_cast<unsigned long long>(seed), t, n_buckets);
    }

    // Evaluate every checkpoint column of the success matrix.
    const int n_rows = matrix_rows_for(cfg, kind);
    std::vector<StrategyState> snaps(n_buckets + 1);
    for (int t = 0; t <= n_buckets; ++t) snaps[t] = load_strategy(ckpt_dir(cell, t));

    std::vector<TaskSpec> rows(n_rows);
    std::vector<int> row_task(n_rows);
    for (int r = 0; r < n_rows; ++r) {
        rows[r] = suite[r % cfg.n_tasks];
        row_task[r] = rows[r].task_id;
    }
    const PolicyProvider provider = [&](int ckpt, int row) -> DenseNet {
        const StrategyState& st = snaps.at(ckpt);
        if (kind == Strategy::Packnet)
            return masked_policy(st, packnet_mask_limit(cfg, row, ckpt));
        return st.policy;
    };
    SuccessMatrix m =
        eval_success_matrix(rows, cfg.train.n_max, n_buckets + 1, cfg.n_eval,
                            derive_seed(seed, kEvalTag, static_cast<int>(kind)), provider);
    for (int r = 0; r < n_rows; ++r)
        m.first_bucket[r] = cfg.stream == "blurry" ? std::max(1, (r % cfg.n_tasks)) : r + 1;

    const std::vector<double> ref =
        load_ref_csv(cfg.out_dir + "/results/ref/" + std::to_string(seed) + "/ref.csv");
    if (!ref.empty()) {
        m.s_ref.resize(n_rows);
        for (int r = 0; r < n_rows; ++r) m.s_ref[r] = ref[r % cfg.n_tasks];
    }
    write_matrix_csv(cell + "/matrix.csv", m, row_task);
}

SuccessMatrix load_matrix(const std::string& out_dir, const std::string& strategy,
                          std::uint64_t seed) {
    const std::string path =
        out_dir + "/results/" + strategy + "/" + std::to_string(seed) + "/matrix.csv";
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_matrix: missing " + path);
    std::string line;
    std::getline(f, line);
    const int n_ckpts = static_cast<int>(split_csv(line).size()) - 3;
    std::vector<std::vector<double>> vals;
    std::vector<double> refs;
    bool has_ref = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cols = split_csv(line);
        if (cols.at(2).empty())
            has_ref = false;
        else
            refs.push_back(std::stod(cols.at(2)));
        std::vector<double> row;
        for (int t = 0; t < n_ckpts; ++t) row.push_back(std::stod(cols.at(3 + t)));
        vals.push_back(std::move(row));
    }
    SuccessMatrix m;
    m.n_tasks = static_cast<int>(vals.size());
    m.n_checkpoints = n_ckpts;
    m.s.resize(m.n_tasks, n_ckpts);
    for (int i = 0; i < m.n_tasks; ++i)
        for (int t = 0; t < n_ckpts; ++t) m.s(i, t) = vals[i][t];
    if (has_ref) m.s_ref = refs;
    m.first_bucket.resize(m.n_tasks);
    for (int i = 0; i < m.n_tasks; ++i) m.first_bucket[i] = i + 1;
    return m;
}

namespace {

void aggregate_results(const ExperimentConfig& cfg) {
    std::ofstream per(cfg.out_dir + "/per_seed.csv");
    per << "method,seed,success,ft,forgetting\n";
    std::ofstream agg(cfg.out_dir + "/aggregate.csv");
    agg << "method,n_seeds,success_mean,success_ci90,ft_mean,ft_ci90,"
           "forgetting_mean,forgetting_ci90\n";

    const bool seq_like = cfg.stream != "blurry";
    for (const std::string& strategy : cfg.strategies) {
        std::vector<double> succ, fts, fgs;
        for (std::uint64_t seed : cfg.seeds) {
            SuccessMatrix m = load_matrix(cfg.out_dir, strategy, seed);
            if (cfg.stream == "blurry")
                for (int i = 0; i < m.n_tasks; ++i)
                    m.first_bucket[i] = std::max(1, i);
            const double s = avg_success(m);
            succ.push_back(s);
            per << strategy << "," << seed << "," << s << ",";
            const bool want_ft =
                seq_like && strategy != "multitask" && !m.s_ref.empty();
            if (want_ft) {
                const double ft = forward_transfer(m).mean;
                fts.push_back(ft);
                per << ft;
            }
            per << ",";
            if (strategy != "multitask") {
                const double fg = forgetting(m).mean;
                fgs.push_back(fg);
                per << fg;
            }
            per << "\n";
        }
        auto stats = [](const std::vector<double>& v) -> std::pair<std::string, std::string> {
            if (v.empty()) return {"", ""};
            if (v.size() == 1) return {std::to_string(v[0]), ""};
            const Interval ci = confidence_interval(v, 0.90);
            std::ostringstream a, b;
            a.precision(10);
            b.precision(10);
            a << ci.mean;
            b << ci.half_width;
            return {a.str(), b.str()};
        };
        const auto [sm, sc] = stats(succ);
        const auto [fm, fc] = stats(fts);
        const auto [gm, gc] = stats(fgs);
        agg << strategy << "," << cfg.seeds.size() << "," << sm << "," << sc << "," << fm
            << "," << fc << "," << gm << "," << gc << "\n";
    }
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, bool resume) {
    validate_config(cfg);
    fs::create_directories(cfg.out_dir + "/results");
    {
        std::ofstream f(cfg.out_dir + "/config.txt");
        f << serialize_config(cfg);
    }
    const std::vector<TaskSpec> suite =
        make_task_suite(cfg.n_tasks, cfg.suite_seed, make_suite_params(cfg));
    save_suite(suite, cfg.out_dir + "/suite.json");

    // Job list: one reference run per seed (shared by all strategies), then
    // every (strategy, seed) training cell.
    std::vector<std::function<void()>> jobs;
    if (cfg.compute_ref) {
        for (std::uint64_t seed : cfg.seeds) {
            jobs.push_back([&cfg, &suite, seed] {
                const std::string dir =
                    cfg.out_dir + "/results/ref/" + std::to_string(seed);
                if (fs::exists(dir + "/ref.csv")) return;  // refs are seed-pure
                fs::create_directories(dir);
                const std::vector<double> ref = run_reference(cfg, suite, seed);
                std::ofstream f(dir + "/ref.csv.tmp");
                f << "task,ref\n";
                for (size_t i = 0; i < ref.size(); ++i) f << i + 1 << "," << ref[i] << "\n";
                f.close();
                fs::rename(dir + "/ref.csv.tmp", dir + "/ref.csv");
            });
        }
    }
    std::vector<std::function<void()>> cell_jobs;
    for (const std::string& strategy : cfg.strategies)
        for (std::uint64_t seed : cfg.seeds)
            cell_jobs.push_back([&cfg, &suite, strategy, seed, resume] {
                run_cell(cfg, suite, strategy, seed, resume);
            });

    auto run_all = [&](std::vector<std::function<void()>>& work) {
        std::atomic<size_t> next{0};
        std::vector<std::exception_ptr> errors(work.size());
        auto worker = [&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= work.size()) break;
                try {
                    work[i]();
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        const int nt = std::max(1, cfg.n_threads);
        std::vector<std::thread> pool;
        for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    };
    // refs first: cells read them when writing matrices
    run_all(jobs);
    run_all(cell_jobs);
    aggregate_results(cfg);
}

std::vector<SeedResult> load_per_seed(const std::string& out_dir) {
    std::ifstream f(out_dir + "/per_seed.csv");
    if (!f) throw std::runtime_error("load_per_seed: missing per_seed.csv in " + out_dir);
    std::vector<SeedResult> out;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cols = split_csv(line);
        SeedResult r;
        r.strategy = cols.at(0);
        r.seed = std::stoull(cols.at(1));
        r.success = std::stod(cols.at(2));
        if (!cols.at(3).empty()) r.ft = std::stod(cols.at(3));
        if (!cols.at(4).empty()) r.forgetting = std::stod(cols.at(4));
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

struct AggRow {
    std::string method;
    std::string success_mean, success_ci, ft_mean, ft_ci, fg_mean, fg_ci;
};

std::vector<AggRow> load_aggregate(const std::string& dir) {
    std::ifstream f(dir + "/aggregate.csv");
    std::vector<AggRow> rows;
    if (!f) return rows;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        rows.push_back({c.at(0), c.at(2), c.at(3), c.at(4), c.at(5), c.at(6), c.at(7)});
    }
    return rows;
}

std::string pm(const std::string& mean, const std::string& ci) {
    if (mean.empty()) return "n/a";
    auto fmt = [](const std::string& s) {
        std::ostringstream out;
        out.precision(3);
        out << std::fixed << std::stod(s);
        return out.str();
    };
    if (ci.empty()) return fmt(mean);
    return fmt(mean) + " ± " + fmt(ci);
}

}  // namespace

void emit_report(const std::string& results_dir) {
    std::ofstream md(results_dir + "/report.md");
    md << "# Results\n\n";

    const std::vector<AggRow> rows = load_aggregate(results_dir);
    if (rows.empty()) {
        std::fprintf(stderr, "partial-report warning: no aggregate.csv in %s\n",
                     results_dir.c_str());
    } else {
        md << "| Method | Success | FT | Forgetting |\n";
        md << "|---|---|---|---|\n";
        for (const AggRow& r : rows)
            md << "| " << r.method << " | " << pm(r.success_mean, r.success_ci) << " | "
               << pm(r.ft_mean, r.ft_ci) << " | " << pm(r.fg_mean, r.fg_ci) << " |\n";
        md << "\n";
    }

    // Replay-ratio sweep table when ratio_* subruns are present.
    std::vector<std::pair<double, std::string>> ratio_dirs;
    if (fs::exists(results_dir)) {
        for (const auto& entry : fs::directory_iterator(results_dir)) {
            if (!entry.is_directory()) continue;
            const std::string name = entry.path().filename().string();
            if (name.rfind("ratio_", 0) == 0) {
                try {
                    ratio_dirs.emplace_back(std::stod(name.substr(6)), entry.path().string());
                } catch (...) {
                    std::fprintf(stderr, "partial-report warning: bad ratio dir %s\n",
                                 name.c_str());
                }
            }
        }
    }
    std::sort(ratio_dirs.begin(), ratio_dirs.end());
    if (!ratio_dirs.empty()) {
        std::ofstream rc(results_dir + "/ratio_sweep.csv");
        rc << "ratio,method,success_mean,success_ci90\n";
        md << "## Replay ratio sweep\n\n| Ratio | t-DGR | DGR |\n|---|---|---|\n";
        for (const auto& [ratio, dir] : ratio_dirs) {
            const std::vector<AggRow> rrows = load_aggregate(dir);
            std::string tdgr = "n/a", dgr = "n/a";
            for (const AggRow& r : rrows) {
                rc << ratio << "," << r.method << "," << r.success_mean << ","
                   << r.success_ci << "\n";
                if (r.method == "tdgr") tdgr = pm(r.success_mean, r.success_ci);
                if (r.method == "dgr") dgr = pm(r.success_mean, r.success_ci);
            }
            if (rrows.empty())
                std::fprintf(stderr, "partial-report warning: no aggregate in %s\n",
                             dir.c_str());
            md << "| " << ratio << " | " << tdgr << " | " << dgr << " |\n";
        }
        md << "\n";
    }
    std::printf("report written to %s/report.md\n", results_dir.c_str());
}

}  // namespace rb

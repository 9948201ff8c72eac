#include <cstdio>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>

#include "replaybench/analysis.hpp"
#include "replaybench/experiment.hpp"
#include "replaybench/svg.hpp"

namespace fs = std::filesystem;

namespace {

rb::ExperimentConfig load_cfg(const std::string& config_path, const std::string& profile,
                              const std::string& out_dir, long seed_override) {
    rb::ExperimentConfig cfg = config_path.empty() ? rb::default_config("desk")
                                                   : rb::load_config_file(config_path);
    if (!profile.empty()) {
        // Re-apply the profile preset, then the file's explicit keys win again.
        rb::ExperimentConfig base = rb::default_config(profile);
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            std::ostringstream ss;
            ss << f.rdbuf();
            cfg = rb::parse_config("profile = " + profile + "\n" + ss.str());
        } else {
            cfg = base;
        }
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
    rb::validate_config(cfg);
    return cfg;
}

int cmd_suite(const rb::ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const auto suite = rb::make_task_suite(cfg.n_tasks, cfg.suite_seed,
                                           rb::make_suite_params(cfg));
    rb::save_suite(suite, cfg.out_dir + "/suite.json");
    for (const auto& task : suite) {
        const auto demos =
            rb::collect_demos(task, cfg.demos_per_task,
                              rb::derive_seed(cfg.suite_seed, task.task_id, 0));
        rb::save_trajectories(demos, cfg.out_dir + "/demos_task_" +
                                          std::to_string(task.task_id) + ".jsonl");
    }
    std::printf("suite + demos written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_analyze(const std::string& out_dir) {
    fs::create_directories(out_dir + "/analysis");
    {
        std::ofstream f(out_dir + "/analysis/drift.csv");
        f << "p_step,n,analytic,simulated\n";
        std::printf("%-8s %-6s %-10s %-10s\n", "p_step", "n", "analytic", "simulated");
        for (double p : {0.001, 0.01, 0.05}) {
            for (int n : {50, 200}) {
                const double a = rb::drift_analytic(p, n);
                const double s = rb::drift_sim(p, n, 100000, 17);
                f << p << "," << n << "," << a << "," << s << "\n";
                std::printf("%-8g %-6d %-10.4f %-10.4f\n", p, n, a, s);
            }
        }
    }
    {
        std::ofstream f(out_dir + "/analysis/coverage.csv");
        f << "n,m,trials,empirical_mean,analytic\n";
        std::printf("%-6s %-4s %-14s %-14s\n", "n", "m", "empirical", "analytic(m=1)");
        for (int n : {50, 200}) {
            for (int m : {1, 2, 5}) {
                const rb::CoverageReport rep = rb::coverage_sim(n, m, 2000, 23);
                f << n << "," << m << "," << rep.trials << "," << rep.empirical_mean_draws
                  << "," << rep.analytic_reference << "\n";
                std::printf("%-6d %-4d %-14.1f %-14.1f\n", n, m, rep.empirical_mean_draws,
                            rep.analytic_reference);
            }
        }
    }
    std::printf("analysis tables written to %s/analysis\n", out_dir.c_str());
    return 0;
}

int cmd_fig(const rb::ExperimentConfig& cfg, int task_id) {
    fs::create_directories(cfg.out_dir + "/figures");
    const auto suite = rb::make_task_suite(cfg.n_tasks, cfg.suite_seed,
                                           rb::make_suite_params(cfg));
    for (const auto& task : suite) {
        if (task_id > 0 && task.task_id != task_id) continue;
        const auto demos = rb::collect_demos(task, 10,
                                             rb::derive_seed(cfg.suite_seed, task.task_id, 1));
        const std::string path =
            cfg.out_dir + "/figures/task_" + std::to_string(task.task_id) + "_expert.svg";
        rb::emit_traj_svg(demos, task, path);
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual imitation learning benchmark harness"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, profile, out_dir;
    long seed_override = -1;
    bool resume = false;
    app.add_option("--config", config_path, "experiment config file");
    app.add_option("--profile", profile, "profile override: paper|desk");
    app.add_option("--out", out_dir, "output directory override");
    app.add_option("--seed-override", seed_override, "run a single seed");
    app.add_flag("--resume", resume, "resume from checkpoints");

    auto* suite_cmd = app.add_subcommand("suite", "generate the task suite and demos");
    auto* train_cmd = app.add_subcommand("train", "train strategies through the stream");
    auto* eval_cmd = app.add_subcommand("eval", "(re)evaluate checkpoints into matrices");
    auto* analyze_cmd = app.add_subcommand("analyze", "sample-complexity and drift oracles");
    auto* report_cmd = app.add_subcommand("report", "emit markdown/CSV result tables");
    auto* fig_cmd = app.add_subcommand("fig", "trajectory overlay figures");
    int fig_task = 0;
    fig_cmd->add_option("--task", fig_task, "only this task id");

    CLI11_PARSE(app, argc, argv);

    try {
        if (suite_cmd->parsed() || train_cmd->parsed() || eval_cmd->parsed() ||
            fig_cmd->parsed()) {
            const rb::ExperimentConfig cfg =
                load_cfg(config_path, profile, out_dir, seed_override);
            if (suite_cmd->parsed()) return cmd_suite(cfg);
            if (fig_cmd->parsed()) return cmd_fig(cfg, fig_task);
            if (train_cmd->parsed()) {
                rb::run_experiment(cfg, resume);
                std::printf("results written to %s\n", cfg.out_dir.c_str());
                return 0;
            }
            // eval: reuse checkpoints, retrain only what is missing
            rb::run_experiment(cfg, /*resume=*/true);
            std::printf("matrices written to %s\n", cfg.out_dir.c_str());
            return 0;
        }
        if (analyze_cmd->parsed()) return cmd_analyze(out_dir.empty() ? "." : out_dir);
        if (report_cmd->parsed()) {
            rb::emit_report(out_dir.empty() ? "." : out_dir);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

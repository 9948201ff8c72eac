#include "replaybench/config.hpp"

#include <fstream>
#include <sstream>

namespace rb {

ExperimentConfig default_config(const std::string& profile) {
    ExperimentConfig cfg;
    cfg.profile = profile;
    if (profile == "paper") {
        cfg.n_tasks = 10;
        cfg.demos_per_task = 100;
        cfg.train.epochs = 250;
        cfg.train.epochs_replay = 300;
        cfg.train.retrain_epochs = 125;
        cfg.train.gen_steps = 10000;
        cfg.train.gen_warmup_steps = 50000;
        cfg.train.diffusion_steps = 1000;
        cfg.train.policy_hidden = {512, 512, 512, 512};
        cfg.train.denoiser_hidden = {256, 256, 256};
        cfg.train.dynamics_hidden = {512, 512, 512, 512};
    } else if (profile == "desk") {
        cfg.n_tasks = 5;
        cfg.demos_per_task = 50;
        cfg.train.epochs = 50;
        cfg.train.epochs_replay = 60;
        cfg.train.retrain_epochs = 25;
        cfg.train.gen_steps = 5000;
        cfg.train.gen_warmup_steps = 25000;
        cfg.train.diffusion_steps = 200;
        cfg.train.policy_hidden = {128, 128, 128};
        cfg.train.denoiser_hidden = {128, 128, 128};
        cfg.train.dynamics_hidden = {128, 128, 128};
    } else {
        throw ConfigError("profile: must be 'paper' or 'desk', got '" + profile + "'");
    }
    cfg.train.n_max = cfg.n_tasks;
    return cfg;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& v);

template <>
long parse_num<long>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
}

template <>
double parse_num<double>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError(key + ": expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const std::string& s : split_list(v))
        out.push_back(static_cast<int>(parse_num<long>(key, s)));
    return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    // First pass picks the profile so later keys override its defaults.
    std::vector<std::pair<std::string, std::string>> pairs;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    std::string profile = "desk";
    for (const auto& [k, v] : pairs)
        if (k == "profile") profile = v;
    ExperimentConfig cfg = default_config(profile);

    bool n_max_set = false;
    for (const auto& [k, v] : pairs) {
        if (k == "profile") {
            // applied above
        } else if (k == "n_tasks") {
            cfg.n_tasks = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "demos_per_task") {
            cfg.demos_per_task = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "horizon") {
            cfg.horizon = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "suite_seed") {
            cfg.suite_seed = static_cast<std::uint64_t>(parse_num<long>(k, v));
        } else if (k == "step_size") {
            cfg.step_size = parse_num<double>(k, v);
        } else if (k == "noise_sigma") {
            cfg.noise_sigma = parse_num<double>(k, v);
        } else if (k == "success_radius") {
            cfg.success_radius = parse_num<double>(k, v);
        } else if (k == "sigma_start") {
            cfg.sigma_start = parse_num<double>(k, v);
        } else if (k == "stream") {
            cfg.stream = v;
        } else if (k == "strategies") {
            cfg.strategies = split_list(v);
        } else if (k == "seeds") {
            cfg.seeds.clear();
            for (const std::string& s : split_list(v))
                cfg.seeds.push_back(static_cast<std::uint64_t>(parse_num<long>(k, s)));
        } else if (k == "n_eval") {
            cfg.n_eval = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "out_dir") {
            cfg.out_dir = v;
        } else if (k == "compute_ref") {
            cfg.compute_ref = parse_bool(k, v);
        } else if (k == "n_threads") {
            cfg.n_threads = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "replay_ratio") {
            cfg.train.replay_ratio = parse_num<double>(k, v);
        } else if (k == "epochs") {
            cfg.train.epochs = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "epochs_replay") {
            cfg.train.epochs_replay = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "batch_size") {
            cfg.train.batch_size = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "lr_policy") {
            cfg.train.lr_policy = parse_num<double>(k, v);
        } else if (k == "lr_gen") {
            cfg.train.lr_gen = parse_num<double>(k, v);
        } else if (k == "gen_steps") {
            cfg.train.gen_steps = parse_num<long>(k, v);
        } else if (k == "gen_warmup_steps") {
            cfg.train.gen_warmup_steps = parse_num<long>(k, v);
        } else if (k == "diffusion_steps") {
            cfg.train.diffusion_steps = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "embed_dim") {
            cfg.train.embed_dim = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "policy_hidden") {
            cfg.train.policy_hidden = parse_int_list(k, v);
        } else if (k == "denoiser_hidden") {
            cfg.train.denoiser_hidden = parse_int_list(k, v);
        } else if (k == "dynamics_hidden") {
            cfg.train.dynamics_hidden = parse_int_list(k, v);
        } else if (k == "fisher_lambda") {
            cfg.train.fisher_lambda = parse_num<double>(k, v);
        } else if (k == "prune_fraction") {
            cfg.train.prune_fraction = parse_num<double>(k, v);
        } else if (k == "retrain_epochs") {
            cfg.train.retrain_epochs = static_cast<int>(parse_num<long>(k, v));
        } else if (k == "dgr_unconditional") {
            cfg.train.dgr_unconditional = parse_bool(k, v);
        } else if (k == "n_max") {
            cfg.train.n_max = static_cast<int>(parse_num<long>(k, v));
            n_max_set = true;
        } else if (k == "sampler_threads") {
            cfg.train.n_threads = static_cast<int>(parse_num<long>(k, v));
        } else {
            throw ConfigError("unknown field: " + k);
        }
    }
    if (!n_max_set) cfg.train.n_max = cfg.n_tasks;
    validate_config(cfg);
    return cfg;
}

namespace {
std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}
template <typename T>
std::string join_num(const std::vector<T>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}
std::string num(double x) {
    std::ostringstream ss;
    ss.precision(17);
    ss << x;
    return ss.str();
}
}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "profile = " << cfg.profile << "\n";
    out << "n_tasks = " << cfg.n_tasks << "\n";
    out << "demos_per_task = " << cfg.demos_per_task << "\n";
    out << "horizon = " << cfg.horizon << "\n";
    out << "suite_seed = " << cfg.suite_seed << "\n";
    out << "step_size = " << num(cfg.step_size) << "\n";
    out << "noise_sigma = " << num(cfg.noise_sigma) << "\n";
    out << "success_radius = " << num(cfg.success_radius) << "\n";
    out << "sigma_start = " << num(cfg.sigma_start) << "\n";
    out << "stream = " << cfg.stream << "\n";
    out << "strategies = " << join(cfg.strategies) << "\n";
    out << "seeds = " << join_num(cfg.seeds) << "\n";
    out << "n_eval = " << cfg.n_eval << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "compute_ref = " << (cfg.compute_ref ? "true" : "false") << "\n";
    out << "n_threads = " << cfg.n_threads << "\n";
    out << "replay_ratio = " << num(cfg.train.replay_ratio) << "\n";
    out << "epochs = " << cfg.train.epochs << "\n";
    out << "epochs_replay = " << cfg.train.epochs_replay << "\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "lr_policy = " << num(cfg.train.lr_policy) << "\n";
    out << "lr_gen = " << num(cfg.train.lr_gen) << "\n";
    out << "gen_steps = " << cfg.train.gen_steps << "\n";
    out << "gen_warmup_steps = " << cfg.train.gen_warmup_steps << "\n";
    out << "diffusion_steps = " << cfg.train.diffusion_steps << "\n";
    out << "embed_dim = " << cfg.train.embed_dim << "\n";
    out << "policy_hidden = " << join_num(cfg.train.policy_hidden) << "\n";
    out << "denoiser_hidden = " << join_num(cfg.train.denoiser_hidden) << "\n";
    out << "dynamics_hidden = " << join_num(cfg.train.dynamics_hidden) << "\n";
    out << "fisher_lambda = " << num(cfg.train.fisher_lambda) << "\n";
    out << "prune_fraction = " << num(cfg.train.prune_fraction) << "\n";
    out << "retrain_epochs = " << cfg.train.retrain_epochs << "\n";
    out << "dgr_unconditional = " << (cfg.train.dgr_unconditional ? "true" : "false") << "\n";
    out << "n_max = " << cfg.train.n_max << "\n";
    out << "sampler_threads = " << cfg.train.n_threads << "\n";
    return out.str();
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) throw ConfigError("seeds: must not be empty");
    if (cfg.profile != "paper" && cfg.profile != "desk")
        throw ConfigError("profile: must be 'paper' or 'desk'");
    if (cfg.train.replay_ratio < 0.0 || cfg.train.replay_ratio >= 1.0)
        throw ConfigError("replay_ratio: must be in [0, 1)");
    if (cfg.n_tasks < 1) throw ConfigError("n_tasks: must be >= 1");
    if (cfg.n_eval < 1) throw ConfigError("n_eval: must be >= 1");
    if (cfg.train.n_max < cfg.n_tasks)
        throw ConfigError("n_max: must be >= n_tasks");
    if (cfg.strategies.empty()) throw ConfigError("strategies: must not be empty");
    for (const std::string& s : cfg.strategies) {
        try {
            strategy_from_string(s);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("strategies: ") + e.what());
        }
    }
    try {
        stream_mode_from_string(cfg.stream);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("stream: ") + e.what());
    }
}

SuiteParams make_suite_params(const ExperimentConfig& cfg) {
    SuiteParams pr;
    pr.step_size = cfg.step_size;
    pr.noise_sigma = cfg.noise_sigma;
    pr.success_radius = cfg.success_radius;
    pr.sigma_start = cfg.sigma_start;
    pr.horizon = cfg.horizon;
    return pr;
}

}  // namespace rb

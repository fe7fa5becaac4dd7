#include "lanesim/config.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace lanesim {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "': bad number '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long x = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(x);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "': bad integer '" + v + "'");
    }
}

std::int64_t parse_i64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::int64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "': bad integer '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config: key '" + key + "': bad boolean '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: key '" + key + "': empty list element");
        out.push_back(parse(key, item));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "': empty list");
    return out;
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(xs[i]);
    }
    return out;
}

struct SchemaEntry {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<SchemaEntry>& schema() {
    static const std::vector<SchemaEntry> entries = [] {
        std::vector<SchemaEntry> e;
        auto add_str = [&](const char* sec, const char* key, std::string ExperimentConfig::*m) {
            e.push_back({sec, key, [m](const ExperimentConfig& c) { return c.*m; },
                         [m](ExperimentConfig& c, const std::string& v) { c.*m = v; }});
        };
        auto add_dbl = [&](const char* sec, const char* key, double ExperimentConfig::*m) {
            e.push_back({sec, key,
                         [m](const ExperimentConfig& c) { return format_double(c.*m); },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.*m = parse_double(key, v);
                         }});
        };
        auto add_int = [&](const char* sec, const char* key, int ExperimentConfig::*m) {
            e.push_back({sec, key,
                         [m](const ExperimentConfig& c) { return std::to_string(c.*m); },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.*m = parse_int(key, v);
                         }});
        };
        auto add_i64 = [&](const char* sec, const char* key, std::int64_t ExperimentConfig::*m) {
            e.push_back({sec, key,
                         [m](const ExperimentConfig& c) { return std::to_string(c.*m); },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.*m = parse_i64(key, v);
                         }});
        };
        auto add_bool = [&](const char* sec, const char* key, bool ExperimentConfig::*m) {
            e.push_back({sec, key,
                         [m](const ExperimentConfig& c) { return c.*m ? "1" : "0"; },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.*m = parse_bool(key, v);
                         }});
        };
        auto add_ints = [&](const char* sec, const char* key,
                            std::vector<int> ExperimentConfig::*m) {
            e.push_back({sec, key,
                         [m](const ExperimentConfig& c) { return join_list(c.*m); },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.*m = parse_list<int>(key, v, parse_int);
                         }});
        };
        auto add_sim_dbl = [&](const char* key, double SimConfig::*m) {
            e.push_back({"sim", key,
                         [m](const ExperimentConfig& c) { return format_double(c.sim.*m); },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.sim.*m = parse_double(key, v);
                         }});
        };
        auto add_sim_int = [&](const char* key, int SimConfig::*m) {
            e.push_back({"sim", key,
                         [m](const ExperimentConfig& c) { return std::to_string(c.sim.*m); },
                         [key, m](ExperimentConfig& c, const std::string& v) {
                             c.sim.*m = parse_int(key, v);
                         }});
        };

        add_str("run", "agent", &ExperimentConfig::agent);
        add_str("run", "track", &ExperimentConfig::track);
        e.push_back({"run", "seeds",
                     [](const ExperimentConfig& c) {
                         std::string out;
                         for (std::size_t i = 0; i < c.seeds.size(); ++i) {
                             if (i) out += ",";
                             out += std::to_string(c.seeds[i]);
                         }
                         return out;
                     },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.seeds = parse_list<std::uint64_t>(
                             "seeds", v, [](const std::string& key, const std::string& s) {
                                 return static_cast<std::uint64_t>(parse_i64(key, s));
                             });
                     }});
        add_int("run", "episodes", &ExperimentConfig::episodes);
        add_i64("run", "max_env_steps", &ExperimentConfig::max_env_steps);
        add_str("run", "out_dir", &ExperimentConfig::out_dir);
        add_int("run", "threads", &ExperimentConfig::threads);
        add_int("run", "checkpoint_every", &ExperimentConfig::checkpoint_every);

        add_sim_dbl("wheel_base", &SimConfig::wheel_base);
        add_sim_dbl("max_steer_angle", &SimConfig::max_steer_angle);
        add_sim_dbl("max_accel", &SimConfig::max_accel);
        add_sim_dbl("max_brake", &SimConfig::max_brake);
        add_sim_dbl("drag", &SimConfig::drag);
        add_sim_dbl("dt", &SimConfig::dt);
        add_sim_dbl("v_init", &SimConfig::v_init);
        add_sim_dbl("v_scale", &SimConfig::v_scale);
        add_sim_dbl("off_track_penalty", &SimConfig::off_track_penalty);
        add_sim_int("max_steps", &SimConfig::max_steps);
        add_sim_int("n_rays", &SimConfig::n_rays);
        add_sim_dbl("range_max", &SimConfig::range_max);
        e.push_back({"sim", "flicker",
                     [](const ExperimentConfig& c) { return c.sim.flicker ? "1" : "0"; },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.sim.flicker = parse_bool("flicker", v);
                     }});
        add_sim_dbl("p_flicker", &SimConfig::p_flicker);

        add_int("actions", "n_steer", &ExperimentConfig::n_steer);
        add_int("actions", "n_throttle", &ExperimentConfig::n_throttle);

        add_bool("features", "use_ranges", &ExperimentConfig::use_ranges);

        add_bool("replay", "enabled", &ExperimentConfig::replay_enabled);
        add_int("replay", "capacity", &ExperimentConfig::replay_capacity);
        add_int("replay", "batch_size", &ExperimentConfig::batch_size);
        add_int("replay", "warmup", &ExperimentConfig::warmup);

        add_ints("train", "hidden", &ExperimentConfig::hidden);
        add_dbl("train", "gamma", &ExperimentConfig::gamma);
        add_dbl("train", "learning_rate", &ExperimentConfig::learning_rate);
        add_dbl("train", "eps0", &ExperimentConfig::eps0);
        add_dbl("train", "eps_min", &ExperimentConfig::eps_min);
        add_dbl("train", "eps_fraction", &ExperimentConfig::eps_fraction);
        add_int("train", "train_every", &ExperimentConfig::train_every);
        add_bool("train", "target_net", &ExperimentConfig::target_net);
        add_int("train", "target_sync", &ExperimentConfig::target_sync);

        add_dbl("ddac", "lr_actor", &ExperimentConfig::lr_actor);
        add_dbl("ddac", "lr_critic", &ExperimentConfig::lr_critic);
        add_dbl("ddac", "noise0", &ExperimentConfig::noise0);
        add_dbl("ddac", "noise_min", &ExperimentConfig::noise_min);
        add_dbl("ddac", "noise_fraction", &ExperimentConfig::noise_fraction);

        add_int("drqn", "lstm_hidden", &ExperimentConfig::lstm_hidden);
        add_int("drqn", "fragment_len", &ExperimentConfig::fragment_len);
        add_int("drqn", "bptt_len", &ExperimentConfig::bptt_len);
        add_int("drqn", "batch_fragments", &ExperimentConfig::batch_fragments);
        add_int("drqn", "train_every", &ExperimentConfig::drqn_train_every);

        add_int("glimpse", "window", &ExperimentConfig::glimpse_window);
        add_ints("glimpse", "hidden", &ExperimentConfig::glimpse_hidden);
        add_dbl("glimpse", "learning_rate", &ExperimentConfig::glimpse_lr);
        add_dbl("glimpse", "baseline_decay", &ExperimentConfig::baseline_decay);

        add_dbl("qtable", "alpha", &ExperimentConfig::alpha);
        add_int("qtable", "track_pos_bins", &ExperimentConfig::track_pos_bins);
        add_dbl("qtable", "track_pos_lo", &ExperimentConfig::track_pos_lo);
        add_dbl("qtable", "track_pos_hi", &ExperimentConfig::track_pos_hi);
        add_int("qtable", "speed_bins", &ExperimentConfig::speed_bins);
        add_dbl("qtable", "speed_lo", &ExperimentConfig::speed_lo);
        add_dbl("qtable", "speed_hi", &ExperimentConfig::speed_hi);

        add_int("apprentice", "demo_episodes", &ExperimentConfig::demo_episodes);
        add_int("apprentice", "fit_epochs_per_episode",
                &ExperimentConfig::fit_epochs_per_episode);
        add_int("apprentice", "final_fit_epochs", &ExperimentConfig::final_fit_epochs);
        add_dbl("apprentice", "learning_rate", &ExperimentConfig::apprentice_lr);
        add_int("apprentice", "batch_size", &ExperimentConfig::apprentice_batch);
        add_ints("apprentice", "hidden", &ExperimentConfig::apprentice_hidden);
        add_dbl("apprentice", "k_steer", &ExperimentConfig::k_steer);
        add_dbl("apprentice", "k_psi", &ExperimentConfig::k_psi);
        add_dbl("apprentice", "k_speed", &ExperimentConfig::k_speed);
        add_dbl("apprentice", "v_target", &ExperimentConfig::v_target);

        add_int("eval", "episodes", &ExperimentConfig::eval_episodes);
        return e;
    }();
    return entries;
}

const SchemaEntry* find_entry(const std::string& section, const std::string& key) {
    for (const auto& entry : schema()) {
        if (entry.section == section && entry.key == key) return &entry;
    }
    return nullptr;
}

void apply_kv(ExperimentConfig& cfg, const std::string& section, const std::string& key,
              const std::string& value) {
    const SchemaEntry* entry = find_entry(section, key);
    if (!entry) {
        throw ConfigError("config: unknown key '" + section + "." + key + "'");
    }
    entry->set(cfg, value);
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        }
        apply_kv(cfg, section, key, value);
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& dotted_assignment) {
    const auto eq = dotted_assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + dotted_assignment + "' must be section.key=value");
    }
    const std::string path = trim(dotted_assignment.substr(0, eq));
    const std::string value = trim(dotted_assignment.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
        throw ConfigError("override '" + dotted_assignment + "' must be section.key=value");
    }
    apply_kv(cfg, path.substr(0, dot), path.substr(dot + 1), value);
}

std::string resolved_config_text(const ExperimentConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& entry : schema()) {
        if (entry.section != section) {
            if (!out.empty()) out += "\n";
            section = entry.section;
            out += "[" + section + "]\n";
        }
        out += entry.key + " = " + entry.get(cfg) + "\n";
    }
    return out;
}

void validate_config(const ExperimentConfig& cfg) {
    static const char* kAgents[] = {"qtable", "dqn", "ddac", "drqn", "glimpse-dqn",
                                    "apprentice"};
    if (std::find(std::begin(kAgents), std::end(kAgents), cfg.agent) == std::end(kAgents)) {
        throw ConfigError("config: unknown agent kind '" + cfg.agent + "'");
    }
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (cfg.episodes < 0) throw ConfigError("config: episodes must be >= 0");
    if (cfg.max_env_steps < 0) throw ConfigError("config: max_env_steps must be >= 0");
    if (cfg.n_steer < 2 || cfg.n_throttle < 2) {
        throw ConfigError("config: action tiling needs n_steer >= 2 and n_throttle >= 2");
    }
    if (cfg.sim.dt <= 0.0) throw ConfigError("config: sim.dt must be > 0");
    if (cfg.sim.max_steps < 1) throw ConfigError("config: sim.max_steps must be >= 1");
    if (cfg.sim.p_flicker < 0.0 || cfg.sim.p_flicker > 1.0) {
        throw ConfigError("config: sim.p_flicker must be in [0, 1]");
    }
    if (cfg.use_ranges && cfg.sim.n_rays < 1) {
        throw ConfigError("config: features.use_ranges needs sim.n_rays >= 1");
    }
    if (cfg.agent == "glimpse-dqn") {
        if (cfg.sim.n_rays < 1) throw ConfigError("config: glimpse-dqn needs sim.n_rays >= 1");
        if (cfg.glimpse_window < 1 || cfg.glimpse_window > cfg.sim.n_rays) {
            throw ConfigError("config: glimpse.window must be in [1, sim.n_rays]");
        }
    }
    if (cfg.hidden.empty()) throw ConfigError("config: train.hidden needs >= 1 layer");
    if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) {
        throw ConfigError("config: train.gamma must be in [0, 1)");
    }
    if (cfg.batch_size < 1) throw ConfigError("config: replay.batch_size must be >= 1");
    if (cfg.replay_capacity < 1) throw ConfigError("config: replay.capacity must be >= 1");
    if (cfg.fragment_len < 1 || cfg.bptt_len < 1) {
        throw ConfigError("config: drqn fragment/bptt lengths must be >= 1");
    }
    if (cfg.eval_episodes < 1) throw ConfigError("config: eval.episodes must be >= 1");
    if (cfg.demo_episodes < 1) throw ConfigError("config: apprentice.demo_episodes must be >= 1");
}

int feature_size(const ExperimentConfig& cfg) {
    int n = 2;
    if (cfg.use_ranges) n += cfg.sim.n_rays;
    if (cfg.sim.flicker) n += 1;
    return n;
}

std::vector<double> featurize(const Observation& obs, const ExperimentConfig& cfg) {
    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(feature_size(cfg)));
    if (cfg.use_ranges) {
        if (static_cast<int>(obs.ranges.size()) != cfg.sim.n_rays) {
            throw Error("featurize: observation has " + std::to_string(obs.ranges.size()) +
                        " rays, config expects " + std::to_string(cfg.sim.n_rays));
        }
        f.insert(f.end(), obs.ranges.begin(), obs.ranges.end());
    }
    f.push_back(obs.track_pos);
    f.push_back(obs.speed_x / cfg.sim.v_scale);
    if (cfg.sim.flicker) f.push_back(obs.visible ? 1.0 : 0.0);
    return f;
}

} // namespace lanesim

#pragma once

#include "lanesim/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lanesim {

// Everything a run needs, resolved to concrete values. The on-disk format is
// flat `key = value` lines under [section] headers; unknown keys are rejected
// and every run echoes the fully resolved text next to its outputs.
struct ExperimentConfig {
    // [run]
    std::string agent = "dqn"; // qtable|dqn|ddac|drqn|glimpse-dqn|apprentice
    std::string track = "tracks/gentle-s.track";
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    int episodes = 1500;
    std::int64_t max_env_steps = 150000;
    std::string out_dir = "runs/out";
    int threads = 0;          // 0 = hardware concurrency
    int checkpoint_every = 0; // episodes between checkpoints; 0 = end of run only

    // [sim]
    SimConfig sim;

    // [actions]
    int n_steer = 5;
    int n_throttle = 3;

    // [features]
    bool use_ranges = true;

    // [replay]
    bool replay_enabled = true;
    int replay_capacity = 50000;
    int batch_size = 32;
    int warmup = 500;

    // [train] (dqn / drqn / shared)
    std::vector<int> hidden{64, 64};
    double gamma = 0.9;
    double learning_rate = 0.005;
    double eps0 = 1.0;
    double eps_min = 0.05;
    double eps_fraction = 0.5; // fraction of the step budget the decay spans
    int train_every = 1;
    bool target_net = false;
    int target_sync = 500;

    // [ddac]
    double lr_actor = 0.0005;
    double lr_critic = 0.005;
    double noise0 = 0.3;
    double noise_min = 0.02;
    double noise_fraction = 0.5;

    // [drqn]
    int lstm_hidden = 32;
    int fragment_len = 16;
    int bptt_len = 16;
    int batch_fragments = 4;
    int drqn_train_every = 4;

    // [glimpse]
    int glimpse_window = 3;
    std::vector<int> glimpse_hidden{32};
    double glimpse_lr = 0.01;
    double baseline_decay = 0.99;

    // [qtable]
    double alpha = 0.5;
    int track_pos_bins = 11;
    double track_pos_lo = -1.2;
    double track_pos_hi = 1.2;
    int speed_bins = 5;
    double speed_lo = 0.0;
    double speed_hi = 30.0;

    // [apprentice]
    int demo_episodes = 40;
    int fit_epochs_per_episode = 4;
    int final_fit_epochs = 40;
    double apprentice_lr = 0.01;
    int apprentice_batch = 32;
    std::vector<int> apprentice_hidden{32, 32};
    double k_steer = 1.2;
    double k_psi = 1.0;
    double k_speed = 0.5;
    double v_target = 12.0;

    // [eval]
    int eval_episodes = 10;
};

// Parse / apply / serialize. All throw ConfigError with the offending key.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& dotted_assignment); // sec.key=value
std::string resolved_config_text(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

// Feature layout shared by the function-approximation agents:
// [rays (when use_ranges)..., track_pos, speed_x / v_scale, visible (when flicker)].
std::vector<double> featurize(const Observation& obs, const ExperimentConfig& cfg);
int feature_size(const ExperimentConfig& cfg);

// Shortest round-trip decimal text for a double (plain "nan"/"inf" spelled out).
std::string format_double(double v);

} // namespace lanesim

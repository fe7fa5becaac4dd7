#pragma once

#include "lanesim/checkpoint.hpp"
#include "lanesim/config.hpp"
#include "lanesim/rng.hpp"
#include "lanesim/sim.hpp"

#include <string>
#include <vector>

namespace lanesim {

// Per-episode aggregate metrics.
//
// on_track_fraction: 1.0 for episodes that never leave the track (lap, step
// budget); for departures, on-track steps over the episode step budget, so it
// measures how much of the nominal episode the policy survived.
struct EpisodeResult {
    int episode = 0;
    int steps = 0;
    double total_reward = 0.0;
    double on_track_fraction = 0.0;
    double mean_abs_steer_delta = 0.0;
    bool departed = false;
    bool lap_completed = false;
    double epsilon = 0.0;
    double loss_mean = 0.0;
    double mean_speed = 0.0; // not part of the metrics.csv schema; eval CSVs carry it
    // glimpse-dqn only:
    double glimpse_entropy = 0.0;
    double sensor_multiplies = 0.0;
};

// Named RNG streams; ablations touch only their own stream.
struct Streams {
    Rng env, flicker, init, explore, replay, glimpse;

    static Streams make(std::uint64_t master_seed);
};

void save_streams(Checkpoint& ckpt, const Streams& st);
void load_streams(const Checkpoint& ckpt, Streams& st);

// metrics.csv schema: episode,steps,total_reward,on_track_fraction,
// mean_abs_steer_delta,departed,lap_completed,epsilon,loss_mean
// (+ glimpse_position_entropy,sensor_multiplies_per_step for glimpse-dqn).
void write_metrics_header(std::ostream& out, bool glimpse_columns);
void write_metrics_row(std::ostream& out, const EpisodeResult& row, bool glimpse_columns);
std::vector<EpisodeResult> read_metrics_csv(const std::string& path);

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::vector<EpisodeResult> rows;
    std::string seed_dir;
    std::string checkpoint_path;
};

struct TrainOutcome {
    std::string out_dir;
    std::vector<SeedOutcome> seeds;
};

// Trains every configured seed (in parallel workers when cfg.threads allows),
// writing per-seed metrics.csv + checkpoint.txt and the resolved config.
// resume_dir, when non-empty, must hold per-seed checkpoints of a compatible
// earlier run; training continues from them and appends metrics.
TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& resume_dir = "");

struct EvalOutcome {
    std::vector<EpisodeResult> episodes;
};

// Greedy evaluation of a checkpoint on a track; no parameter mutation. Sim and
// agent settings (flicker, rays, glimpse windows) come from the checkpoint's
// embedded config.
EvalOutcome evaluate_checkpoint(const Checkpoint& ckpt, const TrackSpec& track, int episodes,
                                std::uint64_t seed);

// Same, loading from files and writing eval_episodes.csv/eval_stats.csv under
// out_dir (if non-empty). Returns the outcome and prints a short summary line
// per statistic to `summary` if non-null.
EvalOutcome run_eval(const std::string& checkpoint_path, const std::string& track_path,
                     int episodes, std::uint64_t seed, const std::string& out_dir,
                     std::string* summary = nullptr);

struct CompareRow {
    std::string metric;
    double a_median = 0.0;
    double b_median = 0.0;
    double delta_a_minus_b = 0.0;
};

// Aggregates two finished runs (per-seed medians of first-lap episode, final
// on-track fraction, final steer smoothness) and writes out_csv if non-empty.
std::vector<CompareRow> run_compare(const std::string& dir_a, const std::string& dir_b,
                                    const std::string& out_csv);

// Rolls out the expert controller (checkpoint_path empty) or a checkpoint
// greedily, dumping a per-step trajectory CSV: t,s,d,psi,v,steer,accel,brake,reward.
void run_demo(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              const std::string& track_path, int max_steps, std::uint64_t seed,
              const std::string& out_csv);

double median(std::vector<double> values); // NaN for empty input

} // namespace lanesim

// lanesim command line: train / eval / compare / demo.
//
// Exit codes: 0 success, 2 configuration error, 3 training divergence.

#include "lanesim/config.hpp"
#include "lanesim/error.hpp"
#include "lanesim/train.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

// Output directory precedence: --out flag, then LANESIM_OUT_DIR, then config.
void resolve_out_dir(lanesim::ExperimentConfig& cfg, const std::string& out_flag) {
    if (!out_flag.empty()) {
        cfg.out_dir = out_flag;
        return;
    }
    if (const char* env = std::getenv("LANESIM_OUT_DIR")) {
        if (*env) cfg.out_dir = env;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lanesim: 2D lane-keeping simulator and RL agent suite"};
    app.require_subcommand(1);

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train an agent and write metrics + checkpoint");
    std::string train_config;
    std::vector<std::string> train_sets;
    std::string train_agent, train_track, train_out, train_seeds, train_resume;
    int train_episodes = -1;
    long long train_steps = -1;
    bool no_replay = false, flicker = false;
    train->add_option("--config", train_config, "Config file (key = value with sections)");
    train->add_option("--set", train_sets, "Override: section.key=value (repeatable)");
    train->add_option("--agent", train_agent, "Agent kind");
    train->add_option("--track", train_track, "Track file");
    train->add_option("--seeds", train_seeds, "Comma-separated seed list");
    train->add_option("--episodes", train_episodes, "Episode budget");
    train->add_option("--max-env-steps", train_steps, "Environment step budget");
    train->add_option("--out", train_out, "Output directory");
    train->add_option("--resume", train_resume, "Run directory to resume from");
    train->add_flag("--no-replay", no_replay, "Disable the replay buffer");
    train->add_flag("--flicker", flicker, "Enable flickering observations");

    // eval -------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
    std::string eval_ckpt, eval_track, eval_out;
    int eval_episodes = 10;
    unsigned long long eval_seed = 1;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--track", eval_track, "Track file")->required();
    eval->add_option("--episodes", eval_episodes, "Evaluation episodes");
    eval->add_option("--seed", eval_seed, "Evaluation seed");
    eval->add_option("--out", eval_out, "Directory for eval CSVs");

    // compare ----------------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "Aggregate two runs into a comparison CSV");
    std::string cmp_a, cmp_b, cmp_out;
    compare->add_option("--a", cmp_a, "First run directory")->required();
    compare->add_option("--b", cmp_b, "Second run directory")->required();
    compare->add_option("--out", cmp_out, "Comparison CSV path");

    // demo -------------------------------------------------------------------
    auto* demo = app.add_subcommand("demo", "Roll one episode and dump a trajectory CSV");
    std::string demo_ckpt, demo_track, demo_out, demo_config;
    bool demo_expert = false;
    int demo_steps = 2000;
    unsigned long long demo_seed = 1;
    demo->add_option("--checkpoint", demo_ckpt, "Checkpoint file");
    demo->add_flag("--expert", demo_expert, "Run the proportional expert");
    demo->add_option("--config", demo_config, "Config file for sim/expert settings");
    demo->add_option("--track", demo_track, "Track file")->required();
    demo->add_option("--steps", demo_steps, "Step cap");
    demo->add_option("--seed", demo_seed, "Seed");
    demo->add_option("--out", demo_out, "Trajectory CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            lanesim::ExperimentConfig cfg;
            if (!train_config.empty()) cfg = lanesim::load_config_file(train_config);
            for (const auto& s : train_sets) lanesim::apply_override(cfg, s);
            if (!train_agent.empty()) cfg.agent = train_agent;
            if (!train_track.empty()) cfg.track = train_track;
            if (!train_seeds.empty()) lanesim::apply_override(cfg, "run.seeds=" + train_seeds);
            if (train_episodes >= 0) cfg.episodes = train_episodes;
            if (train_steps >= 0) cfg.max_env_steps = train_steps;
            if (no_replay) cfg.replay_enabled = false;
            if (flicker) cfg.sim.flicker = true;
            resolve_out_dir(cfg, train_out);
            const auto outcome = lanesim::run_train(cfg, train_resume);
            for (const auto& seed : outcome.seeds) {
                int first_lap = -1;
                for (const auto& r : seed.rows) {
                    if (r.lap_completed) {
                        first_lap = r.episode;
                        break;
                    }
                }
                std::cout << "seed " << seed.seed << ": " << seed.rows.size()
                          << " episodes, first lap "
                          << (first_lap < 0 ? std::string("never")
                                            : std::to_string(first_lap))
                          << ", metrics " << seed.seed_dir << "/metrics.csv\n";
            }
        } else if (*eval) {
            std::string summary;
            lanesim::run_eval(eval_ckpt, eval_track, eval_episodes, eval_seed, eval_out,
                              &summary);
            std::cout << summary;
        } else if (*compare) {
            const auto rows = lanesim::run_compare(cmp_a, cmp_b, cmp_out);
            std::cout << "metric,a_median,b_median,delta_a_minus_b\n";
            for (const auto& r : rows) {
                std::cout << r.metric << "," << lanesim::format_double(r.a_median) << ","
                          << lanesim::format_double(r.b_median) << ","
                          << lanesim::format_double(r.delta_a_minus_b) << "\n";
            }
        } else if (*demo) {
            if (demo_expert ? !demo_ckpt.empty() : demo_ckpt.empty()) {
                throw lanesim::ConfigError("demo: pass exactly one of --expert or --checkpoint");
            }
            lanesim::ExperimentConfig cfg;
            if (!demo_config.empty()) cfg = lanesim::load_config_file(demo_config);
            lanesim::run_demo(cfg, demo_expert ? "" : demo_ckpt, demo_track, demo_steps,
                              demo_seed, demo_out);
            std::cout << "trajectory written to " << demo_out << "\n";
        }
    } catch (const lanesim::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lanesim::NumericError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

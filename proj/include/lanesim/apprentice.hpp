#pragma once

#include "lanesim/nn.hpp"
#include "lanesim/rng.hpp"
#include "lanesim/sim.hpp"

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace lanesim {

// Proportional lane-keeping expert with a speed limiter. It reads the true
// state (it is the oracle), so flicker never blinds it.
struct ExpertConfig {
    double k_steer = 1.2;
    double k_psi = 1.0;
    double k_speed = 0.5;
    double v_target = 12.0; // m/s
};

ContinuousAction p_controller(double track_pos, double psi, double speed_x,
                              const ExpertConfig& cfg);
ContinuousAction p_controller(const CarState& state, const TrackSpec& track,
                              const ExpertConfig& cfg);

struct BlendChoice {
    ContinuousAction action;
    bool from_model = false;
};

// epsilon is the MODEL's share of control: with probability epsilon the model
// action drives, otherwise the expert's. The handover schedule runs 0 -> 1.
BlendChoice blended_step(const ContinuousAction& model_action,
                         const ContinuousAction& expert_action, double epsilon, Rng& rng);

// Expert-labeled visitation data: whichever action drove the car, the row
// stores the expert's action for the visited state.
struct DemoDataset {
    std::vector<std::vector<double>> features;
    std::vector<std::array<double, 2>> actions; // (steer, throttle axis)
    std::vector<bool> from_model;               // which action actually drove

    std::size_t size() const { return features.size(); }
    void append(std::vector<double> f, std::array<double, 2> a, bool model_drove);
};

using ModelActFn = std::function<ContinuousAction(std::span<const double>)>;
using FeaturizeFn = std::function<std::vector<double>(const Observation&)>;

// Runs one episode per schedule entry and appends every visited state with
// its expert label. model_act may be empty for pure-expert rollouts.
DemoDataset collect_demos(Environment& env, const ExpertConfig& expert,
                          std::span<const double> epsilon_schedule, const ModelActFn& model_act,
                          const FeaturizeFn& featurize, Rng& env_rng, Rng& flicker_rng,
                          Rng& blend_rng);

// SGD on the mean squared action error; returns the full-dataset MSE after
// training. Zero epochs leaves the net untouched (and still reports the MSE).
// Throws NumericError on divergence.
double fit_regression(const DemoDataset& data, const Mlp& net, ParamSet& params, int epochs,
                      double learning_rate, int batch_size, Rng& rng);

// Clamp-and-split of the regression net's raw (steer, throttle) output.
ContinuousAction clone_action(std::span<const double> net_output);

} // namespace lanesim

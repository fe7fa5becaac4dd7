#include "lanesim/apprentice.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

ContinuousAction p_controller(double track_pos, double psi, double speed_x,
                              const ExpertConfig& cfg) {
    const double steer = -cfg.k_steer * track_pos - cfg.k_psi * psi;
    const double throttle = cfg.k_speed * (cfg.v_target - speed_x);
    return action_from_steer_throttle(steer, throttle);
}

ContinuousAction p_controller(const CarState& state, const TrackSpec& track,
                              const ExpertConfig& cfg) {
    return p_controller(state.d / track.half_width, state.psi, state.v * std::cos(state.psi),
                        cfg);
}

BlendChoice blended_step(const ContinuousAction& model_action,
                         const ContinuousAction& expert_action, double epsilon, Rng& rng) {
    BlendChoice choice;
    choice.from_model = rng.uniform() < epsilon;
    choice.action = choice.from_model ? model_action : expert_action;
    return choice;
}

void DemoDataset::append(std::vector<double> f, std::array<double, 2> a, bool model_drove) {
    features.push_back(std::move(f));
    actions.push_back(a);
    from_model.push_back(model_drove);
}

DemoDataset collect_demos(Environment& env, const ExpertConfig& expert,
                          std::span<const double> epsilon_schedule, const ModelActFn& model_act,
                          const FeaturizeFn& featurize, Rng& env_rng, Rng& flicker_rng,
                          Rng& blend_rng) {
    DemoDataset data;
    for (double epsilon : epsilon_schedule) {
        auto [state, obs] = env.reset(env_rng, flicker_rng);
        bool terminal = false;
        while (!terminal) {
            const auto features = featurize(obs);
            const ContinuousAction expert_action =
                p_controller(env.state(), env.track(), expert);
            ContinuousAction driven = expert_action;
            bool from_model = false;
            if (model_act && epsilon > 0.0) {
                const BlendChoice choice =
                    blended_step(model_act(features), expert_action, epsilon, blend_rng);
                driven = choice.action;
                from_model = choice.from_model;
            }
            data.append(features, {expert_action.steer, throttle_axis_of(expert_action)},
                        from_model);
            const StepResult result = env.step(driven, flicker_rng);
            obs = result.obs;
            terminal = result.terminal;
        }
    }
    return data;
}

double fit_regression(const DemoDataset& data, const Mlp& net, ParamSet& params, int epochs,
                      double learning_rate, int batch_size, Rng& rng) {
    if (data.size() == 0) throw Error("fit_regression: empty dataset");
    if (batch_size < 1) throw Error("fit_regression: batch_size must be >= 1");
    const auto n = data.size();
    const auto dim = static_cast<std::size_t>(net.output_size());

    Mlp::Cache cache;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const std::size_t batches = (n + static_cast<std::size_t>(batch_size) - 1) /
                                    static_cast<std::size_t>(batch_size);
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t take = std::min<std::size_t>(batch_size, n);
            const double inv = 1.0 / static_cast<double>(take);
            for (std::size_t k = 0; k < take; ++k) {
                const auto row = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n)));
                const auto out = net.forward(params, data.features[row], &cache);
                std::vector<double> grad(dim);
                for (std::size_t j = 0; j < dim; ++j) {
                    grad[j] = 2.0 * (out[j] - data.actions[row][j]) * inv;
                }
                net.backward(params, cache, grad);
            }
            sgd_step(params, learning_rate);
        }
    }

    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto out = net.forward(params, data.features[i]);
        for (std::size_t j = 0; j < dim; ++j) {
            const double e = out[j] - data.actions[i][j];
            mse += e * e;
        }
    }
    mse /= static_cast<double>(n);
    if (!std::isfinite(mse)) throw NumericError("fit_regression: training diverged");
    return mse;
}

ContinuousAction clone_action(std::span<const double> net_output) {
    return action_from_steer_throttle(net_output[0], net_output[1]);
}

} // namespace lanesim

#pragma once

#include "lanesim/nn.hpp"
#include "lanesim/replay.hpp"
#include "lanesim/rng.hpp"

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace lanesim {

// Differentiable critic hook: writes dQ/da into dq_da and returns Q(s, a).
// Production code passes the learned critic net; tests can pass closed forms.
using CriticFn = std::function<double(std::span<const double> state,
                                      std::span<const double> action,
                                      std::span<double> dq_da)>;

// One deterministic-policy ascent step: the actor climbs dQ/da * da/du, the
// chain-rule product of the critic's action gradient and the actor Jacobian.
// Returns the mean critic value over the batch. With squash=true the actor
// outputs pass through tanh before reaching the critic.
double ddac_actor_ascent(const Mlp& actor, ParamSet& actor_params,
                         std::span<const std::vector<double>> states, const CriticFn& critic,
                         double learning_rate, bool squash);

struct DdacOptions {
    std::vector<int> actor_hidden{64, 64};
    std::vector<int> critic_hidden{64, 64};
    double gamma = 0.9;
    double lr_actor = 0.0005;
    double lr_critic = 0.005;
};

// Deterministic actor-critic over the continuous (steer, throttle) pair.
// Both heads squash through tanh; exploration adds pre-squash Gaussian noise.
class DdacAgent {
  public:
    static constexpr int kActionDim = 2;

    DdacAgent(int state_size, DdacOptions opt, Rng& init_rng);

    std::array<double, 2> actor_raw(std::span<const double> features) const;
    std::array<double, 2> act(std::span<const double> features, double noise_sigma,
                              Rng& rng) const;

    // Critic TD step plus actor ascent on the same batch; returns critic loss.
    double train_batch(std::span<const Transition* const> batch);

    int state_size() const { return actor_.input_size(); }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    ParamSet& actor_params() { return actor_params_; }
    ParamSet& critic_params() { return critic_params_; }
    const ParamSet& actor_params() const { return actor_params_; }
    const ParamSet& critic_params() const { return critic_params_; }
    const DdacOptions& options() const { return opt_; }

    double critic_value(std::span<const double> features, std::span<const double> action) const;

  private:
    std::vector<double> critic_input(std::span<const double> features,
                                     std::span<const double> action) const;

    DdacOptions opt_;
    Mlp actor_;
    Mlp critic_;
    ParamSet actor_params_;
    ParamSet critic_params_;
};

} // namespace lanesim

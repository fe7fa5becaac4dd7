#pragma once

#include "lanesim/nn.hpp"
#include "lanesim/replay.hpp"
#include "lanesim/rng.hpp"

#include <span>
#include <vector>

namespace lanesim {

// With probability epsilon a uniform action, otherwise the argmax with
// lowest-index tie-breaking. Always consumes one uniform for the branch draw.
int epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng);

// Mean squared TD error over the batch, with gradients flowing only through
// the prediction branch Q(s, a). The target branch uses target_params when
// given, otherwise the live params; either way it is detached. Terminal
// transitions bootstrap with zero. Throws NumericError on a non-finite loss.
double dqn_loss_and_grads(const Mlp& net, ParamSet& params,
                          std::span<const Transition* const> batch, double gamma,
                          const ParamSet* target_params);

struct DqnOptions {
    std::vector<int> hidden{64, 64};
    double gamma = 0.9;
    double learning_rate = 0.005;
    bool use_target_net = false;
    int target_sync_every = 500; // gradient steps between target syncs
};

// Feedforward Q-network over tiled actions.
class DqnAgent {
  public:
    DqnAgent(int input_size, int n_actions, DqnOptions opt, Rng& init_rng);

    std::vector<double> q_values(std::span<const double> features) const;
    int act(std::span<const double> features, double epsilon, Rng& rng) const;

    // One SGD step on the batch; returns the loss.
    double train_batch(std::span<const Transition* const> batch);

    int n_actions() const { return n_actions_; }
    int input_size() const { return net_.input_size(); }
    const Mlp& net() const { return net_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const DqnOptions& options() const { return opt_; }
    std::int64_t updates() const { return updates_; }
    void set_updates(std::int64_t n) { updates_ = n; }
    void sync_target();
    ParamSet* target_params() { return opt_.use_target_net ? &target_params_ : nullptr; }

  private:
    DqnOptions opt_;
    int n_actions_;
    Mlp net_;
    ParamSet params_;
    ParamSet target_params_;
    std::int64_t updates_ = 0;
};

} // namespace lanesim

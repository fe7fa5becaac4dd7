#pragma once

#include "lanesim/nn.hpp"
#include "lanesim/replay.hpp"
#include "lanesim/rng.hpp"

#include <span>
#include <vector>

namespace lanesim {

// TD loss over a time-ordered fragment: the LSTM is unrolled from a zero
// hidden state over the observations, a linear head reads Q-values per step,
// and targets come from a detached unroll of the same network over the next
// observations. Gradients are truncated at bptt_len-step window boundaries.
// With bypass=true the recurrent encoder is skipped and the head reads the
// raw features, which reduces the loss to the feedforward DQN loss.
// Throws Error when step_count is not strictly increasing.
double drqn_loss_and_grads(const LstmCell& lstm, const Mlp& head, ParamSet& params,
                           std::span<const Transition> fragment, double gamma, int bptt_len,
                           bool bypass);

struct DrqnOptions {
    int lstm_hidden = 32;
    double gamma = 0.9;
    double learning_rate = 0.005;
    int fragment_len = 16;
    int bptt_len = 16;
    bool bypass_lstm = false; // test configuration: identity wiring, no recurrence
};

// Recurrent Q-network: LSTM state encoder plus linear Q head. The acting-time
// hidden state persists across an episode and resets at episode start.
class DrqnAgent {
  public:
    DrqnAgent(int input_size, int n_actions, DrqnOptions opt, Rng& init_rng);

    void begin_episode();
    std::vector<double> q_values(std::span<const double> features); // advances hidden state
    int act(std::span<const double> features, double epsilon, Rng& rng);

    // One SGD step on a contiguous fragment; returns the loss.
    double train_fragment(std::span<const Transition> fragment);

    int n_actions() const { return head_.output_size(); }
    int input_size() const { return input_size_; }
    const LstmCell& lstm() const { return lstm_; }
    const Mlp& head() const { return head_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const DrqnOptions& options() const { return opt_; }
    const LstmState& hidden() const { return hidden_; }

  private:
    DrqnOptions opt_;
    int input_size_;
    LstmCell lstm_;
    Mlp head_;
    ParamSet params_;
    LstmState hidden_;
};

} // namespace lanesim

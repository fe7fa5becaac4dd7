#pragma once

#include "lanesim/nn.hpp"
#include "lanesim/rng.hpp"
#include "lanesim/sim.hpp"

#include <span>
#include <string>
#include <vector>

namespace lanesim {

// Hard attention over the rangefinder array: a contiguous window of `window`
// rays out of `total_rays`, placed at one of n_positions() offsets.
struct GlimpseConfig {
    int total_rays = 9;
    int window = 3;

    int n_positions() const { return total_rays - window + 1; }
    void validate() const; // throws ConfigError
};

// Categorical policy over window positions, conditioned on a small context
// vector (previous window summary + speed).
class GlimpsePolicy {
  public:
    GlimpsePolicy() = default;
    GlimpsePolicy(int context_size, int n_positions, const std::vector<int>& hidden,
                  std::string prefix);

    void init(ParamSet& params, Rng& rng) const;

    struct Selection {
        int position = 0;
        double log_prob = 0.0;
        std::vector<double> probs;
        Mlp::Cache cache; // kept for the REINFORCE backward pass
    };

    Selection select(const ParamSet& params, std::span<const double> context, Rng& rng) const;
    Selection select_greedy(const ParamSet& params, std::span<const double> context) const;

    int n_positions() const { return net_.output_size(); }
    int context_size() const { return net_.input_size(); }
    const Mlp& net() const { return net_; }

  private:
    Selection evaluate(const ParamSet& params, std::span<const double> context) const;

    Mlp net_;
};

double categorical_entropy(std::span<const double> probs);

// The reduced feature vector fed to the Q-network:
// [ranges[position .. position+window-1], track_pos, speed_x].
// Throws Error when the observation carries no (or too few) rays.
std::vector<double> attend_observe(const Observation& obs, int position,
                                   const GlimpseConfig& cfg);

// First-layer multiplies spent on the ray block of the Q-network input; by
// construction proportional to the window width, not the full array.
std::int64_t sensor_block_multiplies(const GlimpseConfig& cfg, int first_hidden_size);

struct ReinforceBaseline {
    double value = 0.0;
    double decay = 0.99;

    void update(double g) { value = decay * value + (1.0 - decay) * g; }
};

struct GlimpseStep {
    GlimpsePolicy::Selection selection;
    double return_to_go = 0.0;
};

// One REINFORCE step on the surrogate -sum_t log pi(g_t) * (G_t - baseline).
// Advantages use the baseline value from episode start; the baseline then
// absorbs each return by EMA. Returns the surrogate value.
// Throws NumericError on non-finite advantages.
double reinforce_update(const GlimpsePolicy& policy, ParamSet& params,
                        std::span<const GlimpseStep> episode, ReinforceBaseline& baseline,
                        double learning_rate);

} // namespace lanesim

#include "lanesim/glimpse.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

void GlimpseConfig::validate() const {
    if (total_rays < 1) throw ConfigError("glimpse: total_rays must be >= 1");
    if (window < 1 || window > total_rays) {
        throw ConfigError("glimpse: window must be in [1, total_rays]");
    }
}

GlimpsePolicy::GlimpsePolicy(int context_size, int n_positions, const std::vector<int>& hidden,
                             std::string prefix) {
    MlpSpec spec;
    spec.layer_sizes.push_back(context_size);
    for (int h : hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(n_positions);
    net_ = Mlp(spec, std::move(prefix));
}

void GlimpsePolicy::init(ParamSet& params, Rng& rng) const { net_.init(params, rng); }

GlimpsePolicy::Selection GlimpsePolicy::evaluate(const ParamSet& params,
                                                 std::span<const double> context) const {
    Selection sel;
    const auto logits = net_.forward(params, context, &sel.cache);
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    sel.probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        sel.probs[i] = std::exp(logits[i] - zmax);
        total += sel.probs[i];
    }
    for (auto& p : sel.probs) p /= total;
    return sel;
}

GlimpsePolicy::Selection GlimpsePolicy::select(const ParamSet& params,
                                               std::span<const double> context,
                                               Rng& rng) const {
    Selection sel = evaluate(params, context);
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = static_cast<int>(sel.probs.size()) - 1;
    for (std::size_t i = 0; i < sel.probs.size(); ++i) {
        acc += sel.probs[i];
        if (u < acc) {
            pick = static_cast<int>(i);
            break;
        }
    }
    sel.position = pick;
    sel.log_prob = std::log(sel.probs[static_cast<std::size_t>(pick)]);
    return sel;
}

GlimpsePolicy::Selection GlimpsePolicy::select_greedy(const ParamSet& params,
                                                      std::span<const double> context) const {
    Selection sel = evaluate(params, context);
    sel.position = static_cast<int>(
        std::max_element(sel.probs.begin(), sel.probs.end()) - sel.probs.begin());
    sel.log_prob = std::log(sel.probs[static_cast<std::size_t>(sel.position)]);
    return sel;
}

double categorical_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

std::vector<double> attend_observe(const Observation& obs, int position,
                                   const GlimpseConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(obs.ranges.size()) != cfg.total_rays) {
        throw Error("attend_observe: observation has " + std::to_string(obs.ranges.size()) +
                    " rays, config expects " + std::to_string(cfg.total_rays));
    }
    if (position < 0 || position >= cfg.n_positions()) {
        throw Error("attend_observe: position out of range");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(cfg.window) + 2);
    for (int i = 0; i < cfg.window; ++i) {
        out.push_back(obs.ranges[static_cast<std::size_t>(position + i)]);
    }
    out.push_back(obs.track_pos);
    out.push_back(obs.speed_x);
    return out;
}

std::int64_t sensor_block_multiplies(const GlimpseConfig& cfg, int first_hidden_size) {
    return static_cast<std::int64_t>(cfg.window) * first_hidden_size;
}

double reinforce_update(const GlimpsePolicy& policy, ParamSet& params,
                        std::span<const GlimpseStep> episode, ReinforceBaseline& baseline,
                        double learning_rate) {
    double surrogate = 0.0;
    for (const auto& step : episode) {
        const double advantage = step.return_to_go - baseline.value;
        if (!std::isfinite(advantage)) {
            throw NumericError("reinforce_update: non-finite advantage");
        }
        surrogate -= step.selection.log_prob * advantage;
        // d(-logpi_j * A)/dlogits = A * (probs - onehot_j)
        std::vector<double> grad(step.selection.probs.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double onehot =
                (static_cast<int>(i) == step.selection.position) ? 1.0 : 0.0;
            grad[i] = advantage * (step.selection.probs[i] - onehot);
        }
        policy.net().backward(params, step.selection.cache, grad);
    }
    sgd_step(params, learning_rate);
    for (const auto& step : episode) baseline.update(step.return_to_go);
    return surrogate;
}

} // namespace lanesim

#include "lanesim/ddac.hpp"

#include "lanesim/error.hpp"

#include <cmath>

namespace lanesim {

double ddac_actor_ascent(const Mlp& actor, ParamSet& actor_params,
                         std::span<const std::vector<double>> states, const CriticFn& critic,
                         double learning_rate, bool squash) {
    if (states.empty()) throw Error("ddac_actor_ascent: empty batch");
    const double inv_b = 1.0 / static_cast<double>(states.size());
    const auto dim = static_cast<std::size_t>(actor.output_size());
    double mean_q = 0.0;
    Mlp::Cache cache;
    for (const auto& s : states) {
        auto raw = actor.forward(actor_params, s, &cache);
        std::vector<double> a(dim);
        for (std::size_t i = 0; i < dim; ++i) a[i] = squash ? std::tanh(raw[i]) : raw[i];
        std::vector<double> dq_da(dim, 0.0);
        mean_q += critic(s, a, dq_da) * inv_b;
        // Ascent on Q: accumulate the negative gradient so sgd_step climbs.
        std::vector<double> grad_raw(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            const double jac = squash ? (1.0 - a[i] * a[i]) : 1.0;
            grad_raw[i] = -inv_b * dq_da[i] * jac;
        }
        actor.backward(actor_params, cache, grad_raw);
    }
    sgd_step(actor_params, learning_rate);
    return mean_q;
}

DdacAgent::DdacAgent(int state_size, DdacOptions opt, Rng& init_rng) : opt_(std::move(opt)) {
    MlpSpec actor_spec;
    actor_spec.layer_sizes.push_back(state_size);
    for (int h : opt_.actor_hidden) actor_spec.layer_sizes.push_back(h);
    actor_spec.layer_sizes.push_back(kActionDim);
    actor_ = Mlp(actor_spec, "actor");
    actor_.init(actor_params_, init_rng);

    MlpSpec critic_spec;
    critic_spec.layer_sizes.push_back(state_size + kActionDim);
    for (int h : opt_.critic_hidden) critic_spec.layer_sizes.push_back(h);
    critic_spec.layer_sizes.push_back(1);
    critic_ = Mlp(critic_spec, "critic");
    critic_.init(critic_params_, init_rng);
}

std::vector<double> DdacAgent::critic_input(std::span<const double> features,
                                            std::span<const double> action) const {
    std::vector<double> in(features.begin(), features.end());
    in.insert(in.end(), action.begin(), action.end());
    return in;
}

double DdacAgent::critic_value(std::span<const double> features,
                               std::span<const double> action) const {
    return critic_.forward(critic_params_, critic_input(features, action))[0];
}

std::array<double, 2> DdacAgent::actor_raw(std::span<const double> features) const {
    const auto out = actor_.forward(actor_params_, features);
    return {out[0], out[1]};
}

std::array<double, 2> DdacAgent::act(std::span<const double> features, double noise_sigma,
                                     Rng& rng) const {
    auto raw = actor_raw(features);
    if (noise_sigma > 0.0) {
        raw[0] += noise_sigma * rng.normal();
        raw[1] += noise_sigma * rng.normal();
    }
    return {std::tanh(raw[0]), std::tanh(raw[1])};
}

double DdacAgent::train_batch(std::span<const Transition* const> batch) {
    if (batch.empty()) throw Error("DdacAgent: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    // Critic: TD toward r + gamma * Q(s', pi(s')), detached target.
    double loss = 0.0;
    Mlp::Cache cache;
    for (const Transition* t : batch) {
        double target = t->reward;
        if (!t->terminal) {
            const auto raw = actor_.forward(actor_params_, t->next_obs);
            const std::array<double, 2> a_next{std::tanh(raw[0]), std::tanh(raw[1])};
            target += opt_.gamma * critic_value(t->next_obs, a_next);
        }
        const auto in = critic_input(t->obs, t->action_cont);
        const double q = critic_.forward(critic_params_, in, &cache)[0];
        const double residual = q - target;
        loss += residual * residual * inv_b;
        const std::vector<double> grad_out{2.0 * residual * inv_b};
        critic_.backward(critic_params_, cache, grad_out);
    }
    if (!std::isfinite(loss)) throw NumericError("ddac critic loss is not finite");
    sgd_step(critic_params_, opt_.lr_critic);

    // Actor: climb the frozen critic through the squash heads.
    std::vector<std::vector<double>> states;
    states.reserve(batch.size());
    for (const Transition* t : batch) states.push_back(t->obs);
    const CriticFn critic_fn = [this](std::span<const double> s, std::span<const double> a,
                                      std::span<double> dq_da) {
        Mlp::Cache c;
        const auto in = critic_input(s, a);
        const double q = critic_.forward(critic_params_, in, &c)[0];
        const auto din = critic_.backward(critic_params_, c, std::vector<double>{1.0},
                                          /*accumulate_param_grads=*/false);
        for (std::size_t i = 0; i < dq_da.size(); ++i) dq_da[i] = din[s.size() + i];
        return q;
    };
    ddac_actor_ascent(actor_, actor_params_, states, critic_fn, opt_.lr_actor, /*squash=*/true);
    return loss;
}

} // namespace lanesim

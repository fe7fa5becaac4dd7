#include "lanesim/dqn.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

int epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng) {
    if (q_values.empty()) throw Error("epsilon_greedy: empty value vector");
    if (rng.uniform() < epsilon) {
        return rng.uniform_int(static_cast<int>(q_values.size()));
    }
    int best = 0;
    for (std::size_t i = 1; i < q_values.size(); ++i) {
        if (q_values[i] > q_values[best]) best = static_cast<int>(i);
    }
    return best;
}

double dqn_loss_and_grads(const Mlp& net, ParamSet& params,
                          std::span<const Transition* const> batch, double gamma,
                          const ParamSet* target_params) {
    if (batch.empty()) throw Error("dqn_loss_and_grads: empty batch");
    const ParamSet& tparams = target_params ? *target_params : params;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    Mlp::Cache cache;
    for (const Transition* t : batch) {
        double target = t->reward;
        if (!t->terminal) {
            const auto q_next = net.forward(tparams, t->next_obs);
            target += gamma * *std::max_element(q_next.begin(), q_next.end());
        }
        const auto q = net.forward(params, t->obs, &cache);
        if (t->action < 0 || t->action >= static_cast<int>(q.size())) {
            throw Error("dqn_loss_and_grads: action index out of range");
        }
        const double residual = q[static_cast<std::size_t>(t->action)] - target;
        loss += residual * residual * inv_b;
        std::vector<double> grad_out(q.size(), 0.0);
        grad_out[static_cast<std::size_t>(t->action)] = 2.0 * residual * inv_b;
        net.backward(params, cache, grad_out);
    }
    if (!std::isfinite(loss)) throw NumericError("dqn loss is not finite");
    return loss;
}

DqnAgent::DqnAgent(int input_size, int n_actions, DqnOptions opt, Rng& init_rng)
    : opt_(std::move(opt)), n_actions_(n_actions) {
    MlpSpec spec;
    spec.layer_sizes.push_back(input_size);
    for (int h : opt_.hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(n_actions);
    net_ = Mlp(spec, "q");
    net_.init(params_, init_rng);
    if (opt_.use_target_net) sync_target();
}

std::vector<double> DqnAgent::q_values(std::span<const double> features) const {
    return net_.forward(params_, features);
}

int DqnAgent::act(std::span<const double> features, double epsilon, Rng& rng) const {
    const auto q = q_values(features);
    return epsilon_greedy(q, epsilon, rng);
}

double DqnAgent::train_batch(std::span<const Transition* const> batch) {
    const ParamSet* tp = opt_.use_target_net ? &target_params_ : nullptr;
    const double loss = dqn_loss_and_grads(net_, params_, batch, opt_.gamma, tp);
    sgd_step(params_, opt_.learning_rate);
    ++updates_;
    if (opt_.use_target_net && updates_ % opt_.target_sync_every == 0) sync_target();
    return loss;
}

void DqnAgent::sync_target() {
    target_params_ = ParamSet{};
    for (const auto& name : params_.names()) {
        const Tensor& src = params_.at(name);
        Tensor& dst = target_params_.add(name, src.shape);
        dst.value = src.value;
    }
}

} // namespace lanesim

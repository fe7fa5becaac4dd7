#include "lanesim/drqn.hpp"

#include "lanesim/dqn.hpp"
#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

double drqn_loss_and_grads(const LstmCell& lstm, const Mlp& head, ParamSet& params,
                           std::span<const Transition> fragment, double gamma, int bptt_len,
                           bool bypass) {
    if (fragment.empty()) throw Error("drqn_loss_and_grads: empty fragment");
    if (bptt_len < 1) throw Error("drqn_loss_and_grads: bptt_len must be >= 1");
    for (std::size_t t = 1; t < fragment.size(); ++t) {
        if (fragment[t].step_count <= fragment[t - 1].step_count) {
            throw Error("drqn_loss_and_grads: fragment is not time-ordered");
        }
    }

    const std::size_t len = fragment.size();
    const double inv_t = 1.0 / static_cast<double>(len);

    // Detached target unroll over the next observations.
    std::vector<double> targets(len);
    {
        LstmState hs = lstm.zero_state();
        for (std::size_t t = 0; t < len; ++t) {
            double boot = 0.0;
            if (bypass) {
                if (!fragment[t].terminal) {
                    const auto qn = head.forward(params, fragment[t].next_obs);
                    boot = *std::max_element(qn.begin(), qn.end());
                }
            } else {
                hs = lstm.step(params, fragment[t].next_obs, hs);
                if (!fragment[t].terminal) {
                    const auto qn = head.forward(params, hs.h);
                    boot = *std::max_element(qn.begin(), qn.end());
                }
            }
            targets[t] = fragment[t].reward + (fragment[t].terminal ? 0.0 : gamma * boot);
        }
    }

    // Prediction unroll, caching per step for the backward pass.
    std::vector<LstmCell::Cache> lstm_caches(bypass ? 0 : len);
    std::vector<Mlp::Cache> head_caches(len);
    std::vector<std::vector<double>> head_grads(len);
    double loss = 0.0;
    {
        LstmState hs = lstm.zero_state();
        for (std::size_t t = 0; t < len; ++t) {
            std::vector<double> q;
            if (bypass) {
                q = head.forward(params, fragment[t].obs, &head_caches[t]);
            } else {
                hs = lstm.step(params, fragment[t].obs, hs, &lstm_caches[t]);
                q = head.forward(params, hs.h, &head_caches[t]);
            }
            const int a = fragment[t].action;
            if (a < 0 || a >= static_cast<int>(q.size())) {
                throw Error("drqn_loss_and_grads: action index out of range");
            }
            const double residual = q[static_cast<std::size_t>(a)] - targets[t];
            loss += residual * residual * inv_t;
            head_grads[t].assign(q.size(), 0.0);
            head_grads[t][static_cast<std::size_t>(a)] = 2.0 * residual * inv_t;
        }
    }
    if (!std::isfinite(loss)) throw NumericError("drqn loss is not finite");

    if (bypass) {
        for (std::size_t t = 0; t < len; ++t) {
            head.backward(params, head_caches[t], head_grads[t]);
        }
        return loss;
    }

    // Backward through time, cutting the carried state gradient at window
    // boundaries aligned to the fragment start (truncation at bptt_len).
    const auto hid = static_cast<std::size_t>(lstm.hidden_size());
    std::vector<double> dh(hid, 0.0), dc(hid, 0.0);
    for (std::size_t ti = len; ti-- > 0;) {
        auto dh_head = head.backward(params, head_caches[ti], head_grads[ti]);
        for (std::size_t j = 0; j < hid; ++j) dh[j] += dh_head[j];
        auto back = lstm.backward(params, lstm_caches[ti], dh, dc);
        dh = std::move(back.dh_prev);
        dc = std::move(back.dc_prev);
        if (ti % static_cast<std::size_t>(bptt_len) == 0) {
            std::fill(dh.begin(), dh.end(), 0.0);
            std::fill(dc.begin(), dc.end(), 0.0);
        }
    }
    return loss;
}

DrqnAgent::DrqnAgent(int input_size, int n_actions, DrqnOptions opt, Rng& init_rng)
    : opt_(std::move(opt)), input_size_(input_size) {
    if (!opt_.bypass_lstm) {
        lstm_ = LstmCell(input_size, opt_.lstm_hidden, "lstm");
        lstm_.init(params_, init_rng);
        head_ = Mlp(MlpSpec{{opt_.lstm_hidden, n_actions}}, "head");
    } else {
        head_ = Mlp(MlpSpec{{input_size, n_actions}}, "head");
    }
    head_.init(params_, init_rng);
    hidden_ = opt_.bypass_lstm ? LstmState{} : lstm_.zero_state();
}

void DrqnAgent::begin_episode() {
    if (!opt_.bypass_lstm) hidden_ = lstm_.zero_state();
}

std::vector<double> DrqnAgent::q_values(std::span<const double> features) {
    if (opt_.bypass_lstm) return head_.forward(params_, features);
    hidden_ = lstm_.step(params_, features, hidden_);
    return head_.forward(params_, hidden_.h);
}

int DrqnAgent::act(std::span<const double> features, double epsilon, Rng& rng) {
    const auto q = q_values(features);
    return epsilon_greedy(q, epsilon, rng);
}

double DrqnAgent::train_fragment(std::span<const Transition> fragment) {
    const double loss = drqn_loss_and_grads(lstm_, head_, params_, fragment, opt_.gamma,
                                            opt_.bptt_len, opt_.bypass_lstm);
    sgd_step(params_, opt_.learning_rate);
    return loss;
}

} // namespace lanesim

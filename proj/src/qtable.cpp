#include "lanesim/qtable.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

Discretizer::Discretizer(std::vector<Dim> dims) : dims_(std::move(dims)) {
    for (const auto& d : dims_) {
        if (d.bins < 1 || !(d.hi > d.lo)) throw Error("Discretizer: bad dimension spec");
    }
}

std::size_t Discretizer::index(std::span<const double> features) const {
    if (features.size() != dims_.size()) throw Error("Discretizer: feature size mismatch");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        const auto& d = dims_[i];
        const double t = (features[i] - d.lo) / (d.hi - d.lo) * d.bins;
        int bin = static_cast<int>(std::floor(t));
        bin = std::clamp(bin, 0, d.bins - 1);
        idx = idx * static_cast<std::size_t>(d.bins) + static_cast<std::size_t>(bin);
    }
    return idx;
}

std::size_t Discretizer::bin_count() const {
    std::size_t n = 1;
    for (const auto& d : dims_) n *= static_cast<std::size_t>(d.bins);
    return n;
}

double QTable::get(std::uint64_t state, int action) const {
    const auto it = cells_.find({state, action});
    return it == cells_.end() ? 0.0 : it->second;
}

void QTable::set(std::uint64_t state, int action, double value) {
    cells_[{state, action}] = value;
}

int QTable::greedy_action(std::uint64_t state, int n_actions) const {
    int best = 0;
    double best_v = get(state, 0);
    for (int a = 1; a < n_actions; ++a) {
        const double v = get(state, a);
        if (v > best_v) {
            best_v = v;
            best = a;
        }
    }
    return best;
}

double QTable::max_value(std::uint64_t state, int n_actions) const {
    return get(state, greedy_action(state, n_actions));
}

void q_update(QTable& table, std::uint64_t state, int action, double reward,
              std::uint64_t next_state, bool terminal, int n_actions, double alpha,
              double gamma) {
    const double bootstrap = terminal ? 0.0 : gamma * table.max_value(next_state, n_actions);
    const double old_q = table.get(state, action);
    table.set(state, action, old_q + alpha * (reward + bootstrap - old_q));
}

} // namespace lanesim

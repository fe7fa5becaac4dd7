#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <tuple>
#include <vector>

namespace lanesim {

// Uniform per-dimension binning; out-of-range values clamp to the edge bins.
class Discretizer {
  public:
    struct Dim {
        double lo = 0.0;
        double hi = 1.0;
        int bins = 1;
    };

    Discretizer() = default;
    explicit Discretizer(std::vector<Dim> dims);

    std::size_t index(std::span<const double> features) const;
    std::size_t bin_count() const;
    std::size_t dim_count() const { return dims_.size(); }

  private:
    std::vector<Dim> dims_;
};

// Sparse action-value table; absent cells read as zero and the table only
// grows.
class QTable {
  public:
    using Key = std::pair<std::uint64_t, int>;

    double get(std::uint64_t state, int action) const;
    void set(std::uint64_t state, int action, double value);
    int greedy_action(std::uint64_t state, int n_actions) const; // lowest index wins ties
    double max_value(std::uint64_t state, int n_actions) const;
    std::size_t entries() const { return cells_.size(); }
    const std::map<Key, double>& cells() const { return cells_; }
    std::map<Key, double>& cells() { return cells_; }

  private:
    std::map<Key, double> cells_;
};

// Tabular TD(0) update: Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)),
// with no bootstrap term on terminal transitions.
void q_update(QTable& table, std::uint64_t state, int action, double reward,
              std::uint64_t next_state, bool terminal, int n_actions, double alpha,
              double gamma);

} // namespace lanesim

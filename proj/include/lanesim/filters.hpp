#pragma once

#include "lanesim/nn.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace lanesim {

// Discretized belief over a scalar state: probability mass at uniformly
// spaced support points (endpoints included).
struct GridBelief {
    double x_min = -1.0;
    double x_max = 1.0;
    std::vector<double> mass;

    static GridBelief uniform(double x_min, double x_max, std::size_t n);
    static GridBelief delta(double x_min, double x_max, std::size_t n, std::size_t at);

    std::size_t size() const { return mass.size(); }
    double spacing() const {
        return (x_max - x_min) / static_cast<double>(mass.size() - 1);
    }
    double point(std::size_t i) const { return x_min + spacing() * static_cast<double>(i); }

    double mean() const;
    double variance() const;
    double total_mass() const;

    // L1 distance between this belief's density and a Gaussian density,
    // integrated over the grid.
    double l1_to_gaussian(double mu, double var) const;

    void renormalize(); // throws NumericError if total mass is not positive finite
};

// Row-stochastic transition operator on the grid. Rows are windowed, so a
// predict step costs O(N * window) instead of O(N^2).
class MotionKernel {
  public:
    // p(x'|x) = N(x'; a*x, q). Mass stepping outside [x_min, x_max] is folded
    // back by reflection, which conserves it without renormalization
    // artifacts. Throws ConfigError if the grid is too coarse for q (raw row
    // quadrature off by more than 1e-6).
    static MotionKernel gaussian(double x_min, double x_max, std::size_t n, double a, double q);

    // Explicit dense rows of transition mass; each row must sum to 1 within
    // 1e-6. rows[j][i] = P(to i | from j).
    static MotionKernel from_rows(std::vector<std::vector<double>> rows);

    static MotionKernel identity(std::size_t n);

    void predict(std::span<const double> mass_in, std::span<double> mass_out) const;
    std::size_t size() const { return rows_.size(); }

  private:
    struct Row {
        std::size_t start = 0;
        std::vector<double> w;
    };
    std::vector<Row> rows_;
};

// One Bayes recursion: Chapman-Kolmogorov predict through the motion kernel,
// pointwise likelihood update, renormalization. Throws NumericError when the
// likelihood kills all mass.
GridBelief bayes_step(const GridBelief& belief, const MotionKernel& motion,
                      const std::function<double(double)>& likelihood);

struct GaussianBelief {
    double mean = 0.0;
    double variance = 1.0;
};

struct KalmanStepResult {
    GaussianBelief predicted;
    GaussianBelief posterior;
    double gain = 0.0;
};

// Scalar Kalman recursion x' = a*x + w, obs = h*x + v. The posterior mean
// factors as (1 - k*h)*a*mean + k*obs: the transition pathway scaled by the
// keep term and the observation pathway scaled by the gain.
KalmanStepResult kalman_step(const GaussianBelief& belief, double a, double process_var,
                             double h, double obs_var, double obs);

// h' = tanh(W_hh * h + W_xh * x); the same keep/input split with learned
// weights in place of the Kalman terms.
std::vector<double> rnn_state_step(const Tensor& w_hh, const Tensor& w_xh,
                                   std::span<const double> h, std::span<const double> x);

} // namespace lanesim

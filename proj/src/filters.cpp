#include "lanesim/filters.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double gaussian_pdf(double x, double mu, double var) {
    const double z = (x - mu) * (x - mu) / var;
    return kInvSqrt2Pi / std::sqrt(var) * std::exp(-0.5 * z);
}

// Kahan-compensated sum; belief updates rely on mass staying 1 to ~1e-12.
double stable_sum(std::span<const double> xs) {
    double sum = 0.0, comp = 0.0;
    for (double x : xs) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

} // namespace

GridBelief GridBelief::uniform(double x_min, double x_max, std::size_t n) {
    if (n < 2 || !(x_max > x_min)) throw Error("GridBelief: bad support");
    GridBelief b;
    b.x_min = x_min;
    b.x_max = x_max;
    b.mass.assign(n, 1.0 / static_cast<double>(n));
    return b;
}

GridBelief GridBelief::delta(double x_min, double x_max, std::size_t n, std::size_t at) {
    GridBelief b = uniform(x_min, x_max, n);
    std::fill(b.mass.begin(), b.mass.end(), 0.0);
    if (at >= n) throw Error("GridBelief: delta index out of range");
    b.mass[at] = 1.0;
    return b;
}

double GridBelief::total_mass() const { return stable_sum(mass); }

double GridBelief::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) m += mass[i] * point(i);
    return m;
}

double GridBelief::variance() const {
    const double mu = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        const double dx = point(i) - mu;
        v += mass[i] * dx * dx;
    }
    return v;
}

double GridBelief::l1_to_gaussian(double mu, double var) const {
    const double dx = spacing();
    double acc = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        acc += std::abs(mass[i] / dx - gaussian_pdf(point(i), mu, var)) * dx;
    }
    return acc;
}

void GridBelief::renormalize() {
    const double total = total_mass();
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw NumericError("GridBelief: degenerate belief (total mass " +
                           std::to_string(total) + ")");
    }
    for (auto& m : mass) m /= total;
}

MotionKernel MotionKernel::gaussian(double x_min, double x_max, std::size_t n, double a,
                                    double q) {
    if (n < 2) throw Error("MotionKernel: grid too small");
    if (!(q > 0.0)) throw Error("MotionKernel: process variance must be > 0");
    const double dx = (x_max - x_min) / static_cast<double>(n - 1);
    const double sigma = std::sqrt(q);
    const auto halfwin =
        static_cast<std::ptrdiff_t>(std::ceil(8.0 * sigma / dx)) + 1;

    MotionKernel kernel;
    kernel.rows_.resize(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t j = 0; j < count; ++j) {
        const double x_from = x_min + dx * static_cast<double>(j);
        const double mu = a * x_from;
        const auto center = static_cast<std::ptrdiff_t>(std::lround((mu - x_min) / dx));
        const std::ptrdiff_t lo = center - halfwin;
        const std::ptrdiff_t hi = center + halfwin;

        // Quadrature sanity before reflection: the unbounded row should
        // integrate to ~1 on this grid spacing.
        double raw = 0.0;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            raw += gaussian_pdf(x_min + dx * static_cast<double>(i), mu, q) * dx;
        }
        if (std::abs(raw - 1.0) > 1e-6) {
            throw ConfigError("MotionKernel: grid too coarse for process noise (row sum " +
                              std::to_string(raw) + ")");
        }

        // Fold out-of-domain targets back in by reflection about the edges.
        std::vector<double> folded(n, 0.0);
        std::ptrdiff_t fold_lo = count, fold_hi = -1;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            const double w = gaussian_pdf(x_min + dx * static_cast<double>(i), mu, q) * dx;
            std::ptrdiff_t idx = i;
            // Reflect until inside; the period of reflection is 2(n-1).
            while (idx < 0 || idx >= count) {
                if (idx < 0) idx = -idx;
                if (idx >= count) idx = 2 * (count - 1) - idx;
            }
            folded[static_cast<std::size_t>(idx)] += w;
            fold_lo = std::min(fold_lo, idx);
            fold_hi = std::max(fold_hi, idx);
        }
        Row row;
        row.start = static_cast<std::size_t>(std::max<std::ptrdiff_t>(fold_lo, 0));
        double total = 0.0;
        for (std::ptrdiff_t i = fold_lo; i <= fold_hi; ++i) {
            row.w.push_back(folded[static_cast<std::size_t>(i)]);
            total += folded[static_cast<std::size_t>(i)];
        }
        for (auto& w : row.w) w /= total; // exact row-stochastic
        kernel.rows_[static_cast<std::size_t>(j)] = std::move(row);
    }
    return kernel;
}

MotionKernel MotionKernel::from_rows(std::vector<std::vector<double>> rows) {
    MotionKernel kernel;
    const std::size_t n = rows.size();
    kernel.rows_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (rows[j].size() != n) throw Error("MotionKernel: rows must be square");
        double total = 0.0;
        for (double w : rows[j]) {
            if (w < 0.0) throw Error("MotionKernel: negative transition mass");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw ConfigError("MotionKernel: row " + std::to_string(j) +
                              " mass sums to " + std::to_string(total) + ", expected 1");
        }
        Row row;
        row.start = 0;
        row.w = std::move(rows[j]);
        for (auto& w : row.w) w /= total;
        kernel.rows_[j] = std::move(row);
    }
    return kernel;
}

MotionKernel MotionKernel::identity(std::size_t n) {
    MotionKernel kernel;
    kernel.rows_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        kernel.rows_[j].start = j;
        kernel.rows_[j].w = {1.0};
    }
    return kernel;
}

void MotionKernel::predict(std::span<const double> mass_in, std::span<double> mass_out) const {
    if (mass_in.size() != rows_.size() || mass_out.size() != rows_.size()) {
        throw Error("MotionKernel: belief size does not match kernel");
    }
    std::fill(mass_out.begin(), mass_out.end(), 0.0);
    for (std::size_t j = 0; j < rows_.size(); ++j) {
        const double mj = mass_in[j];
        if (mj == 0.0) continue;
        const Row& row = rows_[j];
        for (std::size_t k = 0; k < row.w.size(); ++k) {
            mass_out[row.start + k] += row.w[k] * mj;
        }
    }
}

GridBelief bayes_step(const GridBelief& belief, const MotionKernel& motion,
                      const std::function<double(double)>& likelihood) {
    GridBelief next = belief;
    motion.predict(belief.mass, next.mass);
    for (std::size_t i = 0; i < next.mass.size(); ++i) {
        next.mass[i] *= likelihood(next.point(i));
    }
    next.renormalize();
    return next;
}

KalmanStepResult kalman_step(const GaussianBelief& belief, double a, double process_var,
                             double h, double obs_var, double obs) {
    if (!(obs_var > 0.0)) throw Error("kalman_step: observation variance must be > 0");
    if (process_var < 0.0) throw Error("kalman_step: process variance must be >= 0");
    KalmanStepResult result;
    result.predicted.mean = a * belief.mean;
    result.predicted.variance = a * a * belief.variance + process_var;
    const double innovation_var = h * h * result.predicted.variance + obs_var;
    result.gain = result.predicted.variance * h / innovation_var;
    result.posterior.mean =
        result.predicted.mean + result.gain * (obs - h * result.predicted.mean);
    result.posterior.variance = (1.0 - result.gain * h) * result.predicted.variance;
    return result;
}

std::vector<double> rnn_state_step(const Tensor& w_hh, const Tensor& w_xh,
                                   std::span<const double> h, std::span<const double> x) {
    if (w_hh.shape.size() != 2 || w_xh.shape.size() != 2) {
        throw Error("rnn_state_step: weights must be matrices");
    }
    const std::size_t n = w_hh.shape[0];
    if (w_hh.shape[1] != h.size() || w_xh.shape[1] != x.size() || w_xh.shape[0] != n ||
        h.size() != n) {
        throw Error("rnn_state_step: shape mismatch");
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += w_hh.value[r * n + c] * h[c];
        for (std::size_t c = 0; c < x.size(); ++c) acc += w_xh.value[r * x.size() + c] * x[c];
        out[r] = std::tanh(acc);
    }
    return out;
}

} // namespace lanesim

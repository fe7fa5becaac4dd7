#include "lanesim/filters.hpp"

#include "lanesim/error.hpp"
#include "lanesim/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace lanesim;

namespace {

double gaussian_pdf(double x, double mu, double var) {
    return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * M_PI * var);
}

} // namespace

TEST_CASE("kalman_step: hand-computed example A=Q=H=R=1") {
    const auto r = kalman_step(GaussianBelief{0.0, 1.0}, 1.0, 1.0, 1.0, 1.0, 2.0);
    CHECK(r.predicted.mean == doctest::Approx(0.0));
    CHECK(r.predicted.variance == doctest::Approx(2.0));
    CHECK(r.gain == doctest::Approx(2.0 / 3.0));
    CHECK(r.posterior.mean == doctest::Approx(4.0 / 3.0));
    CHECK(r.posterior.variance == doctest::Approx(2.0 / 3.0));
    // Table-form identity: posterior mean = (1-KH) A m + K x.
    CHECK(r.posterior.mean ==
          doctest::Approx((1.0 - r.gain) * 1.0 * 0.0 + r.gain * 2.0));
}

TEST_CASE("kalman_step limits: infinite and vanishing observation noise") {
    SUBCASE("R -> inf ignores the observation") {
        const auto r = kalman_step(GaussianBelief{0.5, 1.0}, 0.9, 0.1, 1.0, 1e12, 100.0);
        CHECK(r.posterior.mean == doctest::Approx(0.9 * 0.5).epsilon(1e-6));
    }
    SUBCASE("R -> 0, Q = 0 trusts the observation") {
        const auto r = kalman_step(GaussianBelief{0.5, 1.0}, 1.0, 0.0, 2.0, 1e-12, 3.0);
        CHECK(r.posterior.mean == doctest::Approx(3.0 / 2.0).epsilon(1e-6));
    }
    SUBCASE("R <= 0 is an error") {
        CHECK_THROWS_AS(kalman_step(GaussianBelief{0, 1}, 1, 1, 1, 0.0, 0.0), Error);
    }
}

TEST_CASE("kalman_step posterior variance never exceeds the predicted variance") {
    Rng rng = Rng::stream(21, "kalman");
    GaussianBelief b{0.0, 1.0};
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(0.5, 1.2);
        const double q = rng.uniform(0.0, 0.5);
        const double h = rng.uniform(0.5, 2.0);
        const double r = rng.uniform(0.05, 2.0);
        const auto res = kalman_step(b, a, q, h, r, rng.normal());
        CHECK(res.posterior.variance <= res.predicted.variance + 1e-15);
        CHECK(res.posterior.variance > 0.0);
        b = res.posterior;
    }
}

TEST_CASE("bayes_step: uniform prior, uniform likelihood, identity motion") {
    GridBelief b = GridBelief::uniform(-1.0, 1.0, 101);
    const auto next = bayes_step(b, MotionKernel::identity(101), [](double) { return 1.0; });
    for (double m : next.mass) CHECK(m == doctest::Approx(1.0 / 101).epsilon(1e-12));
    CHECK(next.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bayes_step: delta prior through a shift kernel stays a delta") {
    const std::size_t n = 21;
    GridBelief b = GridBelief::delta(-1.0, 1.0, n, 5);
    // Deterministic +3-cells shift (reflecting at the top edge, irrelevant here).
    std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        rows[j][std::min(j + 3, n - 1)] = 1.0;
    }
    const auto next =
        bayes_step(b, MotionKernel::from_rows(rows), [](double) { return 1.0; });
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(next.mass[i] == (i == 8 ? doctest::Approx(1.0) : doctest::Approx(0.0)));
    }
}

TEST_CASE("bayes_step: zero posterior mass raises a degenerate-belief error") {
    GridBelief b = GridBelief::uniform(-1.0, 1.0, 11);
    CHECK_THROWS_AS(
        bayes_step(b, MotionKernel::identity(11), [](double) { return 0.0; }),
        NumericError);
}

TEST_CASE("motion kernel rejects rows that do not integrate to one") {
    std::vector<std::vector<double>> rows(3, std::vector<double>(3, 0.0));
    rows[0][0] = 0.4; // short row
    rows[1][1] = 1.0;
    rows[2][2] = 1.0;
    CHECK_THROWS_AS(MotionKernel::from_rows(rows), ConfigError);
    // Too coarse a grid for a tight gaussian.
    CHECK_THROWS_AS(MotionKernel::gaussian(-10.0, 10.0, 11, 1.0, 1e-6), ConfigError);
}

TEST_CASE("grid filter tracks the Kalman closed form on a linear-Gaussian system") {
    const double A = 0.9, Q = 0.19, H = 1.0, R = 0.5;
    const std::size_t n = 4001;
    const double x_lo = -10.0, x_hi = 10.0;

    // Simulate a trajectory.
    Rng rng = Rng::stream(77, "traj");
    std::vector<double> obs;
    double x = 0.0;
    for (int t = 0; t < 50; ++t) {
        x = A * x + std::sqrt(Q) * rng.normal();
        obs.push_back(H * x + std::sqrt(R) * rng.normal());
    }

    const MotionKernel kernel = MotionKernel::gaussian(x_lo, x_hi, n, A, Q);
    GridBelief grid = GridBelief::uniform(x_lo, x_hi, n);
    // Start the grid from the same Gaussian prior the Kalman filter uses.
    GaussianBelief kalman{0.0, 1.0};
    for (std::size_t i = 0; i < n; ++i) {
        grid.mass[i] = gaussian_pdf(grid.point(i), kalman.mean, kalman.variance);
    }
    grid.renormalize();

    for (double z : obs) {
        const auto kres = kalman_step(kalman, A, Q, H, R, z);
        kalman = kres.posterior;
        grid = bayes_step(grid, kernel,
                          [&](double s) { return gaussian_pdf(z, H * s, R); });
        CHECK(grid.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(grid.mean() == doctest::Approx(kalman.mean).epsilon(1e-3));
        CHECK(grid.variance() == doctest::Approx(kalman.variance).epsilon(1e-3));
        CHECK(grid.l1_to_gaussian(kalman.mean, kalman.variance) < 1e-3);
    }
}

TEST_CASE("rnn_state_step: fixed points and memorylessness") {
    ParamSet params;
    Tensor& whh = params.add("whh", {2, 2});
    Tensor& wxh = params.add("wxh", {2, 2});

    SUBCASE("zero state, zero input") {
        whh.value = {0.3, 0.1, -0.2, 0.4};
        wxh.value = {1.0, 0.0, 0.0, 1.0};
        const auto h = rnn_state_step(whh, wxh, std::vector<double>{0, 0},
                                      std::vector<double>{0, 0});
        CHECK(h[0] == 0.0);
        CHECK(h[1] == 0.0);
    }
    SUBCASE("W_hh = 0 makes the state memoryless") {
        std::fill(whh.value.begin(), whh.value.end(), 0.0);
        wxh.value = {1.0, 0.0, 0.0, 1.0};
        const std::vector<double> x{0.4, -0.6};
        const auto h1 = rnn_state_step(whh, wxh, std::vector<double>{0.9, -0.9}, x);
        const auto h2 = rnn_state_step(whh, wxh, std::vector<double>{-0.5, 0.5}, x);
        CHECK(h1[0] == h2[0]);
        CHECK(h1[1] == h2[1]);
    }
    SUBCASE("scalar arithmetic") {
        ParamSet p;
        Tensor& a = p.add("a", {1, 1});
        Tensor& b = p.add("b", {1, 1});
        a.value = {0.5};
        b.value = {1.0};
        const auto h = rnn_state_step(a, b, std::vector<double>{0.2},
                                      std::vector<double>{0.1});
        CHECK(h[0] == doctest::Approx(std::tanh(0.2)));
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(rnn_state_step(whh, wxh, std::vector<double>{0.0},
                                       std::vector<double>{0, 0}),
                        Error);
    }
}

// All three Table-style recursions factor into a keep-pathway plus an
// input-pathway; zeroing one leaves the other's contribution intact.
TEST_CASE("keep/input pathway factorization across filter families") {
    SUBCASE("kalman: R->inf zeroes the input pathway") {
        const auto r = kalman_step(GaussianBelief{0.7, 0.3}, 0.8, 0.05, 1.0, 1e14, 42.0);
        CHECK(r.posterior.mean == doctest::Approx(0.8 * 0.7).epsilon(1e-6));
        CHECK(r.gain == doctest::Approx(0.0).epsilon(1e-10));
    }
    SUBCASE("rnn: W_xh = 0 zeroes the input pathway") {
        ParamSet p;
        Tensor& whh = p.add("whh", {1, 1});
        Tensor& wxh = p.add("wxh", {1, 1});
        whh.value = {0.9};
        wxh.value = {0.0};
        const auto a = rnn_state_step(whh, wxh, std::vector<double>{0.5},
                                      std::vector<double>{123.0});
        const auto b = rnn_state_step(whh, wxh, std::vector<double>{0.5},
                                      std::vector<double>{-7.0});
        CHECK(a[0] == b[0]);
        CHECK(a[0] == doctest::Approx(std::tanh(0.45)));
    }
    SUBCASE("lstm: shut input gate leaves the cell to the forget pathway") {
        LstmCell cell(1, 2, "f");
        ParamSet p;
        Rng rng = Rng::stream(31, "init");
        cell.init(p, rng);
        auto& bias = p.at("f/b");
        bias.value[0] = -30.0; // input gates closed
        bias.value[1] = -30.0;
        bias.value[2] = 30.0; // forget gates open
        bias.value[3] = 30.0;
        LstmState s = cell.zero_state();
        s.c = {0.4, -0.3};
        const auto n1 = cell.step(p, std::vector<double>{5.0}, s);
        const auto n2 = cell.step(p, std::vector<double>{-5.0}, s);
        CHECK(n1.c[0] == doctest::Approx(n2.c[0]).epsilon(1e-6));
        CHECK(n1.c[1] == doctest::Approx(n2.c[1]).epsilon(1e-6));
        CHECK(n1.c[0] == doctest::Approx(0.4).epsilon(1e-6));
    }
}

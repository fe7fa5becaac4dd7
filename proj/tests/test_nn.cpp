#include "lanesim/nn.hpp"

#include "lanesim/error.hpp"
#include "lanesim/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace lanesim;

namespace {

// Independent straight-line oracle for the MLP forward map: explicit loops
// over the same parameter layout, written without reference to Mlp::forward.
std::vector<double> mlp_forward_oracle(const Mlp& net, const ParamSet& params,
                                       const std::vector<double>& input) {
    std::vector<double> x = input;
    const auto& sizes = net.spec().layer_sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto& w = params.at(net.weight_name(static_cast<int>(l)));
        const auto& b = params.at(net.bias_name(static_cast<int>(l)));
        std::vector<double> y(static_cast<std::size_t>(sizes[l + 1]));
        for (std::size_t r = 0; r < y.size(); ++r) {
            double acc = b.value[r];
            for (std::size_t c = 0; c < x.size(); ++c) {
                acc += w.value[r * x.size() + c] * x[c];
            }
            y[r] = (l + 2 < sizes.size()) ? std::tanh(acc) : acc;
        }
        x = y;
    }
    return x;
}

double squared_output_loss(const Mlp& net, const ParamSet& params,
                           const std::vector<double>& input) {
    const auto out = net.forward(params, input);
    double loss = 0.0;
    for (double o : out) loss += o * o;
    return loss;
}

} // namespace

TEST_CASE("mlp forward: zero params give zero output") {
    Mlp net(MlpSpec{{3, 8, 2}}, "z");
    ParamSet params;
    Rng rng = Rng::stream(1, "init");
    net.init(params, rng);
    for (const auto& name : params.names()) {
        auto& t = params.at(name);
        std::fill(t.value.begin(), t.value.end(), 0.0);
    }
    const auto out = net.forward(params, std::vector<double>{1.0, -2.0, 3.0});
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("mlp forward: identity single layer") {
    Mlp net(MlpSpec{{3, 3}}, "id");
    ParamSet params;
    Rng rng = Rng::stream(2, "init");
    net.init(params, rng);
    auto& w = params.at("id/W0");
    std::fill(w.value.begin(), w.value.end(), 0.0);
    for (int i = 0; i < 3; ++i) w.value[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    std::fill(params.at("id/b0").value.begin(), params.at("id/b0").value.end(), 0.0);
    const std::vector<double> in{0.5, -1.5, 2.5};
    const auto out = net.forward(params, in);
    for (int i = 0; i < 3; ++i) CHECK(out[static_cast<std::size_t>(i)] == in[static_cast<std::size_t>(i)]);
}

TEST_CASE("mlp forward matches the independent matrix oracle") {
    Mlp net(MlpSpec{{4, 16, 16, 3}}, "m");
    ParamSet params;
    Rng rng = Rng::stream(3, "init");
    net.init(params, rng);
    Rng in_rng = Rng::stream(4, "inputs");
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> input(4);
        for (auto& x : input) x = in_rng.uniform(-2.0, 2.0);
        const auto got = net.forward(params, input);
        const auto want = mlp_forward_oracle(net, params, input);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("mlp forward is pure") {
    Mlp net(MlpSpec{{2, 8, 1}}, "p");
    ParamSet params;
    Rng rng = Rng::stream(5, "init");
    net.init(params, rng);
    const std::vector<double> in{0.3, -0.7};
    const auto a = net.forward(params, in);
    const auto b = net.forward(params, in);
    CHECK(a[0] == b[0]);
}

TEST_CASE("mlp backward: zero upstream gradient, zero parameter gradients") {
    Mlp net(MlpSpec{{2, 8, 2}}, "g");
    ParamSet params;
    Rng rng = Rng::stream(6, "init");
    net.init(params, rng);
    Mlp::Cache cache;
    net.forward(params, std::vector<double>{1.0, 2.0}, &cache);
    net.backward(params, cache, std::vector<double>{0.0, 0.0});
    for (const auto& name : params.names()) {
        for (double g : params.at(name).grad) CHECK(g == 0.0);
    }
}

TEST_CASE("mlp backward: 1x1 linear analytic gradient") {
    Mlp net(MlpSpec{{1, 1}}, "lin");
    ParamSet params;
    Rng rng = Rng::stream(7, "init");
    net.init(params, rng);
    params.at("lin/W0").value[0] = 0.8;
    params.at("lin/b0").value[0] = 0.0;
    Mlp::Cache cache;
    net.forward(params, std::vector<double>{3.0}, &cache);
    const auto gin = net.backward(params, cache, std::vector<double>{2.0});
    CHECK(params.at("lin/W0").grad[0] == doctest::Approx(2.0 * 3.0)); // grad_out * x
    CHECK(params.at("lin/b0").grad[0] == doctest::Approx(2.0));
    CHECK(gin[0] == doctest::Approx(2.0 * 0.8)); // grad_out * w
}

TEST_CASE("grad_check: linear net is exact, tanh MLP under 1e-4, planted fault found") {
    SUBCASE("linear map") {
        Mlp net(MlpSpec{{3, 2}}, "lin");
        ParamSet params;
        Rng rng = Rng::stream(8, "init");
        net.init(params, rng);
        const std::vector<double> input{0.2, -0.4, 1.0};
        // Sum-of-outputs loss is linear in the parameters, so central
        // differences are exact up to rounding.
        const auto result = grad_check(
            params,
            [&] {
                const auto out = net.forward(params, input);
                return out[0] + out[1];
            },
            [&] {
                Mlp::Cache cache;
                net.forward(params, input, &cache);
                net.backward(params, cache, std::vector<double>{1.0, 1.0});
            },
            1e-5);
        CHECK(result.max_rel_error < 1e-10);
    }
    SUBCASE("2-16-1 tanh net") {
        Mlp net(MlpSpec{{2, 16, 1}}, "t");
        ParamSet params;
        Rng rng = Rng::stream(9, "init");
        net.init(params, rng);
        const std::vector<double> input{0.7, -0.3};
        const auto result = grad_check(
            params, [&] { return squared_output_loss(net, params, input); },
            [&] {
                Mlp::Cache cache;
                const auto out = net.forward(params, input, &cache);
                net.backward(params, cache, std::vector<double>{2.0 * out[0]});
            },
            1e-5);
        CHECK(result.max_rel_error < 1e-4);
    }
    SUBCASE("doubled analytic gradient is detected at ratio ~1/2") {
        Mlp net(MlpSpec{{2, 4, 1}}, "bad");
        ParamSet params;
        Rng rng = Rng::stream(10, "init");
        net.init(params, rng);
        const std::vector<double> input{0.5, 0.25};
        const auto result = grad_check(
            params, [&] { return squared_output_loss(net, params, input); },
            [&] {
                Mlp::Cache cache;
                const auto out = net.forward(params, input, &cache);
                // Corrupted backward: twice the true gradient.
                net.backward(params, cache, std::vector<double>{4.0 * out[0]});
            },
            1e-5);
        CHECK(result.max_rel_error == doctest::Approx(0.5).epsilon(0.02));
    }
}

TEST_CASE("sgd_step arithmetic and gradient clearing") {
    ParamSet params;
    Tensor& t = params.add("w", {1});
    t.value[0] = 1.0;
    t.grad[0] = 2.0;
    SUBCASE("lr = 0 leaves values") {
        sgd_step(params, 0.0);
        CHECK(params.at("w").value[0] == 1.0);
        CHECK(params.at("w").grad[0] == 0.0);
    }
    SUBCASE("w - lr*g") {
        sgd_step(params, 0.1);
        CHECK(params.at("w").value[0] == doctest::Approx(0.8));
    }
    SUBCASE("non-finite gradient names the tensor") {
        t.grad[0] = std::nan("");
        try {
            sgd_step(params, 0.1);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("'w'") != std::string::npos);
        }
    }
}

TEST_CASE("sgd converges on the quadratic (w-3)^2") {
    ParamSet params;
    params.add("w", {1}).value[0] = 0.0;
    for (int i = 0; i < 100; ++i) {
        Tensor& t = params.at("w");
        t.grad[0] = 2.0 * (t.value[0] - 3.0);
        sgd_step(params, 0.1);
    }
    CHECK(std::abs(params.at("w").value[0] - 3.0) < 1e-4);
}

TEST_CASE("lstm gate saturation: forget open, input closed keeps the cell") {
    LstmCell cell(2, 4, "l");
    ParamSet params;
    Rng rng = Rng::stream(11, "init");
    cell.init(params, rng);
    auto& b = params.at("l/b");
    for (int j = 0; j < 4; ++j) {
        b.value[static_cast<std::size_t>(j)] = -20.0;     // input gate shut
        b.value[static_cast<std::size_t>(4 + j)] = 20.0;  // forget gate open
    }
    LstmState state = cell.zero_state();
    state.c = {0.3, -0.2, 0.7, 0.05};
    state.h = {0.1, 0.1, 0.1, 0.1};
    const auto next = cell.step(params, std::vector<double>{0.5, -0.5}, state);
    for (int j = 0; j < 4; ++j) {
        CHECK(next.c[static_cast<std::size_t>(j)] ==
              doctest::Approx(state.c[static_cast<std::size_t>(j)]).epsilon(1e-6));
    }
}

TEST_CASE("lstm at the origin with zero params stays zero") {
    LstmCell cell(3, 5, "z");
    ParamSet params;
    Rng rng = Rng::stream(12, "init");
    cell.init(params, rng);
    for (const auto& name : params.names()) {
        auto& t = params.at(name);
        std::fill(t.value.begin(), t.value.end(), 0.0);
    }
    const auto next = cell.step(params, std::vector<double>{0, 0, 0}, cell.zero_state());
    for (double h : next.h) CHECK(h == 0.0);
}

TEST_CASE("lstm BPTT gradients match finite differences over length-5 sequences") {
    const int input_size = 3, hidden = 6, len = 5;
    LstmCell cell(input_size, hidden, "l");
    ParamSet params;
    Rng rng = Rng::stream(13, "init");
    cell.init(params, rng);

    Rng data = Rng::stream(14, "data");
    std::vector<std::vector<double>> xs(len, std::vector<double>(input_size));
    for (auto& x : xs) {
        for (auto& v : x) v = data.uniform(-1.0, 1.0);
    }

    // Loss: sum of squared hidden activations over the whole unroll.
    const auto loss = [&] {
        LstmState s = cell.zero_state();
        double acc = 0.0;
        for (const auto& x : xs) {
            s = cell.step(params, x, s);
            for (double h : s.h) acc += h * h;
        }
        return acc;
    };
    const auto grads = [&] {
        std::vector<LstmCell::Cache> caches(len);
        std::vector<LstmState> states;
        LstmState s = cell.zero_state();
        for (int t = 0; t < len; ++t) {
            s = cell.step(params, xs[static_cast<std::size_t>(t)], s,
                          &caches[static_cast<std::size_t>(t)]);
            states.push_back(s);
        }
        std::vector<double> dh(hidden, 0.0), dc(hidden, 0.0);
        for (int t = len - 1; t >= 0; --t) {
            for (int j = 0; j < hidden; ++j) {
                dh[static_cast<std::size_t>(j)] +=
                    2.0 * states[static_cast<std::size_t>(t)].h[static_cast<std::size_t>(j)];
            }
            const auto back =
                cell.backward(params, caches[static_cast<std::size_t>(t)], dh, dc);
            dh = back.dh_prev;
            dc = back.dc_prev;
        }
    };
    const auto result = grad_check(params, loss, grads, 1e-5);
    CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("lstm shape errors") {
    LstmCell cell(2, 3, "e");
    ParamSet params;
    Rng rng = Rng::stream(15, "init");
    cell.init(params, rng);
    CHECK_THROWS_AS(cell.step(params, std::vector<double>{1.0}, cell.zero_state()), Error);
    LstmState bad;
    bad.h = {0.0};
    bad.c = {0.0};
    CHECK_THROWS_AS(cell.step(params, std::vector<double>{1.0, 2.0}, bad), Error);
}

TEST_CASE("mlp shape errors") {
    Mlp net(MlpSpec{{2, 3}}, "e");
    ParamSet params;
    Rng rng = Rng::stream(16, "init");
    net.init(params, rng);
    CHECK_THROWS_AS(net.forward(params, std::vector<double>{1.0}), Error);
    Mlp::Cache empty;
    CHECK_THROWS_AS(net.backward(params, empty, std::vector<double>{1.0, 0.0, 0.0}), Error);
}

TEST_CASE("initialization is determined by (spec, seed)") {
    Mlp net(MlpSpec{{3, 8, 2}}, "n");
    ParamSet p1, p2;
    Rng r1 = Rng::stream(99, "init");
    Rng r2 = Rng::stream(99, "init");
    net.init(p1, r1);
    net.init(p2, r2);
    for (const auto& name : p1.names()) {
        const auto& a = p1.at(name).value;
        const auto& b = p2.at(name).value;
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    // Bound check: |w| <= 1/sqrt(fan_in), biases zero.
    for (double w : p1.at("n/W0").value) CHECK(std::abs(w) <= 1.0 / std::sqrt(3.0));
    for (double b : p1.at("n/b0").value) CHECK(b == 0.0);
}

TEST_CASE("param set guards") {
    ParamSet params;
    params.add("a", {2, 2});
    CHECK_THROWS_AS(params.add("a", {1}), Error);
    CHECK_THROWS_AS(params.at("missing"), Error);
    params.at("a").value[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(params.check_values_finite(), NumericError);
}

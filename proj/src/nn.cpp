#include "lanesim/nn.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

Tensor& ParamSet::add(const std::string& name, std::vector<std::size_t> shape) {
    if (contains(name)) throw Error("ParamSet: duplicate tensor '" + name + "'");
    Tensor t;
    t.shape = std::move(shape);
    t.value.assign(shape_product(t.shape), 0.0);
    t.grad.assign(t.value.size(), 0.0);
    order_.push_back(name);
    return tensors_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("ParamSet: missing tensor '" + name + "'");
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("ParamSet: missing tensor '" + name + "'");
    return it->second;
}

std::size_t ParamSet::total_params() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += at(name).size();
    return n;
}

void ParamSet::zero_grad() {
    for (const auto& name : order_) {
        auto& g = at(name).grad;
        std::fill(g.begin(), g.end(), 0.0);
    }
}

void ParamSet::check_values_finite() const {
    for (const auto& name : order_) {
        for (double v : at(name).value) {
            if (!std::isfinite(v)) {
                throw NumericError("non-finite value in tensor '" + name + "'");
            }
        }
    }
}

void sgd_step(ParamSet& params, double learning_rate) {
    for (const auto& name : params.names()) {
        Tensor& t = params.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!std::isfinite(t.grad[i])) {
                throw NumericError("non-finite gradient in tensor '" + name + "'");
            }
            t.value[i] -= learning_rate * t.grad[i];
        }
        std::fill(t.grad.begin(), t.grad.end(), 0.0);
    }
}

Mlp::Mlp(MlpSpec spec, std::string prefix) : spec_(std::move(spec)), prefix_(std::move(prefix)) {
    if (spec_.layer_sizes.size() < 2) throw Error("Mlp: need at least [in, out] sizes");
    for (int s : spec_.layer_sizes) {
        if (s < 1) throw Error("Mlp: layer sizes must be >= 1");
    }
}

std::string Mlp::weight_name(int layer) const {
    return prefix_ + "/W" + std::to_string(layer);
}

std::string Mlp::bias_name(int layer) const {
    return prefix_ + "/b" + std::to_string(layer);
}

void Mlp::init(ParamSet& params, Rng& rng) const {
    for (int l = 0; l < layer_count(); ++l) {
        const auto rows = static_cast<std::size_t>(spec_.layer_sizes[l + 1]);
        const auto cols = static_cast<std::size_t>(spec_.layer_sizes[l]);
        Tensor& w = params.add(weight_name(l), {rows, cols});
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        for (auto& v : w.value) v = rng.uniform(-bound, bound);
        params.add(bias_name(l), {rows});
    }
}

std::vector<double> Mlp::forward(const ParamSet& params, std::span<const double> input,
                                 Cache* cache) const {
    if (static_cast<int>(input.size()) != input_size()) {
        throw Error("Mlp '" + prefix_ + "': input size " + std::to_string(input.size()) +
                    " != " + std::to_string(input_size()));
    }
    std::vector<double> x(input.begin(), input.end());
    if (cache) {
        cache->act.clear();
        cache->act.push_back(x);
    }
    for (int l = 0; l < layer_count(); ++l) {
        const Tensor& w = params.at(weight_name(l));
        const Tensor& b = params.at(bias_name(l));
        const std::size_t rows = w.shape[0];
        const std::size_t cols = w.shape[1];
        std::vector<double> y(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = b.value[r];
            const double* wr = w.value.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
            y[r] = (l < layer_count() - 1) ? std::tanh(acc) : acc;
        }
        x = std::move(y);
        if (cache) cache->act.push_back(x);
    }
    return x;
}

std::vector<double> Mlp::backward(const ParamSet& params, const Cache& cache,
                                  std::span<const double> grad_output,
                                  bool accumulate_param_grads) const {
    if (cache.act.size() != static_cast<std::size_t>(layer_count()) + 1) {
        throw Error("Mlp '" + prefix_ + "': backward without a matching forward cache");
    }
    std::vector<double> g(grad_output.begin(), grad_output.end());
    if (static_cast<int>(g.size()) != output_size()) {
        throw Error("Mlp '" + prefix_ + "': grad_output size mismatch");
    }
    // ParamSet is logically const during an input-only backward.
    auto& mutable_params = const_cast<ParamSet&>(params);
    for (int l = layer_count() - 1; l >= 0; --l) {
        const Tensor& w = params.at(weight_name(l));
        const std::size_t rows = w.shape[0];
        const std::size_t cols = w.shape[1];
        const auto& in_act = cache.act[static_cast<std::size_t>(l)];
        const auto& out_act = cache.act[static_cast<std::size_t>(l) + 1];
        // dz = g for the linear output layer, g * tanh' for hidden layers.
        std::vector<double> dz(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            dz[r] = (l < layer_count() - 1) ? g[r] * (1.0 - out_act[r] * out_act[r]) : g[r];
        }
        if (accumulate_param_grads) {
            Tensor& wt = mutable_params.at(weight_name(l));
            Tensor& bt = mutable_params.at(bias_name(l));
            for (std::size_t r = 0; r < rows; ++r) {
                double* gw = wt.grad.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) gw[c] += dz[r] * in_act[c];
                bt.grad[r] += dz[r];
            }
        }
        std::vector<double> gin(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* wr = w.value.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gin[c] += wr[c] * dz[r];
        }
        g = std::move(gin);
    }
    return g;
}

LstmCell::LstmCell(int input_size, int hidden_size, std::string prefix)
    : input_size_(input_size), hidden_size_(hidden_size), prefix_(std::move(prefix)) {
    if (input_size < 1 || hidden_size < 1) throw Error("LstmCell: sizes must be >= 1");
}

void LstmCell::init(ParamSet& params, Rng& rng) const {
    const auto in = static_cast<std::size_t>(input_size_);
    const auto hid = static_cast<std::size_t>(hidden_size_);
    Tensor& wx = params.add(wx_name(), {4 * hid, in});
    const double bx = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : wx.value) v = rng.uniform(-bx, bx);
    Tensor& wh = params.add(wh_name(), {4 * hid, hid});
    const double bh = 1.0 / std::sqrt(static_cast<double>(hid));
    for (auto& v : wh.value) v = rng.uniform(-bh, bh);
    Tensor& b = params.add(bias_name(), {4 * hid});
    // Gate row order [i, f, g, o]; forget-gate bias +1.
    for (std::size_t r = hid; r < 2 * hid; ++r) b.value[r] = 1.0;
}

LstmState LstmCell::zero_state() const {
    return LstmState{std::vector<double>(static_cast<std::size_t>(hidden_size_), 0.0),
                     std::vector<double>(static_cast<std::size_t>(hidden_size_), 0.0)};
}

LstmState LstmCell::step(const ParamSet& params, std::span<const double> x,
                         const LstmState& state, Cache* cache) const {
    const auto in = static_cast<std::size_t>(input_size_);
    const auto hid = static_cast<std::size_t>(hidden_size_);
    if (x.size() != in) throw Error("LstmCell '" + prefix_ + "': input size mismatch");
    if (state.h.size() != hid || state.c.size() != hid) {
        throw Error("LstmCell '" + prefix_ + "': state size mismatch");
    }
    const Tensor& wx = params.at(wx_name());
    const Tensor& wh = params.at(wh_name());
    const Tensor& b = params.at(bias_name());

    std::vector<double> z(4 * hid);
    for (std::size_t r = 0; r < 4 * hid; ++r) {
        double acc = b.value[r];
        const double* wxr = wx.value.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) acc += wxr[c] * x[c];
        const double* whr = wh.value.data() + r * hid;
        for (std::size_t c = 0; c < hid; ++c) acc += whr[c] * state.h[c];
        z[r] = acc;
    }

    LstmState next = zero_state();
    std::vector<double> gi(hid), gf(hid), gg(hid), go(hid), tanh_c(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        gi[j] = sigmoid(z[j]);
        gf[j] = sigmoid(z[hid + j]);
        gg[j] = std::tanh(z[2 * hid + j]);
        go[j] = sigmoid(z[3 * hid + j]);
        next.c[j] = gf[j] * state.c[j] + gi[j] * gg[j];
        tanh_c[j] = std::tanh(next.c[j]);
        next.h[j] = go[j] * tanh_c[j];
    }
    if (cache) {
        cache->x.assign(x.begin(), x.end());
        cache->h_prev = state.h;
        cache->c_prev = state.c;
        cache->gi = gi;
        cache->gf = gf;
        cache->gg = gg;
        cache->go = go;
        cache->c_new = next.c;
        cache->tanh_c = tanh_c;
    }
    return next;
}

LstmCell::BackwardResult LstmCell::backward(const ParamSet& params, const Cache& cache,
                                            std::span<const double> dh_new,
                                            std::span<const double> dc_new,
                                            bool accumulate_param_grads) const {
    const auto in = static_cast<std::size_t>(input_size_);
    const auto hid = static_cast<std::size_t>(hidden_size_);
    if (dh_new.size() != hid || dc_new.size() != hid) {
        throw Error("LstmCell '" + prefix_ + "': gradient size mismatch");
    }
    const Tensor& wx = params.at(wx_name());
    const Tensor& wh = params.at(wh_name());

    std::vector<double> dz(4 * hid);
    BackwardResult out;
    out.dx.assign(in, 0.0);
    out.dh_prev.assign(hid, 0.0);
    out.dc_prev.assign(hid, 0.0);
    for (std::size_t j = 0; j < hid; ++j) {
        const double dc_total =
            dc_new[j] + dh_new[j] * cache.go[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
        const double d_go = dh_new[j] * cache.tanh_c[j];
        const double d_gi = dc_total * cache.gg[j];
        const double d_gf = dc_total * cache.c_prev[j];
        const double d_gg = dc_total * cache.gi[j];
        out.dc_prev[j] = dc_total * cache.gf[j];
        dz[j] = d_gi * cache.gi[j] * (1.0 - cache.gi[j]);
        dz[hid + j] = d_gf * cache.gf[j] * (1.0 - cache.gf[j]);
        dz[2 * hid + j] = d_gg * (1.0 - cache.gg[j] * cache.gg[j]);
        dz[3 * hid + j] = d_go * cache.go[j] * (1.0 - cache.go[j]);
    }
    if (accumulate_param_grads) {
        auto& mp = const_cast<ParamSet&>(params);
        Tensor& wxt = mp.at(wx_name());
        Tensor& wht = mp.at(wh_name());
        Tensor& bt = mp.at(bias_name());
        for (std::size_t r = 0; r < 4 * hid; ++r) {
            double* gx = wxt.grad.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) gx[c] += dz[r] * cache.x[c];
            double* gh = wht.grad.data() + r * hid;
            for (std::size_t c = 0; c < hid; ++c) gh[c] += dz[r] * cache.h_prev[c];
            bt.grad[r] += dz[r];
        }
    }
    for (std::size_t r = 0; r < 4 * hid; ++r) {
        const double* wxr = wx.value.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) out.dx[c] += wxr[c] * dz[r];
        const double* whr = wh.value.data() + r * hid;
        for (std::size_t c = 0; c < hid; ++c) out.dh_prev[c] += whr[c] * dz[r];
    }
    return out;
}

GradCheckResult grad_check(ParamSet& params, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double epsilon) {
    if (!(epsilon > 0.0)) throw Error("grad_check: epsilon must be > 0");
    params.zero_grad();
    compute_grads();
    // Snapshot analytic grads before we start poking values.
    std::unordered_map<std::string, std::vector<double>> analytic;
    for (const auto& name : params.names()) analytic[name] = params.at(name).grad;

    GradCheckResult result;
    for (const auto& name : params.names()) {
        Tensor& t = params.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t.value[i];
            t.value[i] = saved + epsilon;
            const double up = loss();
            t.value[i] = saved - epsilon;
            const double down = loss();
            t.value[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic[name][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = name;
                result.worst_index = i;
            }
        }
    }
    params.zero_grad();
    return result;
}

} // namespace lanesim

#pragma once

#include "lanesim/rng.hpp"

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lanesim {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    std::size_t size() const { return value.size(); }
};

// Named parameter tensors with paired gradients. Iteration order is insertion
// order everywhere (gradient checks, SGD, checkpoints), which keeps runs
// reproducible.
class ParamSet {
  public:
    Tensor& add(const std::string& name, std::vector<std::size_t> shape);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

    const std::vector<std::string>& names() const { return order_; }
    std::size_t total_params() const;

    void zero_grad();
    void check_values_finite() const; // throws NumericError naming the tensor

  private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> tensors_;
};

// values <- values - lr * grad, then zeroes gradients.
// Throws NumericError naming the offending tensor on non-finite gradients.
void sgd_step(ParamSet& params, double learning_rate);

// Fully connected net: tanh hidden layers, identity output.
struct MlpSpec {
    std::vector<int> layer_sizes; // [in, hidden..., out]
};

class Mlp {
  public:
    Mlp() = default;
    Mlp(MlpSpec spec, std::string prefix);

    // Registers and initializes this net's tensors: weights uniform in
    // [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
    void init(ParamSet& params, Rng& rng) const;

    struct Cache {
        // act[0] is the input; act[l+1] the output of layer l (post-tanh for
        // hidden layers). Sufficient to run backward.
        std::vector<std::vector<double>> act;
    };

    std::vector<double> forward(const ParamSet& params, std::span<const double> input,
                                Cache* cache = nullptr) const;

    // Reverse-mode pass. Accumulates parameter gradients (unless disabled) and
    // returns the gradient with respect to the input.
    std::vector<double> backward(const ParamSet& params, const Cache& cache,
                                 std::span<const double> grad_output,
                                 bool accumulate_param_grads = true) const;

    int input_size() const { return spec_.layer_sizes.front(); }
    int output_size() const { return spec_.layer_sizes.back(); }
    int layer_count() const { return static_cast<int>(spec_.layer_sizes.size()) - 1; }
    std::string weight_name(int layer) const;
    std::string bias_name(int layer) const;
    const MlpSpec& spec() const { return spec_; }
    const std::string& prefix() const { return prefix_; }

  private:
    MlpSpec spec_;
    std::string prefix_;
};

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;
};

// Single LSTM cell with sigmoid input/forget/output gates and tanh candidate:
// c' = f.c + i.g, h' = o.tanh(c').
class LstmCell {
  public:
    LstmCell() = default;
    LstmCell(int input_size, int hidden_size, std::string prefix);

    // Forget-gate bias starts at +1, everything else as in Mlp::init.
    void init(ParamSet& params, Rng& rng) const;

    struct Cache {
        std::vector<double> x, h_prev, c_prev;
        std::vector<double> gi, gf, gg, go; // post-nonlinearity gate values
        std::vector<double> c_new, tanh_c;
    };

    LstmState step(const ParamSet& params, std::span<const double> x, const LstmState& state,
                   Cache* cache = nullptr) const;

    struct BackwardResult {
        std::vector<double> dx, dh_prev, dc_prev;
    };

    BackwardResult backward(const ParamSet& params, const Cache& cache,
                            std::span<const double> dh_new, std::span<const double> dc_new,
                            bool accumulate_param_grads = true) const;

    LstmState zero_state() const;

    int input_size() const { return input_size_; }
    int hidden_size() const { return hidden_size_; }
    std::string wx_name() const { return prefix_ + "/Wx"; }
    std::string wh_name() const { return prefix_ + "/Wh"; }
    std::string bias_name() const { return prefix_ + "/b"; }

  private:
    int input_size_ = 0;
    int hidden_size_ = 0;
    std::string prefix_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
};

// Compares analytic gradients against central finite differences for every
// scalar parameter. `loss` must be a pure function of the current values;
// `compute_grads` must populate params' gradients for the same loss.
GradCheckResult grad_check(ParamSet& params, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double epsilon);

} // namespace lanesim

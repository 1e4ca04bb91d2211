#pragma once

// Named parameter storage, batched MLPs with hand-written reverse mode, Adam,
// and learning-rate schedules.
//
// Batches are column-major matrices of shape features x batch.

#include "lpsurf/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace lpsurf {

struct Parameter {
  std::string name;
  std::vector<int> shape;  // rows, cols for matrices
  Vector value;
  bool frozen = false;
  // Adam state
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;

  Eigen::Map<Matrix> matrix() { return {value.data(), shape.at(0), shape.size() > 1 ? shape[1] : 1}; }
  Eigen::Map<const Matrix> matrix() const {
    return {value.data(), shape.at(0), shape.size() > 1 ? shape[1] : 1};
  }
};

class ParameterStore {
 public:
  /// Registers a parameter; throws std::invalid_argument on duplicate names or
  /// when `initial` does not match the shape.
  int add(std::string name, std::vector<int> shape, Vector initial, bool frozen = false);

  int index(const std::string& name) const;  // throws std::out_of_range
  bool contains(const std::string& name) const;
  Parameter& operator[](int i) { return params_.at(i); }
  const Parameter& operator[](int i) const { return params_.at(i); }
  Parameter& operator[](const std::string& name) { return params_.at(index(name)); }
  const Parameter& operator[](const std::string& name) const { return params_.at(index(name)); }
  std::size_t size() const { return params_.size(); }
  std::span<Parameter> entries() { return params_; }
  std::span<const Parameter> entries() const { return params_; }
  std::size_t scalar_count() const;

  /// Sets the frozen flag on every parameter whose name starts with `prefix`.
  void set_frozen(std::string_view prefix, bool frozen);
  void reset_optimizer_state();

 private:
  std::vector<Parameter> params_;
};

/// Gradient buffers laid out like a ParameterStore (one vector per entry).
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& store);

  Vector& operator[](int i) { return grads_.at(i); }
  const Vector& operator[](int i) const { return grads_.at(i); }
  Eigen::Map<Matrix> matrix(const ParameterStore& store, int i) {
    const auto& p = store[i];
    return {grads_.at(i).data(), p.shape.at(0), p.shape.size() > 1 ? p.shape[1] : 1};
  }
  std::size_t size() const { return grads_.size(); }
  void set_zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);

 private:
  std::vector<Vector> grads_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam on every unfrozen parameter. `learning_rate(i)` gives
/// the rate for entry i. Throws std::runtime_error naming the parameter on a
/// non-finite gradient, before any parameter is modified.
void adam_step(ParameterStore& store, const Gradients& grads,
               const std::function<double(const Parameter&)>& learning_rate, const AdamOptions& opts = {});
void adam_step(ParameterStore& store, const Gradients& grads, double learning_rate,
               const AdamOptions& opts = {});

/// lr_end + (lr_start - lr_end) (1 + cos(pi t / total)) / 2, t clamped to [0, total].
double cosine_lr(std::int64_t t, std::int64_t total, double lr_start, double lr_end);

/// [x, sin(2^l pi x), cos(2^l pi x) for l < frequencies], 3 + 6 * frequencies values.
Vector posenc(const Vec3& x, int frequencies);

enum class OutputActivation { none, sigmoid };

struct MlpSpec {
  int input_dim = 3;        // before positional encoding
  std::vector<int> widths;  // output width of each linear layer
  OutputActivation output = OutputActivation::none;
  int posenc_frequencies = 0;  // applied to the last three input rows

  int encoded_input_dim() const { return input_dim + 6 * posenc_frequencies; }
  int output_dim() const { return widths.back(); }
};

/// Values kept by Mlp::forward for the backward pass.
struct MlpTape {
  Matrix input;                      // after positional encoding
  std::vector<Matrix> preactivations;  // one per layer
  Matrix output;
};

class Mlp {
 public:
  Mlp() = default;
  /// Registers `<name>.<layer>.weight` (out x in) and `<name>.<layer>.bias`,
  /// initialized uniformly in +-1/sqrt(fan_in).
  Mlp(const std::string& name, MlpSpec spec, ParameterStore& store, Rng& rng, bool frozen = false);
  /// Handles to parameters already present in `store`; throws
  /// std::invalid_argument when a layer is missing or has the wrong shape.
  static Mlp bound(const std::string& name, MlpSpec spec, const ParameterStore& store);

  const MlpSpec& spec() const { return spec_; }
  int layer_count() const { return static_cast<int>(spec_.widths.size()); }
  int weight_index(int layer) const { return weights_.at(layer); }
  int bias_index(int layer) const { return biases_.at(layer); }

  /// Throws std::invalid_argument when the input row count is wrong.
  Matrix forward(const ParameterStore& store, const Matrix& input, MlpTape* tape = nullptr) const;
  /// Accumulates parameter gradients into `grads` (skipping frozen layers)
  /// and returns d loss / d raw input, or an empty matrix when
  /// `want_input_grad` is false.
  Matrix backward(const ParameterStore& store, const MlpTape& tape, const Matrix& grad_output,
                  Gradients& grads, bool want_input_grad = true) const;

 private:
  MlpSpec spec_;
  std::vector<int> weights_;
  std::vector<int> biases_;
};

/// Positional encoding of the last three rows of every column.
Matrix encode_batch(const Matrix& input, int frequencies);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "<parameter>[i]" or "input[i]"
};

/// Largest relative error |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// between backward() and central differences of sum(output .* probe), over
/// every parameter scalar and input entry.
GradientCheckResult gradient_check(const Mlp& mlp, ParameterStore& store, Matrix input, double step,
                                   const Matrix& probe, double floor = 1e-6);

/// Generic scalar-function version: compares `analytic` against central
/// differences of `f` around `x` (x is restored on return).
GradientCheckResult finite_difference_check(const std::function<double()>& f, std::span<double> x,
                                            std::span<const double> analytic, double step,
                                            const std::string& label, double floor = 1e-6);

}  // namespace lpsurf

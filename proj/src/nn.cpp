#include "lpsurf/nn.hpp"

#include <cmath>
#include <numbers>

namespace lpsurf {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw std::invalid_argument("parameter shape entries must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

int ParameterStore::add(std::string name, std::vector<int> shape, Vector initial, bool frozen) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  if (shape.empty() || static_cast<std::size_t>(initial.size()) != shape_size(shape))
    throw std::invalid_argument("parameter '" + name + "' does not match its shape");
  Parameter p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  p.first_moment = Vector::Zero(initial.size());
  p.second_moment = Vector::Zero(initial.size());
  p.value = std::move(initial);
  p.frozen = frozen;
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size() - 1);
}

int ParameterStore::index(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::set_frozen(std::string_view prefix, bool frozen) {
  for (auto& p : params_) {
    if (std::string_view(p.name).starts_with(prefix)) p.frozen = frozen;
  }
}

void ParameterStore::reset_optimizer_state() {
  for (auto& p : params_) {
    p.first_moment.setZero();
    p.second_moment.setZero();
    p.step = 0;
  }
}

Gradients::Gradients(const ParameterStore& store) {
  grads_.reserve(store.size());
  for (const auto& p : store.entries()) grads_.push_back(Vector::Zero(p.value.size()));
}

void Gradients::set_zero() {
  for (auto& g : grads_) g.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) throw std::invalid_argument("gradient layouts differ");
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& g : grads_) g *= s;
  return *this;
}

void adam_step(ParameterStore& store, const Gradients& grads,
               const std::function<double(const Parameter&)>& learning_rate, const AdamOptions& opts) {
  if (grads.size() != store.size()) throw std::invalid_argument("adam_step: gradient layout mismatch");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[static_cast<int>(i)];
    const auto& g = grads[static_cast<int>(i)];
    if (g.size() != p.value.size()) throw std::invalid_argument("adam_step: gradient shape mismatch for '" + p.name + "'");
    if (!p.frozen && !g.allFinite()) throw std::runtime_error("adam_step: non-finite gradient for '" + p.name + "'");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[static_cast<int>(i)];
    if (p.frozen) continue;
    const auto& g = grads[static_cast<int>(i)];
    const double lr = learning_rate(p);
    ++p.step;
    p.first_moment = opts.beta1 * p.first_moment + (1.0 - opts.beta1) * g;
    p.second_moment = opts.beta2 * p.second_moment + (1.0 - opts.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(p.step));
    if (lr == 0.0) continue;
    p.value.array() -= lr * (p.first_moment.array() / c1) / ((p.second_moment.array() / c2).sqrt() + opts.eps);
  }
}

void adam_step(ParameterStore& store, const Gradients& grads, double learning_rate, const AdamOptions& opts) {
  adam_step(store, grads, [learning_rate](const Parameter&) { return learning_rate; }, opts);
}

double cosine_lr(std::int64_t t, std::int64_t total, double lr_start, double lr_end) {
  if (total <= 0) return lr_end;
  const double frac = static_cast<double>(std::clamp<std::int64_t>(t, 0, total)) / static_cast<double>(total);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * frac));
}

Vector posenc(const Vec3& x, int frequencies) {
  Matrix in = x;
  return encode_batch(in, frequencies).col(0);
}

Matrix encode_batch(const Matrix& input, int frequencies) {
  if (frequencies < 0) throw std::invalid_argument("posenc: negative frequency count");
  if (frequencies == 0) return input;
  if (input.rows() < 3) throw std::invalid_argument("posenc: input needs at least three rows");
  const Eigen::Index head = input.rows() - 3;
  Matrix out(input.rows() + 6 * frequencies, input.cols());
  out.topRows(input.rows()) = input;
  for (int l = 0; l < frequencies; ++l) {
    const double scale = std::ldexp(std::numbers::pi, l);
    const auto arg = (scale * input.bottomRows(3).array()).eval();
    out.middleRows(head + 3 + 6 * l, 3) = arg.sin().matrix();
    out.middleRows(head + 6 + 6 * l, 3) = arg.cos().matrix();
  }
  return out;
}

Mlp::Mlp(const std::string& name, MlpSpec spec, ParameterStore& store, Rng& rng, bool frozen)
    : spec_(std::move(spec)) {
  if (spec_.widths.empty()) throw std::invalid_argument("mlp '" + name + "' needs at least one layer");
  if (spec_.input_dim < 1) throw std::invalid_argument("mlp '" + name + "' needs a positive input width");
  if (spec_.posenc_frequencies > 0 && spec_.input_dim < 3)
    throw std::invalid_argument("mlp '" + name + "': positional encoding needs three input rows");
  int fan_in = spec_.encoded_input_dim();
  for (std::size_t l = 0; l < spec_.widths.size(); ++l) {
    const int out = spec_.widths[l];
    if (out < 1) throw std::invalid_argument("mlp '" + name + "': widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Vector w(static_cast<Eigen::Index>(out) * fan_in);
    for (auto& v : w) v = u(rng);
    Vector b(out);
    for (auto& v : b) v = u(rng);
    const std::string prefix = name + "." + std::to_string(l);
    weights_.push_back(store.add(prefix + ".weight", {out, fan_in}, std::move(w), frozen));
    biases_.push_back(store.add(prefix + ".bias", {out}, std::move(b), frozen));
    fan_in = out;
  }
}

Mlp Mlp::bound(const std::string& name, MlpSpec spec, const ParameterStore& store) {
  Mlp mlp;
  mlp.spec_ = std::move(spec);
  int fan_in = mlp.spec_.encoded_input_dim();
  for (std::size_t l = 0; l < mlp.spec_.widths.size(); ++l) {
    const int out = mlp.spec_.widths[l];
    const std::string prefix = name + "." + std::to_string(l);
    if (!store.contains(prefix + ".weight") || !store.contains(prefix + ".bias"))
      throw std::invalid_argument("mlp '" + name + "': missing layer " + std::to_string(l));
    const int w = store.index(prefix + ".weight");
    const int b = store.index(prefix + ".bias");
    if (store[w].shape != std::vector<int>{out, fan_in} || store[b].shape != std::vector<int>{out})
      throw std::invalid_argument("mlp '" + name + "': layer " + std::to_string(l) + " has the wrong shape");
    mlp.weights_.push_back(w);
    mlp.biases_.push_back(b);
    fan_in = out;
  }
  return mlp;
}

Matrix Mlp::forward(const ParameterStore& store, const Matrix& input, MlpTape* tape) const {
  if (input.rows() != spec_.input_dim)
    throw std::invalid_argument("mlp forward: expected " + std::to_string(spec_.input_dim) + " input rows, got " +
                                std::to_string(input.rows()));
  Matrix encoded = encode_batch(input, spec_.posenc_frequencies);
  Matrix activation;
  const Matrix* current = &encoded;
  if (tape) tape->preactivations.resize(weights_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto w = store[weights_[l]].matrix();
    const auto b = store[biases_[l]].matrix();
    Matrix pre = w * *current;
    pre.colwise() += b.col(0);
    const bool last = l + 1 == weights_.size();
    if (last) {
      activation = spec_.output == OutputActivation::sigmoid
                       ? Matrix((1.0 / (1.0 + (-pre.array()).exp())).matrix())
                       : pre;
    } else {
      activation = pre.cwiseMax(0.0);
    }
    if (tape) tape->preactivations[l] = std::move(pre);
    current = &activation;
  }
  if (tape) {
    tape->input = std::move(encoded);
    tape->output = activation;
  }
  return activation;
}

Matrix Mlp::backward(const ParameterStore& store, const MlpTape& tape, const Matrix& grad_output, Gradients& grads,
                     bool want_input_grad) const {
  const std::size_t layers = weights_.size();
  if (tape.preactivations.size() != layers) throw std::invalid_argument("mlp backward: tape does not match network");
  if (grad_output.rows() != spec_.output_dim() || grad_output.cols() != tape.output.cols())
    throw std::invalid_argument("mlp backward: output gradient shape mismatch");

  Matrix delta;
  if (spec_.output == OutputActivation::sigmoid) {
    delta = (grad_output.array() * tape.output.array() * (1.0 - tape.output.array())).matrix();
  } else {
    delta = grad_output;
  }
  for (std::size_t l = layers; l-- > 0;) {
    const auto& w_param = store[weights_[l]];
    const bool trainable = !w_param.frozen || !store[biases_[l]].frozen;
    if (trainable) {
      if (!w_param.frozen) {
        auto gw = grads.matrix(store, weights_[l]);
        if (l == 0) {
          gw.noalias() += delta * tape.input.transpose();
        } else {
          gw.noalias() += delta * tape.preactivations[l - 1].cwiseMax(0.0).transpose();
        }
      }
      if (!store[biases_[l]].frozen) grads[biases_[l]] += delta.rowwise().sum();
    }
    if (l == 0 && !want_input_grad) return {};
    bool earlier_trainable = false;
    for (std::size_t j = 0; j < l; ++j) {
      earlier_trainable = earlier_trainable || !store[weights_[j]].frozen || !store[biases_[j]].frozen;
    }
    if (l > 0 && !want_input_grad && !earlier_trainable) return {};
    Matrix back = w_param.matrix().transpose() * delta;
    if (l > 0) {
      back.array() *= (tape.preactivations[l - 1].array() > 0.0).cast<double>();
    }
    delta = std::move(back);
  }

  // delta is now d loss / d encoded input; fold the encoding back into raw rows.
  const int freq = spec_.posenc_frequencies;
  if (freq == 0) return delta;
  const Eigen::Index head = spec_.input_dim - 3;
  Matrix raw = delta.topRows(spec_.input_dim);
  for (int l = 0; l < freq; ++l) {
    const double scale = std::ldexp(std::numbers::pi, l);
    const auto sin_rows = tape.input.middleRows(head + 3 + 6 * l, 3).array();
    const auto cos_rows = tape.input.middleRows(head + 6 + 6 * l, 3).array();
    raw.bottomRows(3).array() += scale * (delta.middleRows(head + 3 + 6 * l, 3).array() * cos_rows -
                                          delta.middleRows(head + 6 + 6 * l, 3).array() * sin_rows);
  }
  return raw;
}

GradientCheckResult finite_difference_check(const std::function<double()>& f, std::span<double> x,
                                            std::span<const double> analytic, double step, const std::string& label,
                                            double floor) {
  if (x.size() != analytic.size()) throw std::invalid_argument("finite_difference_check: size mismatch");
  GradientCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (err > result.max_relative_error || !std::isfinite(err)) {
      result.max_relative_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
      result.worst = label + "[" + std::to_string(i) + "]";
    }
  }
  return result;
}

GradientCheckResult gradient_check(const Mlp& mlp, ParameterStore& store, Matrix input, double step,
                                   const Matrix& probe, double floor) {
  if (!(step > 0.0)) throw std::invalid_argument("gradient_check: step must be positive");
  MlpTape tape;
  mlp.forward(store, input, &tape);
  Gradients grads(store);
  const Matrix input_grad = mlp.backward(store, tape, probe, grads, true);
  auto objective = [&] { return (mlp.forward(store, input).array() * probe.array()).sum(); };

  GradientCheckResult worst;
  auto merge = [&](const GradientCheckResult& r) {
    if (r.max_relative_error > worst.max_relative_error) worst = r;
  };
  for (int layer = 0; layer < mlp.layer_count(); ++layer) {
    for (int idx : {mlp.weight_index(layer), mlp.bias_index(layer)}) {
      auto& p = store[idx];
      if (p.frozen) continue;
      merge(finite_difference_check(objective, {p.value.data(), static_cast<std::size_t>(p.value.size())},
                                    {grads[idx].data(), static_cast<std::size_t>(grads[idx].size())}, step, p.name,
                                    floor));
    }
  }
  merge(finite_difference_check(objective, {input.data(), static_cast<std::size_t>(input.size())},
                                {input_grad.data(), static_cast<std::size_t>(input_grad.size())}, step, "input",
                                floor));
  return worst;
}

}  // namespace lpsurf

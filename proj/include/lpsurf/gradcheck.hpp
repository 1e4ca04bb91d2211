#pragma once

// Central finite-difference checks of the analytic gradients: every decoder,
// every loss term, and the full pixel pipeline, on reduced-width models.

#include "lpsurf/nn.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lpsurf {

/// Compares `grads` with central differences of `objective` on up to
/// `per_param` randomly chosen scalars of every unfrozen parameter.
GradientCheckResult check_store_gradients(ParameterStore& store, const Gradients& grads,
                                          const std::function<double()>& objective, int per_param,
                                          std::uint64_t seed, double step = 1e-6, double floor = 1e-6);

struct GradientReport {
  std::string name;
  double max_relative_error = 0.0;
  std::string worst;
};

/// Runs the whole suite; each report is one named check.
std::vector<GradientReport> run_gradient_suite(std::uint64_t seed = 0);

}  // namespace lpsurf

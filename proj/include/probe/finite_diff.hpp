#pragma once

#include <cmath>
#include <functional>

#include "probe/tensor.hpp"

namespace probe {

// Central-difference gradient oracle used by the test suites. Independent of
// every analytic backward pass in the library by construction.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5) {
  if (!(h > 0.0)) throw NumericError("finite_diff_grad: step size must be positive");
  Tensor grad(x.shape);
  Tensor probe_pt = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe_pt.data[i] = x.data[i] + h;
    double fp = f(probe_pt);
    probe_pt.data[i] = x.data[i] - h;
    double fm = f(probe_pt);
    probe_pt.data[i] = x.data[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    grad.data[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

inline double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  require_same_shape(a, b, "max_rel_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::abs(a.data[i]), std::abs(b.data[i]), floor});
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

}  // namespace probe

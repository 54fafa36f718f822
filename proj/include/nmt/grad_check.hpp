#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

// Central finite-difference gradient oracle. `f` rebuilds the loss from the
// current parameter values; it must be deterministic. Returns the maximum
// relative error over every parameter coordinate, with the relative error
// defined as |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// A single step size cannot cover a deep graph whose gradient magnitudes
// span many decades: coordinates with near-zero gradients are dominated by
// cancellation noise |f|*ulp/eps at small eps, while large eps trips over
// curvature and ReLU kinks elsewhere. finite_diff_check_multi therefore
// evaluates the same quotient at several step sizes and scores each
// coordinate by its best one; a wrong analytic gradient fails at every
// scale, a finite-difference artifact only at some.
template <class T>
double finite_diff_check_multi(const std::function<Tensor<T>()>& f,
                               std::vector<Tensor<T>> params,
                               const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw Error("finite_diff_check: no step sizes");
  for (auto& p : params) p.zero_grad();
  Tensor<T> loss = f();
  if (loss.size() != 1) throw Error("finite_diff_check: f must return a scalar");
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw Error("finite_diff_check: non-finite loss value");
  backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params)
    analytic.emplace_back(p.grad().begin(), p.grad().end());

  double max_rel = 0.0;
  NoGradGuard no_grad;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values_mut();
    for (size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      const double a = static_cast<double>(analytic[pi][i]);
      double best = std::numeric_limits<double>::infinity();
      for (double eps : eps_list) {
        vals[i] = orig + static_cast<T>(eps);
        const double f_plus = static_cast<double>(f().item());
        vals[i] = orig - static_cast<T>(eps);
        const double f_minus = static_cast<double>(f().item());
        vals[i] = orig;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
          throw Error("finite_diff_check: non-finite perturbed loss");
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        best = std::min(best, std::fabs(a - numeric) / denom);
      }
      max_rel = std::max(max_rel, best);
    }
  }
  return max_rel;
}

template <class T>
double finite_diff_check(const std::function<Tensor<T>()>& f,
                         std::vector<Tensor<T>> params, double eps = 1e-5) {
  return finite_diff_check_multi<T>(f, std::move(params), {eps});
}

}  // namespace nmt

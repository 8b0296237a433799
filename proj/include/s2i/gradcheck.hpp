#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "s2i/ops.hpp"
#include "s2i/rng.hpp"
#include "s2i/tensor.hpp"

namespace s2i {

struct GradCheckOptions {
  double step = 1e-5;          // central-difference step h
  int64_t max_coords = 0;      // 0 = check every coordinate, else sample
  uint64_t seed = 0;           // sampling seed
  double kink_tol = 1e-3;      // one-sided derivative disagreement threshold
  double zero_tol = 1e-9;      // both-sides-tiny cutoff
};

struct GradCheckReport {
  std::vector<double> per_input_max;  // max relative error per input tensor
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t excluded = 0;  // coordinates at non-differentiable points
};

// Compares reverse-mode gradients of sum(f(inputs)) against central finite
// differences, 64-bit only. f must be deterministic across calls (re-seed any
// generator it uses internally). Coordinates where the one-sided derivatives
// disagree (kinks such as maxpool ties) are excluded and counted.
inline GradCheckReport gradcheck(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, const GradCheckOptions& opts = {}) {
  for (auto& in : inputs) in.set_requires_grad(true);

  auto loss_of = [&]() {
    NoGradGuard ng;
    return sum(f(inputs)).item();
  };

  // Analytic pass.
  for (auto& in : inputs) in.zero_grad();
  Tensor<double> loss = sum(f(inputs));
  loss.backward();

  GradCheckReport report;
  report.per_input_max.assign(inputs.size(), 0.0);
  Rng rng(opts.seed);
  const double h = opts.step;

  for (size_t t = 0; t < inputs.size(); ++t) {
    auto& in = inputs[t];
    int64_t n = in.numel();
    std::vector<int64_t> coords;
    if (opts.max_coords > 0 && n > opts.max_coords) {
      for (int64_t i = 0; i < opts.max_coords; ++i)
        coords.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }

    std::vector<double>& xdata = in.mutable_data();
    const std::vector<double>& xgrad = in.grad();
    for (int64_t c : coords) {
      double saved = xdata[static_cast<size_t>(c)];
      xdata[static_cast<size_t>(c)] = saved + h;
      double f_plus = loss_of();
      xdata[static_cast<size_t>(c)] = saved - h;
      double f_minus = loss_of();
      xdata[static_cast<size_t>(c)] = saved;
      double f_zero = loss_of();

      double central = (f_plus - f_minus) / (2 * h);
      double fwd = (f_plus - f_zero) / h;
      double bwd = (f_zero - f_minus) / h;
      double scale = std::max({1.0, std::abs(fwd), std::abs(bwd)});
      if (std::abs(fwd - bwd) > opts.kink_tol * scale) {
        ++report.excluded;
        continue;
      }

      double analytic = xgrad.empty() ? 0.0 : xgrad[static_cast<size_t>(c)];
      double denom = std::max(std::abs(analytic), std::abs(central));
      double rel;
      if (denom < opts.zero_tol)
        rel = 0.0;
      else
        rel = std::abs(analytic - central) / denom;
      report.per_input_max[t] = std::max(report.per_input_max[t], rel);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace s2i

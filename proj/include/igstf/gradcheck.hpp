#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "igstf/numkernel.hpp"
#include "igstf/rng.hpp"

namespace igstf {

// A scalar-valued function of a ParamStore, written against a Tape so the
// same code yields both values and recorded adjoints.
using ScalarFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool passed() const { return max_rel_error < tol; }
};

// Denominator floor so that pairs of vanishing derivatives compare by absolute error.
inline constexpr double kGradCheckFloor = 1e-6;

inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

// Smooth scalar reduction sum(w .* x) with fixed pseudo-random weights, so
// every output element contributes a distinct adjoint.
inline Var weighted_sum(Var x, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w(x.shape());
  for (double& v : w.storage()) v = rng.uniform(-1.0, 1.0);
  return sum_all(mul_const(x, w));
}

/// weighted_sum divided by the element count, keeping the checked scalar O(1)
/// regardless of output size.
inline Var weighted_mean(Var x, std::uint64_t seed = 99) {
  const double n = static_cast<double>(std::max<std::size_t>(1, x.value().size()));
  return scale(weighted_sum(x, seed), 1.0 / n);
}

inline double eval_scalar(const ScalarFn& f, const ParamStore& params) {
  Tape tape(false);
  const double v = f(tape, params).value()[0];
  return v;
}

/// Compares recorded adjoints of `f` against central differences for every
/// element of the named parameters (or `max_elems` evenly spaced elements
/// per parameter when positive).
inline GradCheckReport grad_check(const ScalarFn& f, const ParamStore& params,
                                  const std::vector<std::string>& names, double h = 1e-5,
                                  double tol = 1e-4, std::size_t max_elems = 0) {
  if (!(h >= 1e-6 && h <= 1e-4)) throw ConfigError("grad_check: step h must lie in [1e-6, 1e-4]");

  Tape tape;
  Var out = f(tape, params);
  if (!out.value().all_finite()) throw NumericError("grad_check: non-finite function value");
  tape.backward(out);
  const GradMap grads = tape.param_grads();

  GradCheckReport report;
  report.tol = tol;
  ParamStore work = params;
  for (const auto& name : names) {
    GradCheckEntry entry{name, 0, 0.0};
    Tensor& p = work.get(name);
    auto git = grads.find(name);
    const std::size_t n = p.size();
    std::size_t count = (max_elems > 0 && max_elems < n) ? max_elems : n;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t i = count == n ? s : (s * n) / count;
      const double orig = p[i];
      p[i] = orig + h;
      const double fp = eval_scalar(f, work);
      p[i] = orig - h;
      const double fm = eval_scalar(f, work);
      p[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite value while perturbing '" + name + "'[" +
                           std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = git == grads.end() ? 0.0 : git->second[i];
      entry.max_rel_error = std::max(entry.max_rel_error, grad_rel_error(analytic, numeric));
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

inline GradCheckReport grad_check_all(const ScalarFn& f, const ParamStore& params, double h = 1e-5,
                                      double tol = 1e-4, std::size_t max_elems = 0) {
  return grad_check(f, params, params.names(), h, tol, max_elems);
}

}  // namespace igstf

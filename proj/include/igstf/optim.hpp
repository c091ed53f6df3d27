#pragma once

#include <cmath>

#include "igstf/params.hpp"

namespace igstf {

struct AdamOptions {
  double lr = 0.002;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

/// Adam with bias correction and global gradient-norm clipping.
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  /// Applies one update. Parameters without an entry in `grads` are left
  /// alone. Returns the pre-clipping global gradient norm.
  double step(ParamStore& params, const GradMap& grads) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
          throw NumericError("non-finite gradient at '" + name + "'[" + std::to_string(i) + "]");
        }
        sq += g[i] * g[i];
      }
    }
    const double norm = std::sqrt(sq);
    const double clip = (opt_.clip_norm > 0.0 && norm > opt_.clip_norm) ? opt_.clip_norm / norm : 1.0;

    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (const auto& [name, g] : grads) {
      Tensor& p = params.get(name);
      if (p.shape() != g.shape()) throw DimensionError("gradient shape mismatch for '" + name + "'");
      Tensor& m = m_.try_emplace(name, Tensor(p.shape())).first->second;
      Tensor& v = v_.try_emplace(name, Tensor(p.shape())).first->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] * clip;
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
        p[i] -= opt_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.eps);
      }
    }
    return norm;
  }

  std::size_t steps() const { return step_; }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  std::size_t step_ = 0;
  GradMap m_, v_;
};

}  // namespace igstf

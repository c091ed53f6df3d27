#pragma once

// Masked loss and forecast error metrics (MAE, RMSE, MAPE per horizon).

#include <cmath>
#include <vector>

#include "igstf/numkernel.hpp"

namespace igstf {

/// Sum of |pred - target| over entries with mask 1 (as a tape scalar) and the
/// number of such entries.
struct MaskedAbsError {
  Var sum;
  std::size_t count = 0;
};

inline MaskedAbsError masked_abs_error(Var pred, const Tensor& target, const Tensor& mask) {
  detail::require_same_shape("masked loss", pred.value(), target);
  detail::require_same_shape("masked loss", pred.value(), mask);
  std::size_t count = 0;
  for (double v : mask.storage()) count += v != 0.0;
  Var diff = sub(pred, pred.tape->constant(target));
  return {sum_all(mul_const(abs(diff), mask)), count};
}

struct MaskedMae {
  double value = 0.0;
  bool empty = false;  // no unmasked entry; value is defined as 0
};

inline MaskedMae masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  detail::require_same_shape("masked_mae", pred, target);
  detail::require_same_shape("masked_mae", pred, mask);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.0) {
      s += std::abs(pred[i] - target[i]);
      ++n;
    }
  if (n == 0) return {0.0, true};
  return {s / static_cast<double>(n), false};
}

inline constexpr double kMapeFloor = 1.0;

/// Running sums for one horizon (or the all-step average).
struct ErrorAccumulator {
  double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0;
  std::size_t count = 0, ape_count = 0, masked = 0;

  void add(double pred, double target, bool observed) {
    if (!observed) {
      ++masked;
      return;
    }
    const double e = pred - target;
    abs_sum += std::abs(e);
    sq_sum += e * e;
    ++count;
    if (std::abs(target) >= kMapeFloor) {
      ape_sum += std::abs(e) / std::abs(target);
      ++ape_count;
    }
  }

  double mae() const { return count ? abs_sum / static_cast<double>(count) : 0.0; }
  double rmse() const { return count ? std::sqrt(sq_sum / static_cast<double>(count)) : 0.0; }
  double mape() const { return ape_count ? 100.0 * ape_sum / static_cast<double>(ape_count) : 0.0; }
};

struct HorizonMetrics {
  std::string horizon;  // "3", "6", "12" or "avg"
  double mae = 0.0, rmse = 0.0, mape = 0.0;
  std::size_t count = 0, masked = 0;
};

inline const std::vector<std::size_t> kReportHorizons = {3, 6, 12};

/// Pools predictions of many instances; each call to add() takes one
/// T_p x N x 1 prediction with its target and mask.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::vector<std::size_t> horizons = kReportHorizons)
      : horizons_(std::move(horizons)), per_(horizons_.size()) {}

  void add(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    detail::require_same_shape("metrics", pred, target);
    detail::require_same_shape("metrics", pred, mask);
    const std::size_t steps = pred.dim(0), per_step = pred.size() / steps;
    for (std::size_t h = 0; h < horizons_.size(); ++h) {
      if (horizons_[h] == 0 || horizons_[h] > steps) {
        throw DimensionError("horizon " + std::to_string(horizons_[h]) + " exceeds " + std::to_string(steps) +
                             " forecast steps");
      }
      const std::size_t s = horizons_[h] - 1;
      for (std::size_t i = 0; i < per_step; ++i) {
        const std::size_t idx = s * per_step + i;
        per_[h].add(pred[idx], target[idx], mask[idx] != 0.0);
      }
    }
    for (std::size_t i = 0; i < pred.size(); ++i) avg_.add(pred[i], target[i], mask[i] != 0.0);
  }

  std::vector<HorizonMetrics> report() const {
    std::vector<HorizonMetrics> out;
    for (std::size_t h = 0; h < horizons_.size(); ++h) out.push_back(make(std::to_string(horizons_[h]), per_[h]));
    out.push_back(make("avg", avg_));
    return out;
  }

  const ErrorAccumulator& average() const { return avg_; }

 private:
  static HorizonMetrics make(std::string name, const ErrorAccumulator& a) {
    return {std::move(name), a.mae(), a.rmse(), a.mape(), a.count, a.masked};
  }
  std::vector<std::size_t> horizons_;
  std::vector<ErrorAccumulator> per_;
  ErrorAccumulator avg_;
};

inline std::vector<HorizonMetrics> compute_metrics(const Tensor& pred, const Tensor& target, const Tensor& mask,
                                                   std::vector<std::size_t> horizons = kReportHorizons) {
  MetricsAccumulator acc(std::move(horizons));
  acc.add(pred, target, mask);
  return acc.report();
}

}  // namespace igstf

#pragma once

// Mini-batch training with early stopping, batched prediction, evaluation and
// the ablation sweep.

#include <chrono>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "igstf/metrics.hpp"
#include "igstf/optim.hpp"
#include "igstf/pipeline.hpp"

namespace igstf {

/// Model-ready splits of a dataset.
struct TrainingData {
  ModelData data;
  std::vector<PreparedInstance> train, val, test;
};

inline std::vector<PreparedInstance> prepare_all(const std::vector<ForecastInstance>& v, const NormStats& norm,
                                                 double kappa) {
  std::vector<PreparedInstance> out;
  out.reserve(v.size());
  for (const auto& i : v) out.push_back(prepare_instance(i, norm, kappa));
  return out;
}

inline TrainingData prepare_training_data(const Dataset& ds, const HyperConfig& c) {
  TrainingData td;
  td.data.norm = ds.norm;
  td.data.sensors = prepare_sensor_features(ds.sensors, ds.vocab, ds.norm.sensor);
  td.data.A_static = ds.graph.row_normalized();
  td.train = prepare_all(ds.splits.train, ds.norm, c.kappa);
  td.val = prepare_all(ds.splits.val, ds.norm, c.kappa);
  td.test = prepare_all(ds.splits.test, ds.norm, c.kappa);
  return td;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
/// contiguous partition. Results must be written to per-index slots.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w * n / threads; i < (w + 1) * n / threads; ++i) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Forecasts in flow units for each instance.
inline std::vector<Tensor> predict_all(const ParamStore& p, const HyperConfig& c, const ModelData& data,
                                       const std::vector<PreparedInstance>& insts, std::size_t threads = 1) {
  std::vector<Tensor> out(insts.size());
  parallel_for(insts.size(), threads, [&](std::size_t i) {
    Tape t(false);
    out[i] = model_forward(t, p, c, data, insts[i]).value();
  });
  return out;
}

/// Pooled metrics over the instances accepted by `keep` (all by default).
inline MetricsAccumulator evaluate(const ParamStore& p, const HyperConfig& c, const ModelData& data,
                                   const std::vector<PreparedInstance>& insts, std::size_t threads = 1,
                                   const std::function<bool(const PreparedInstance&)>& keep = {}) {
  std::vector<PreparedInstance> chosen;
  for (const auto& i : insts)
    if (!keep || keep(i)) chosen.push_back(i);
  const auto preds = predict_all(p, c, data, chosen, threads);
  MetricsAccumulator acc;
  for (std::size_t i = 0; i < chosen.size(); ++i) acc.add(preds[i], chosen[i].target, chosen[i].mask);
  return acc;
}

inline bool has_incidents(const PreparedInstance& i) { return i.incident_count() > 0; }

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mae = 0.0;  // pooled over the epoch, before each update
  double val_mae = 0.0;
  double grad_norm = 0.0;  // mean pre-clipping norm over the epoch's steps
  std::size_t steps = 0;
  bool improved = false;
};

struct TrainOutcome {
  ParamStore params;  // best validation epoch, rounded to float32
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
};

/// Raised when the loss or a gradient becomes non-finite; carries the best
/// parameters seen so far.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainOutcome partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const TrainOutcome& partial() const { return partial_; }

 private:
  TrainOutcome partial_;
};

struct BatchResult {
  GradMap grads;
  double abs_sum = 0.0;
  std::size_t count = 0;
};

/// Masked absolute-error sum and its gradient for one instance.
inline BatchResult instance_gradient(const ParamStore& p, const HyperConfig& c, const ModelData& data,
                                     const PreparedInstance& inst) {
  Tape t;
  MaskedAbsError e = masked_abs_error(model_forward(t, p, c, data, inst), inst.target, inst.mask);
  BatchResult r;
  r.abs_sum = e.sum.value()[0];
  r.count = e.count;
  if (r.count > 0) {
    t.backward(e.sum);
    r.grads = t.param_grads();
  }
  return r;
}

/// Gradient of the batch loss sum|err| / (unmasked count). Instances are
/// processed in waves of `threads` and summed in index order, so the result
/// does not depend on the thread count.
inline BatchResult batch_gradient(const ParamStore& p, const HyperConfig& c, const ModelData& data,
                                  const std::vector<const PreparedInstance*>& batch, std::size_t threads) {
  BatchResult total;
  for (std::size_t w = 0; w < batch.size(); w += threads) {
    const std::size_t len = std::min(threads, batch.size() - w);
    std::vector<BatchResult> parts(len);
    parallel_for(len, threads, [&](std::size_t i) { parts[i] = instance_gradient(p, c, data, *batch[w + i]); });
    for (auto& r : parts) {
      total.abs_sum += r.abs_sum;
      total.count += r.count;
      for (auto& [name, g] : r.grads) {
        auto it = total.grads.find(name);
        if (it == total.grads.end()) {
          total.grads.emplace(name, std::move(g));
        } else {
          for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
        }
      }
    }
  }
  if (total.count > 0) {
    const double inv = 1.0 / static_cast<double>(total.count);
    for (auto& [_, g] : total.grads)
      for (double& v : g.storage()) v *= inv;
  }
  return total;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

inline double pooled_mae(const MetricsAccumulator& acc) { return acc.average().mae(); }

inline TrainOutcome train_model(const HyperConfig& c, const TrainConfig& tc, const TrainingData& td,
                                const SensorVocab& vocab, const EpochCallback& on_epoch = {}) {
  if (td.train.empty() || td.val.empty()) throw ConfigError("training needs nonempty train and validation splits");
  ParamStore params = init_model_params(c, vocab, td.data.nodes(), tc.seed);
  Adam opt(AdamOptions{tc.lr, tc.beta1, tc.beta2, tc.adam_eps, tc.clip_norm});
  TrainOutcome out;
  out.params = params;
  std::size_t since_best = 0;

  std::vector<std::size_t> free_idx, incident_idx;
  for (std::size_t i = 0; i < td.train.size(); ++i) (has_incidents(td.train[i]) ? incident_idx : free_idx).push_back(i);

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    Rng pick(derive_seed(tc.seed, 1000 + epoch)), order_rng(derive_seed(tc.seed, 2000 + epoch));
    std::vector<std::size_t> order = incident_idx;
    for (std::size_t i : free_idx)
      if (tc.incident_free_fraction >= 1.0 || pick.uniform(0.0, 1.0) < tc.incident_free_fraction) order.push_back(i);
    std::sort(order.begin(), order.end());
    order_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    double abs_sum = 0.0, norm_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
      std::vector<const PreparedInstance*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + tc.batch_size); ++i) batch.push_back(&td.train[order[i]]);
      BatchResult r = batch_gradient(params, c, td.data, batch, tc.threads);
      if (!std::isfinite(r.abs_sum)) {
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), out);
      }
      if (r.count == 0) continue;
      try {
        norm_sum += opt.step(params, r.grads);
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string(e.what()) + " in epoch " + std::to_string(epoch), out);
      }
      abs_sum += r.abs_sum;
      count += r.count;
      ++rec.steps;
    }
    rec.train_mae = count ? abs_sum / static_cast<double>(count) : 0.0;
    rec.grad_norm = rec.steps ? norm_sum / static_cast<double>(rec.steps) : 0.0;
    rec.val_mae = pooled_mae(evaluate(params, c, td.data, td.val, tc.threads));
    if (!std::isfinite(rec.val_mae)) {
      throw TrainingDiverged("non-finite validation error in epoch " + std::to_string(epoch), out);
    }
    if (rec.val_mae < out.best_val_mae) {
      out.best_val_mae = rec.val_mae;
      out.best_epoch = epoch;
      out.params = params;
      rec.improved = true;
      since_best = 0;
    } else {
      ++since_best;
    }
    out.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (since_best >= tc.patience) break;
  }
  out.params.round_to_float();
  return out;
}

struct AblationResult {
  std::string variant;
  TrainOutcome outcome;
  std::vector<HorizonMetrics> incident;  // test windows with at least one incident
  std::vector<HorizonMetrics> all;       // every test window
};

/// Trains and evaluates each variant on top of `base` with the same seed and
/// schedule.
inline std::vector<AblationResult> run_ablation(const HyperConfig& base, const TrainConfig& tc, const TrainingData& td,
                                                const SensorVocab& vocab, const std::vector<std::string>& variants,
                                                const std::function<void(const std::string&, const EpochRecord&)>&
                                                    on_epoch = {}) {
  std::vector<AblationResult> out;
  for (const auto& v : variants) {
    const HyperConfig c = apply_variant(base, v);
    AblationResult r;
    r.variant = v;
    r.outcome = train_model(c, tc, td, vocab, [&](const EpochRecord& e) {
      if (on_epoch) on_epoch(v, e);
    });
    r.incident = evaluate(r.outcome.params, c, td.data, td.test, tc.threads, has_incidents).report();
    r.all = evaluate(r.outcome.params, c, td.data, td.test, tc.threads).report();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace igstf

#pragma once

// The igstf commands: gen, build, train, eval, ablate and gradcheck. Each one
// reads a RunConfig, writes files under the output directory and returns a
// process exit code.

#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>

#include "igstf/checks.hpp"
#include "igstf/synth.hpp"
#include "igstf/train.hpp"

namespace igstf {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitNumeric = 3 };

struct CommandOptions {
  fs::path config;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;  // sets both train.seed and data.synth.seed
};

/// Reads the config file and applies the command-line and environment
/// overrides (IGSTF_OUTPUT_DIR replaces output_dir).
inline RunConfig load_run_config(const CommandOptions& opt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(opt.config));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(opt.config.string() + ": " + e.what());
  }
  RunConfig c = parse_run_config(j);
  if (opt.threads) {
    if (*opt.threads == 0) throw ConfigError("--threads must be >= 1");
    c.train.threads = *opt.threads;
  }
  if (opt.seed) {
    c.train.seed = *opt.seed;
    c.data.synth.seed = *opt.seed;
  }
  if (const char* env = std::getenv("IGSTF_OUTPUT_DIR"); env && *env) c.output_dir = env;
  return c;
}

struct RunPaths {
  fs::path out, raw, processed, model;
};

inline RunPaths run_paths(const RunConfig& c) {
  const fs::path out = c.output_dir;
  return {out, c.data.input_dir.empty() ? out / "raw" : fs::path(c.data.input_dir), out / "processed", out / "model"};
}

// ------------------------------------------------------------------- model artifact

inline nlohmann::json vocab_to_json(const SensorVocab& v) {
  return {{"type", v.type.items()}, {"surface", v.surface.items()}, {"roadway_use", v.roadway_use.items()}};
}

inline SensorVocab vocab_from_json(const nlohmann::json& j) {
  return {Vocabulary(j.at("type").get<std::vector<std::string>>()),
          Vocabulary(j.at("surface").get<std::vector<std::string>>()),
          Vocabulary(j.at("roadway_use").get<std::vector<std::string>>())};
}

inline nlohmann::json norm_to_json(const NormStats& n) {
  return {{"flow_mean", n.flow_mean},
          {"flow_std", n.flow_std},
          {"lane_width_mean", n.sensor.lane_width_mean},
          {"lane_width_std", n.sensor.lane_width_std},
          {"design_speed_mean", n.sensor.design_speed_mean},
          {"design_speed_std", n.sensor.design_speed_std}};
}

inline NormStats norm_from_json(const nlohmann::json& j) {
  NormStats n;
  n.flow_mean = j.at("flow_mean").get<double>();
  n.flow_std = j.at("flow_std").get<double>();
  n.sensor.lane_width_mean = j.at("lane_width_mean").get<double>();
  n.sensor.lane_width_std = j.at("lane_width_std").get<double>();
  n.sensor.design_speed_mean = j.at("design_speed_mean").get<double>();
  n.sensor.design_speed_std = j.at("design_speed_std").get<double>();
  return n;
}

struct ModelArtifact {
  RunConfig config;
  ParamStore params;
  SensorVocab vocab;
  NormStats norm;
};

inline void write_model_artifact(const fs::path& dir, const ModelArtifact& a) {
  ensure_directory(dir);
  write_text_file(dir / "config.json", to_json(a.config).dump(2) + "\n");
  write_tensors(dir / "params.bin", a.params);
  write_text_file(dir / "vocab.json", vocab_to_json(a.vocab).dump(2) + "\n");
  write_text_file(dir / "norm_stats.json", norm_to_json(a.norm).dump(2) + "\n");
}

inline ModelArtifact read_model_artifact(const fs::path& dir) {
  for (const char* f : {"config.json", "params.bin", "vocab.json", "norm_stats.json"}) {
    if (!fs::exists(dir / f)) throw IoError("missing model artifact " + (dir / f).string() + " (run train)");
  }
  ModelArtifact a;
  try {
    a.config = parse_run_config(nlohmann::json::parse(read_text_file(dir / "config.json")));
    a.vocab = vocab_from_json(nlohmann::json::parse(read_text_file(dir / "vocab.json")));
    a.norm = norm_from_json(nlohmann::json::parse(read_text_file(dir / "norm_stats.json")));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("malformed model artifact in " + dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IngestionError((dir / "config.json").string() + ": " + e.what());
  }
  a.params = read_tensors(dir / "params.bin");
  return a;
}

// ------------------------------------------------------------------- reports

/// Name of the ablation variant a model config corresponds to.
inline std::string variant_name(const HyperConfig& c) {
  for (const auto& v : kAblationVariants) {
    const HyperConfig ref = apply_variant(HyperConfig{}, v);
    if (c.icsf_enabled == ref.icsf_enabled && c.tiid_enabled == ref.tiid_enabled && c.use_S == ref.use_S &&
        c.use_D == ref.use_D && c.use_I == ref.use_I) {
      return v;
    }
  }
  return "custom";
}

inline constexpr const char* kMetricsHeader = "variant,horizon,mae,rmse,mape\n";

inline std::string metrics_rows(const std::string& variant, const std::vector<HorizonMetrics>& rows) {
  std::string out;
  for (const auto& m : rows) {
    out += variant + "," + m.horizon + "," + detail::fmt_double(m.mae) + "," + detail::fmt_double(m.rmse) + "," +
           detail::fmt_double(m.mape) + "\n";
  }
  return out;
}

inline std::string history_csv(const std::vector<EpochRecord>& h, const std::string& variant = "") {
  const std::string prefix = variant.empty() ? "" : variant + ",";
  std::string text = std::string(variant.empty() ? "" : "variant,") + "epoch,train_mae,val_mae,grad_norm,steps,improved\n";
  for (const auto& r : h) {
    text += prefix + std::to_string(r.epoch) + "," + detail::fmt_double(r.train_mae) + "," +
            detail::fmt_double(r.val_mae) + "," + detail::fmt_double(r.grad_norm) + "," + std::to_string(r.steps) +
            "," + (r.improved ? "1" : "0") + "\n";
  }
  return text;
}

inline void print_epoch(std::ostream& log, const EpochRecord& e, const std::string& prefix = "") {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%sepoch %3zu  train_mae %9.4f  val_mae %9.4f  grad_norm %8.4f%s\n", prefix.c_str(),
                e.epoch, e.train_mae, e.val_mae, e.grad_norm, e.improved ? "  *" : "");
  log << buf;
}

inline void print_metrics(std::ostream& log, const std::string& label, const std::vector<HorizonMetrics>& rows) {
  for (const auto& m : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-22s horizon %-3s  MAE %9.4f  RMSE %9.4f  MAPE %8.3f%%\n", label.c_str(),
                  m.horizon.c_str(), m.mae, m.rmse, m.mape);
    log << buf;
  }
}

// ------------------------------------------------------------------- plot

struct PlotSeries {
  std::string label, color;
  bool dashed = false;
  std::vector<std::pair<double, double>> points;  // (step, value); NaN values break the line
};

struct PlotSpec {
  std::string title, x_label = "time", y_label = "flow (veh / 5 min)";
  std::vector<PlotSeries> series;
  std::optional<double> marker_x;
  std::string marker_label;
  std::function<std::string(double)> x_tick_label;
  double x_tick_step = 12.0;
};

namespace detail {

inline std::string fmt_fixed(double v, int digits = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace detail

/// Self-contained line chart.
inline std::string render_svg_plot(const PlotSpec& spec) {
  constexpr double W = 900, H = 440, left = 70, right = 190, top = 40, bottom = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : spec.series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      if (std::isfinite(y)) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  const double pad = std::max(1e-9, (y1 - y0) * 0.08);
  y0 -= pad;
  y1 += pad;
  const double pw = W - left - right, ph = H - top - bottom;
  const auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };
  using detail::fmt_fixed;

  std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_fixed(W, 0) + "\" height=\"" +
                  fmt_fixed(H, 0) + "\" viewBox=\"0 0 " + fmt_fixed(W, 0) + " " + fmt_fixed(H, 0) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + fmt_fixed(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(spec.title) + "</text>\n";
  // grid and ticks
  for (int k = 0; k <= 5; ++k) {
    const double v = y0 + (y1 - y0) * k / 5.0, y = sy(v);
    o += "<line x1=\"" + fmt_fixed(left) + "\" y1=\"" + fmt_fixed(y) + "\" x2=\"" + fmt_fixed(left + pw) + "\" y2=\"" +
         fmt_fixed(y) + "\" stroke=\"#e0e0e0\"/>\n";
    o += "<text x=\"" + fmt_fixed(left - 6) + "\" y=\"" + fmt_fixed(y + 4) + "\" text-anchor=\"end\">" +
         fmt_fixed(v, 1) + "</text>\n";
  }
  for (double x = std::ceil(x0 / spec.x_tick_step) * spec.x_tick_step; x <= x1; x += spec.x_tick_step) {
    const double px = sx(x);
    o += "<line x1=\"" + fmt_fixed(px) + "\" y1=\"" + fmt_fixed(top + ph) + "\" x2=\"" + fmt_fixed(px) + "\" y2=\"" +
         fmt_fixed(top + ph + 5) + "\" stroke=\"black\"/>\n";
    const std::string label = spec.x_tick_label ? spec.x_tick_label(x) : fmt_fixed(x, 0);
    o += "<text x=\"" + fmt_fixed(px) + "\" y=\"" + fmt_fixed(top + ph + 19) + "\" text-anchor=\"middle\">" +
         detail::xml_escape(label) + "</text>\n";
  }
  o += "<rect x=\"" + fmt_fixed(left) + "\" y=\"" + fmt_fixed(top) + "\" width=\"" + fmt_fixed(pw) + "\" height=\"" +
       fmt_fixed(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  o += "<text x=\"" + fmt_fixed(left + pw / 2) + "\" y=\"" + fmt_fixed(H - 14) + "\" text-anchor=\"middle\">" +
       detail::xml_escape(spec.x_label) + "</text>\n";
  o += "<text transform=\"translate(18," + fmt_fixed(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       detail::xml_escape(spec.y_label) + "</text>\n";

  if (spec.marker_x) {
    const double px = sx(*spec.marker_x);
    o += "<line x1=\"" + fmt_fixed(px) + "\" y1=\"" + fmt_fixed(top) + "\" x2=\"" + fmt_fixed(px) + "\" y2=\"" +
         fmt_fixed(top + ph) + "\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
    o += "<text x=\"" + fmt_fixed(px + 4) + "\" y=\"" + fmt_fixed(top + 14) + "\" fill=\"#d62728\">" +
         detail::xml_escape(spec.marker_label) + "</text>\n";
  }

  for (const auto& s : spec.series) {
    std::string pts;
    const auto flush = [&] {
      if (!pts.empty()) {
        o += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.8\"" +
             (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts + "\"/>\n";
      }
      pts.clear();
    };
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) {
        flush();
        continue;
      }
      pts += (pts.empty() ? "" : " ") + fmt_fixed(sx(x)) + "," + fmt_fixed(sy(y));
    }
    flush();
  }

  double ly = top + 10;
  for (const auto& s : spec.series) {
    const double lx = left + pw + 14;
    o += "<line x1=\"" + fmt_fixed(lx) + "\" y1=\"" + fmt_fixed(ly) + "\" x2=\"" + fmt_fixed(lx + 24) + "\" y2=\"" +
         fmt_fixed(ly) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"" +
         (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
    o += "<text x=\"" + fmt_fixed(lx + 30) + "\" y=\"" + fmt_fixed(ly + 4) + "\">" + detail::xml_escape(s.label) +
         "</text>\n";
    ly += 20;
  }
  o += "</svg>\n";
  return o;
}

/// Forecast made at the first incident window of the test split (or the
/// first test window when there is none) against the observed flow at one
/// sensor. By default the sensor nearest to that window's incident is shown.
inline std::string horizon_plot(const Dataset& ds, const std::vector<PreparedInstance>& test,
                                const std::vector<Tensor>& preds, long plot_node) {
  if (test.empty()) throw ConfigError("the test split is empty; nothing to plot");
  std::size_t pick = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (has_incidents(test[i])) {
      pick = i;
      break;
    }
  const auto& inst = test[pick];
  const auto& raw = ds.splits.test[pick];
  const std::size_t n = ds.series->nodes();
  std::size_t node = 0;
  if (plot_node >= 0) {
    if (static_cast<std::size_t>(plot_node) >= n) {
      throw ConfigError("eval.plot_node " + std::to_string(plot_node) + " is outside [0, " + std::to_string(n) + ")");
    }
    node = static_cast<std::size_t>(plot_node);
  } else if (inst.incident_count() > 0) {
    for (std::size_t j = 1; j < n; ++j)
      if (inst.D.at(0, j, 0) > inst.D.at(0, node, 0)) node = j;
  }

  const std::size_t anchor = inst.anchor, T_p = inst.target.dim(0);
  const std::size_t first = anchor >= 36 ? anchor - 36 : 0;
  const std::size_t last = std::min(ds.series->steps() - 1, anchor + T_p + 12);
  PlotSpec spec;
  spec.title = "Sensor " + ds.sensors[node].id + ": " + std::to_string(T_p) + "-step forecast vs observed flow";
  const auto& series = *ds.series;
  spec.x_tick_label = [&series](double x) {
    const std::string iso = format_iso8601(series.time_at(static_cast<std::size_t>(x)));
    return iso.substr(5, 5) + " " + iso.substr(11, 5);
  };
  PlotSeries truth{"observed", "#222222", false, {}}, pred{"forecast", "#1f77b4", true, {}};
  for (std::size_t t = first; t <= last; ++t) truth.points.emplace_back(static_cast<double>(t), series.flow(t, node));
  pred.points.emplace_back(static_cast<double>(anchor), series.flow(anchor, node));
  for (std::size_t s = 0; s < T_p; ++s)
    pred.points.emplace_back(static_cast<double>(anchor + 1 + s), preds[pick].at(s, node, 0));
  spec.series = {truth, pred};
  if (!raw.incidents.empty()) {
    spec.marker_x = static_cast<double>(anchor);
    spec.marker_label = "incident " + raw.incidents.front().id + " (" + raw.incidents.front().type + ")";
  } else {
    spec.marker_x = static_cast<double>(anchor);
    spec.marker_label = "forecast origin";
  }
  return render_svg_plot(spec);
}

// ------------------------------------------------------------------- commands

inline int cmd_gen(const RunConfig& c, std::ostream& log) {
  const auto paths = run_paths(c);
  const SynthDataset ds = generate_synthetic(c.data.synth);
  write_synthetic(paths.raw, ds);
  log << "wrote " << ds.sensors.size() << " sensors, " << ds.incidents.size() << " incidents, "
      << ds.series.steps() << " steps to " << paths.raw.string() << "\n";
  return kExitOk;
}

inline int cmd_build(const RunConfig& c, std::ostream& log) {
  const auto paths = run_paths(c);
  const Dataset ds = build_dataset(paths.raw, c.data, c.model);
  write_processed(paths.processed, ds);
  log << to_json(ds.report).dump(2) << "\n";
  return kExitOk;
}

namespace detail {

inline Dataset load_for(const RunConfig& c) { return load_processed(run_paths(c).processed, c.data, c.model); }

}  // namespace detail

/// Trains, writes the model artifact, train_history.csv and the test-split
/// metrics.csv (plus metrics_incident.csv for incident windows).
inline int cmd_train(const RunConfig& c, std::ostream& log) {
  const auto paths = run_paths(c);
  const Dataset ds = detail::load_for(c);
  const TrainingData td = prepare_training_data(ds, c.model);
  ModelArtifact art{c, {}, ds.vocab, ds.norm};
  const auto on_epoch = [&](const EpochRecord& e) { print_epoch(log, e); };
  TrainOutcome outcome;
  try {
    outcome = train_model(c.model, c.train, td, ds.vocab, on_epoch);
  } catch (const TrainingDiverged& e) {
    art.params = e.partial().params;
    art.params.round_to_float();
    write_model_artifact(paths.model, art);
    write_text_file(paths.out / "train_history.csv", history_csv(e.partial().history));
    throw;
  }
  art.params = outcome.params;
  write_model_artifact(paths.model, art);
  write_text_file(paths.out / "train_history.csv", history_csv(outcome.history));
  log << "best epoch " << outcome.best_epoch << " (val MAE " << detail::fmt_fixed(outcome.best_val_mae, 4) << ")\n";

  const std::string name = variant_name(c.model);
  const auto all = evaluate(art.params, c.model, td.data, td.test, c.train.threads).report();
  const auto inc = evaluate(art.params, c.model, td.data, td.test, c.train.threads, has_incidents).report();
  write_text_file(paths.out / "metrics.csv", kMetricsHeader + metrics_rows(name, all));
  write_text_file(paths.out / "metrics_incident.csv", kMetricsHeader + metrics_rows(name, inc));
  print_metrics(log, "test " + name, all);
  print_metrics(log, "test incident " + name, inc);
  return kExitOk;
}

/// Evaluates the saved model on the test split: metrics.csv,
/// metrics_incident.csv and horizon_plot.svg.
inline int cmd_eval(const RunConfig& c, std::ostream& log) {
  const auto paths = run_paths(c);
  const ModelArtifact art = read_model_artifact(paths.model);
  HyperConfig hc = art.config.model;
  const Dataset ds = load_processed(paths.processed, c.data, hc);
  if (vocab_to_json(ds.vocab) != vocab_to_json(art.vocab)) {
    throw EncodingError("sensor vocabulary of " + paths.processed.string() + " differs from the model's vocab.json");
  }
  TrainingData td;
  td.data.norm = art.norm;
  td.data.sensors = prepare_sensor_features(ds.sensors, art.vocab, art.norm.sensor);
  td.data.A_static = ds.graph.row_normalized();
  td.test = prepare_all(ds.splits.test, art.norm, hc.kappa);
  // Shapes are checked up front so that a model trained on another network
  // reports an input error rather than a dimension fault mid-forward.
  const ParamStore expected = init_model_params(hc, art.vocab, ds.sensors.size(), 0);
  for (const auto& [name, t] : expected) {
    if (!art.params.contains(name) || art.params.get(name).shape() != t.shape()) {
      throw IngestionError("params.bin does not fit this dataset (parameter '" + name + "')");
    }
  }

  const std::size_t threads = c.train.threads;
  const auto preds = predict_all(art.params, hc, td.data, td.test, threads);
  MetricsAccumulator all, inc;
  for (std::size_t i = 0; i < td.test.size(); ++i) {
    all.add(preds[i], td.test[i].target, td.test[i].mask);
    if (has_incidents(td.test[i])) inc.add(preds[i], td.test[i].target, td.test[i].mask);
  }
  const std::string name = variant_name(hc);
  write_text_file(paths.out / "metrics.csv", kMetricsHeader + metrics_rows(name, all.report()));
  write_text_file(paths.out / "metrics_incident.csv", kMetricsHeader + metrics_rows(name, inc.report()));
  write_text_file(paths.out / "horizon_plot.svg", horizon_plot(ds, td.test, preds, c.eval.plot_node));
  print_metrics(log, "test " + name, all.report());
  print_metrics(log, "test incident " + name, inc.report());
  return kExitOk;
}

/// Trains every configured variant and writes ablation.csv (incident
/// windows of the test split), ablation_all.csv and ablation_history.csv.
inline int cmd_ablate(const RunConfig& c, std::ostream& log) {
  const auto paths = run_paths(c);
  const Dataset ds = detail::load_for(c);
  const TrainingData td = prepare_training_data(ds, c.model);
  const auto results = run_ablation(c.model, c.train, td, ds.vocab, c.ablation.variants,
                                    [&](const std::string& v, const EpochRecord& e) { print_epoch(log, e, v + "  "); });
  std::string inc = kMetricsHeader, all = kMetricsHeader, hist = "variant,epoch,train_mae,val_mae,grad_norm,steps,improved\n";
  for (const auto& r : results) {
    inc += metrics_rows(r.variant, r.incident);
    all += metrics_rows(r.variant, r.all);
    const std::string h = history_csv(r.outcome.history, r.variant);
    hist += h.substr(h.find('\n') + 1);
    print_metrics(log, "incident " + r.variant, {r.incident.back()});
  }
  ensure_directory(paths.out);
  write_text_file(paths.out / "ablation.csv", inc);
  write_text_file(paths.out / "ablation_all.csv", all);
  write_text_file(paths.out / "ablation_history.csv", hist);
  return kExitOk;
}

inline int cmd_gradcheck(const RunConfig& c, std::ostream& log) {
  bool ok = true;
  for (const auto& m : run_module_grad_checks(c.train.seed)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %4zu entries  max rel error %.3e  %s\n", m.module.c_str(),
                  m.report.entries.size(), m.report.max_rel_error, m.report.passed() ? "ok" : "FAILED");
    log << buf;
    ok = ok && m.report.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

inline const std::map<std::string, int (*)(const RunConfig&, std::ostream&)> kCommands = {
    {"gen", cmd_gen},   {"build", cmd_build},   {"train", cmd_train},
    {"eval", cmd_eval}, {"ablate", cmd_ablate}, {"gradcheck", cmd_gradcheck}};

/// Runs one command and maps library errors to exit codes.
inline int run_command(const std::string& name, const CommandOptions& opt, std::ostream& log, std::ostream& err) {
  auto it = kCommands.find(name);
  if (it == kCommands.end()) {
    err << "error: unknown command '" << name << "'\n";
    return kExitUsage;
  }
  try {
    if (!fs::exists(opt.config)) throw IoError("config file " + opt.config.string() + " not found");
    return it->second(load_run_config(opt), log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IngestionError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const EncodingError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace igstf

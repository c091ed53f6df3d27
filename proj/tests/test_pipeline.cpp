#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "igstf/cli.hpp"

using namespace igstf;

namespace {

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("igstf_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

SynthConfig quiet_synth() {
  SynthConfig c;
  c.noise_std = 0.0;
  return c;
}

SynthConfig small_synth() {
  SynthConfig c;
  c.nodes = 6;
  c.days = 3;
  c.incidents_per_day = 8.0;
  return c;
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.data.synth = small_synth();
  auto& m = c.model;
  m.d_h = m.d_k = m.d_v = m.d_out = 8;
  m.d_s = 4;
  m.d_e = 8;
  m.d_emb = 4;
  m.layers = 1;
  m.mlp_hidden = 8;
  m.type_emb_dim = 4;
  m.desc_emb_dim = 4;
  m.sensor_cat_dim = 2;
  c.train.max_epochs = 5;
  c.train.patience = 3;
  c.train.batch_size = 16;
  c.train.incident_free_fraction = 0.1;
  c.output_dir = out.string();
  return c;
}

void write_config(const fs::path& path, const RunConfig& c) { write_text_file(path, to_json(c).dump(2)); }

std::string slurp(const fs::path& p) { return read_text_file(p); }

}  // namespace

// ------------------------------------------------------------------- synthgen

TEST(Synth, BaseFlowHandValues) {
  SynthConfig c;
  const TimePoint monday = *parse_iso8601("2023-01-02T00:00:00Z");
  EXPECT_NEAR(synth_base_flow(c, monday), 100.0, 1e-12);                              // 200 (1 - 0.5)
  EXPECT_NEAR(synth_base_flow(c, monday + std::chrono::hours(12)), 300.0, 1e-12);     // 200 (1 + 0.5)
  EXPECT_NEAR(synth_base_flow(c, monday + std::chrono::hours(6)), 200.0, 1e-12);
  EXPECT_NEAR(synth_base_flow(c, monday + std::chrono::hours(24 * 5 + 12)), 240.0, 1e-12);  // Saturday
}

TEST(Synth, NoIncidentsNoNoiseIsTheSinusoid) {
  SynthConfig c = quiet_synth();
  c.incidents_per_day = 0.0;
  c.days = 2;
  const auto ds = generate_synthetic(c);
  ASSERT_TRUE(ds.incidents.empty());
  ASSERT_EQ(ds.series.steps(), 576u);
  for (std::size_t t = 0; t < ds.series.steps(); ++t) {
    const double tod = static_cast<double>(t % 288) / 288.0;
    const double expect = 200.0 * (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * tod - std::numbers::pi / 2.0));
    for (std::size_t i = 0; i < c.nodes; ++i) ASSERT_NEAR(ds.series.flow(t, i), expect, 1e-9);
  }
}

TEST(Synth, NoIncidentsWithNoiseIsBasePlusNoise) {
  SynthConfig c;
  c.incidents_per_day = 0.0;
  c.days = 2;
  const auto ds = generate_synthetic(c);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < ds.series.steps(); ++t)
    for (std::size_t i = 0; i < c.nodes; ++i) {
      const double e = ds.series.flow(t, i) - ds.base.at(t, i);
      sum += e;
      sq += e * e;
      ++n;
    }
  const double mean = sum / static_cast<double>(n), sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.1);
  EXPECT_NEAR(sd, 4.0, 0.1);  // 2% of 200
}

TEST(Synth, ImpactAtTheIncidentLocationAtOnsetHalvesFlow) {
  EXPECT_DOUBLE_EQ(synth_spatial(7.25, 7.25, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(synth_recovery(0, 12), 1.0);
  EXPECT_DOUBLE_EQ(synth_gate(7.25, 7.25, 0.2), 1.0);
  const double base = 180.0;
  EXPECT_DOUBLE_EQ(base * (1.0 - 0.5 * synth_spatial(7.25, 7.25, 2.0) * synth_recovery(0, 12)), 0.5 * base);
}

TEST(Synth, RecoveryRamp) {
  EXPECT_DOUBLE_EQ(synth_recovery(6, 12), 0.5);
  EXPECT_DOUBLE_EQ(synth_recovery(11, 12), 1.0 / 12.0);
  EXPECT_EQ(synth_recovery(12, 12), 0.0);
  EXPECT_EQ(synth_recovery(40, 12), 0.0);
  EXPECT_EQ(synth_recovery(-1, 12), 0.0);
}

TEST(Synth, ImpactOrdering) {
  for (double d = 0.0; d < 5.0; d += 0.25) {
    EXPECT_GE(synth_spatial(10.0 - d, 10.0, 2.0), synth_spatial(10.0 - d - 0.25, 10.0, 2.0));
    const double up = synth_spatial(10.0 - d, 10.0, 2.0) * synth_gate(10.0 - d, 10.0, 0.2);
    const double down = synth_spatial(10.0 + d, 10.0, 2.0) * synth_gate(10.0 + d, 10.0, 0.2);
    EXPECT_GE(up, down);
  }
}

TEST(Synth, FlowMatchesTheGeneratorFormula) {
  SynthConfig c = quiet_synth();
  const auto ds = generate_synthetic(c);
  ASSERT_EQ(ds.incidents.size(), 40u);
  for (std::size_t t = 0; t < ds.series.steps(); t += 7) {
    for (std::size_t i = 0; i < c.nodes; ++i) {
      double cut = 0.0;
      for (std::size_t k = 0; k < ds.incidents.size(); ++k) {
        if (t < ds.onsets[k] || t >= ds.onsets[k] + 12) continue;
        const double pm_i = static_cast<double>(i), pm_e = ds.incidents[k].abs_pm;
        const double d_km = std::abs(pm_i - pm_e) * 1.609344;
        cut += 0.5 * std::exp(-d_km * d_km / 4.0) * (1.0 - static_cast<double>(t - ds.onsets[k]) / 12.0) *
               (pm_i <= pm_e ? 1.0 : 0.2);
      }
      ASSERT_NEAR(ds.series.flow(t, i), std::max(0.0, ds.base.at(t, i) * (1.0 - cut)), 1e-9) << t << " " << i;
    }
  }
}

TEST(Synth, IncidentsFallInTheirOnsetStep) {
  const auto ds = generate_synthetic(SynthConfig{});
  const TimePoint start = ds.series.start;
  for (std::size_t k = 0; k < ds.incidents.size(); ++k) {
    const auto off = std::chrono::duration_cast<std::chrono::seconds>(ds.incidents[k].timestamp - start).count();
    EXPECT_EQ(static_cast<std::size_t>(off / kStepSeconds), ds.onsets[k]);
    EXPECT_TRUE(incident_type_index(ds.incidents[k].type).has_value());
    EXPECT_TRUE(incident_description_index(ds.incidents[k].description).has_value());
    if (k) {
      EXPECT_LE(ds.incidents[k - 1].timestamp, ds.incidents[k].timestamp);
    }
  }
}

TEST(Synth, ReproduciblePerSeed) {
  ScratchDir a("synth_a"), b("synth_b"), d("synth_d");
  SynthConfig c;
  write_synthetic(a.path(), generate_synthetic(c));
  write_synthetic(b.path(), generate_synthetic(c));
  c.seed = 5;
  write_synthetic(d.path(), generate_synthetic(c));
  for (const char* f : {"sensors.csv", "incidents.csv", "traffic.igstf", "truth_impacts.csv"}) {
    EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
  }
  EXPECT_NE(slurp(a.path() / "traffic.igstf"), slurp(d.path() / "traffic.igstf"));
  EXPECT_EQ(slurp(a.path() / "truth_impacts.csv").substr(0, 42), "incident_id,timestamp,sensor_id,reduction\n");
}

// ------------------------------------------------------------------- pipeline

TEST(Pipeline, BuildReportOnDefaults) {
  ScratchDir dir("build");
  write_synthetic(dir.path(), generate_synthetic(SynthConfig{}));
  const Dataset ds = build_dataset(dir.path(), DataConfig{}, HyperConfig{});
  const auto& r = ds.report;
  EXPECT_EQ(r.nodes, 20u);
  EXPECT_EQ(r.incidents, 40u);
  EXPECT_EQ(r.incidents_aligned + r.incidents_dropped, 40u);
  EXPECT_EQ(r.time_steps, 2880u);
  EXPECT_EQ(r.instances, 2880u - 12 - 12 + 1);
  EXPECT_EQ(r.train + r.val + r.test + r.dropped_boundary, r.instances);
  EXPECT_GT(r.edges, 0u);
  EXPECT_GT(r.test_with_incidents, 0u);
  EXPECT_GT(ds.norm.flow_std, 0.0);
}

TEST(Pipeline, ProcessedRoundTrip) {
  ScratchDir raw("rt_raw"), proc("rt_proc");
  write_synthetic(raw.path(), generate_synthetic(small_synth()));
  const Dataset a = build_dataset(raw.path(), DataConfig{}, HyperConfig{});
  write_processed(proc.path(), a);
  const Dataset b = load_processed(proc.path(), DataConfig{}, HyperConfig{});
  EXPECT_EQ(b.report.edges, a.report.edges);
  EXPECT_DOUBLE_EQ(b.relation_bw.road_km, a.relation_bw.road_km);
  EXPECT_DOUBLE_EQ(b.adjacency_bw, a.adjacency_bw);
  ASSERT_EQ(b.splits.test.size(), a.splits.test.size());
  // flow went through float32, so only the fitted statistics are close
  EXPECT_NEAR(b.norm.flow_mean, a.norm.flow_mean, 1e-3);

  DataConfig other;
  other.train_ratio = 0.6;
  other.val_ratio = 0.2;
  other.test_ratio = 0.2;
  EXPECT_THROW(load_processed(proc.path(), other, HyperConfig{}), IngestionError);
  fs::remove(proc.path() / "graph.json");
  EXPECT_THROW(load_processed(proc.path(), DataConfig{}, HyperConfig{}), IoError);
}

TEST(Pipeline, SensorMismatchIsRejected) {
  auto ds = generate_synthetic(small_synth());
  auto sensors = ds.sensors;
  std::swap(sensors[0], sensors[1]);
  EXPECT_THROW(assemble_dataset(sensors, ds.incidents, ds.series, DataConfig{}, HyperConfig{}), IngestionError);
}

// ------------------------------------------------------------------- training

namespace {

struct TinyData {
  Dataset ds;
  TrainingData td;
};

TinyData tiny_data(const RunConfig& c) {
  const auto syn = generate_synthetic(c.data.synth);
  TinyData t{assemble_dataset(syn.sensors, syn.incidents, syn.series, c.data, c.model), {}};
  t.td = prepare_training_data(t.ds, c.model);
  return t;
}

}  // namespace

TEST(Training, LossDecreasesOverTheFirstEpochs) {
  RunConfig c = tiny_run("unused");
  c.train.patience = 10;
  const auto data = tiny_data(c);
  const auto out = train_model(c.model, c.train, data.td, data.ds.vocab);
  ASSERT_EQ(out.history.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(out.history[e].train_mae, out.history[e - 1].train_mae) << e;
}

TEST(Training, BestEpochIsTheMinimumValidationError) {
  RunConfig c = tiny_run("unused");
  c.train.max_epochs = 8;
  c.train.patience = 2;
  c.train.lr = 0.05;
  const auto data = tiny_data(c);
  const auto out = train_model(c.model, c.train, data.td, data.ds.vocab);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, since = 0;
  for (const auto& r : out.history) {
    if (r.val_mae < best) {
      best = r.val_mae;
      best_epoch = r.epoch;
      since = 0;
    } else {
      ++since;
    }
  }
  EXPECT_EQ(out.best_epoch, best_epoch);
  EXPECT_EQ(out.best_val_mae, best);
  EXPECT_TRUE(out.history.size() == c.train.max_epochs || since == c.train.patience);
  // float32 rounding moves the checkpointed error by a tiny amount only
  const double again = pooled_mae(evaluate(out.params, c.model, data.td.data, data.td.val));
  EXPECT_NEAR(again, best, 1e-3 * best);
}

TEST(Training, ThreadCountDoesNotChangeTheResult) {
  RunConfig c = tiny_run("unused");
  c.train.max_epochs = 2;
  const auto data = tiny_data(c);
  const auto one = train_model(c.model, c.train, data.td, data.ds.vocab);
  c.train.threads = 3;
  const auto three = train_model(c.model, c.train, data.td, data.ds.vocab);
  for (const auto& [name, t] : one.params) EXPECT_EQ(t.storage(), three.params.get(name).storage()) << name;
  EXPECT_EQ(one.history.back().val_mae, three.history.back().val_mae);
}

TEST(Training, ParallelForRethrows) {
  EXPECT_THROW(parallel_for(8, 3,
                            [](std::size_t i) {
                              if (i == 5) throw NumericError("boom");
                            }),
               NumericError);
}

TEST(Training, EmptySplitsAreRejected) {
  RunConfig c = tiny_run("unused");
  auto data = tiny_data(c);
  data.td.val.clear();
  EXPECT_THROW(train_model(c.model, c.train, data.td, data.ds.vocab), ConfigError);
}

// ------------------------------------------------------------------- cli

TEST(Cli, MetricsRowsOfAPerfectPredictorAreZero) {
  const auto data = tiny_data(tiny_run("unused"));
  MetricsAccumulator acc;
  for (const auto& i : data.td.test) acc.add(i.target, i.target, i.mask);
  const std::string csv = kMetricsHeader + metrics_rows("full", acc.report());
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "variant,horizon,mae,rmse,mape");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto f = split_csv_line(line);
    ASSERT_EQ(f.size(), 5u);
    EXPECT_EQ(f[2], "0");
    EXPECT_EQ(f[3], "0");
    EXPECT_EQ(f[4], "0");
  }
  EXPECT_EQ(rows, 4u);
}

TEST(Cli, VariantNames) {
  for (const auto& v : kAblationVariants) EXPECT_EQ(variant_name(apply_variant(HyperConfig{}, v)), v);
  HyperConfig c;
  c.use_S = c.use_D = false;
  EXPECT_EQ(variant_name(c), "custom");
}

TEST(Cli, ModelArtifactRoundTrip) {
  ScratchDir dir("artifact");
  const RunConfig c = tiny_run(dir.path());
  const auto data = tiny_data(c);
  ModelArtifact a{c, init_model_params(c.model, data.ds.vocab, 6, 3), data.ds.vocab, data.ds.norm};
  a.params.round_to_float();
  write_model_artifact(dir.path(), a);
  const ModelArtifact b = read_model_artifact(dir.path());
  EXPECT_EQ(to_json(b.config), to_json(a.config));
  EXPECT_EQ(vocab_to_json(b.vocab), vocab_to_json(a.vocab));
  EXPECT_EQ(b.norm.flow_std, a.norm.flow_std);
  for (const auto& [name, t] : a.params) EXPECT_EQ(b.params.get(name).storage(), t.storage()) << name;
  fs::remove(dir.path() / "vocab.json");
  EXPECT_THROW(read_model_artifact(dir.path()), IoError);
}

TEST(Cli, SvgPlotIsSelfContained) {
  PlotSpec spec;
  spec.title = "a < b";
  spec.series = {{"observed", "#000", false, {{0, 1.0}, {1, 2.0}, {2, std::nan("")}, {3, 1.5}}}};
  spec.marker_x = 1.0;
  spec.marker_label = "incident E1 (Accident)";
  const std::string svg = render_svg_plot(spec);
  EXPECT_EQ(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0), 0u);
  EXPECT_NE(svg.find("a &lt; b"), std::string::npos);
  EXPECT_NE(svg.find("incident E1 (Accident)"), std::string::npos);
  std::size_t lines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 2u);  // the NaN splits the series
  EXPECT_EQ(svg.find("href"), std::string::npos);
}

namespace {

int run(const std::string& cmd, const fs::path& config, std::string* log_out = nullptr) {
  std::ostringstream log, err;
  const int code = run_command(cmd, {config, std::nullopt, std::nullopt}, log, err);
  if (log_out) *log_out = log.str() + err.str();
  return code;
}

}  // namespace

TEST(Cli, ExitCodes) {
  ScratchDir dir("exit");
  const fs::path cfg = dir.path() / "cfg.json";
  EXPECT_EQ(run("train", dir.path() / "missing.json"), kExitIo);
  write_text_file(cfg, "{\"model\": {\"d_hh\": 3}}");
  EXPECT_EQ(run("gen", cfg), kExitUsage);
  write_text_file(cfg, "{not json");
  EXPECT_EQ(run("gen", cfg), kExitUsage);
  EXPECT_EQ(run("frobnicate", cfg), kExitUsage);

  RunConfig c = tiny_run(dir.path() / "out");
  write_config(cfg, c);
  EXPECT_EQ(run("train", cfg), kExitIo);  // nothing built yet
  EXPECT_EQ(run("eval", cfg), kExitIo);

  write_text_file(dir.path() / "blocker", "x");
  c.output_dir = (dir.path() / "blocker" / "out").string();
  write_config(cfg, c);
  EXPECT_EQ(run("gen", cfg), kExitIo);

  EXPECT_EQ(run("gradcheck", cfg), kExitOk);
}

TEST(Cli, BuildRejectsAMissingColumn) {
  ScratchDir dir("column");
  const fs::path cfg = dir.path() / "cfg.json";
  write_config(cfg, tiny_run(dir.path() / "out"));
  ASSERT_EQ(run("gen", cfg), kExitOk);
  const fs::path sensors = dir.path() / "out" / "raw" / "sensors.csv";
  std::string text = slurp(sensors);
  text.replace(text.find("lane_width"), 10, "lane_wide");
  write_text_file(sensors, text);
  std::string log;
  EXPECT_EQ(run("build", cfg, &log), kExitIo);
  EXPECT_NE(log.find("sensors.csv"), std::string::npos);
}

TEST(Cli, EndToEndCommands) {
  ScratchDir dir("e2e");
  const fs::path cfg = dir.path() / "cfg.json", out = dir.path() / "out";
  RunConfig c = tiny_run(out);
  c.train.max_epochs = 2;
  write_config(cfg, c);

  ASSERT_EQ(run("gen", cfg), kExitOk);
  const std::string traffic = slurp(out / "raw" / "traffic.igstf");
  ASSERT_EQ(run("gen", cfg), kExitOk);
  EXPECT_EQ(slurp(out / "raw" / "traffic.igstf"), traffic);

  ASSERT_EQ(run("build", cfg), kExitOk);
  const auto report = nlohmann::json::parse(slurp(out / "processed" / "build_report.json"));
  EXPECT_EQ(report.at("nodes").get<int>(), 6);
  EXPECT_EQ(report.at("incidents").get<int>(), 24);

  ASSERT_EQ(run("train", cfg), kExitOk);
  for (const char* f : {"config.json", "params.bin", "vocab.json", "norm_stats.json"})
    EXPECT_TRUE(fs::exists(out / "model" / f)) << f;
  const std::string params = slurp(out / "model" / "params.bin"), metrics = slurp(out / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, 30), "variant,horizon,mae,rmse,mape\n");
  EXPECT_EQ(slurp(out / "train_history.csv").substr(0, 48), "epoch,train_mae,val_mae,grad_norm,steps,improved");

  ASSERT_EQ(run("train", cfg), kExitOk);
  EXPECT_EQ(slurp(out / "model" / "params.bin"), params);
  EXPECT_EQ(slurp(out / "metrics.csv"), metrics);

  ASSERT_EQ(run("eval", cfg), kExitOk);
  EXPECT_EQ(slurp(out / "metrics.csv"), metrics);
  EXPECT_NE(slurp(out / "horizon_plot.svg").find("incident E"), std::string::npos);

  c.eval.plot_node = 99;
  write_config(cfg, c);
  EXPECT_EQ(run("eval", cfg), kExitUsage);
}

TEST(Cli, EvalRejectsAModelForAnotherNetwork) {
  ScratchDir dir("othernet");
  const fs::path cfg = dir.path() / "cfg.json", out = dir.path() / "out";
  RunConfig c = tiny_run(out);
  c.train.max_epochs = 1;
  write_config(cfg, c);
  ASSERT_EQ(run("gen", cfg), kExitOk);
  ASSERT_EQ(run("build", cfg), kExitOk);
  ASSERT_EQ(run("train", cfg), kExitOk);
  c.data.synth.nodes = 7;
  write_config(cfg, c);
  ASSERT_EQ(run("gen", cfg), kExitOk);
  ASSERT_EQ(run("build", cfg), kExitOk);
  EXPECT_EQ(run("eval", cfg), kExitIo);
}

TEST(Cli, AblateWritesSixVariantRowsPerHorizon) {
  ScratchDir dir("ablate");
  const fs::path cfg = dir.path() / "cfg.json", out = dir.path() / "out";
  RunConfig c = tiny_run(out);
  c.train.max_epochs = 1;
  write_config(cfg, c);
  ASSERT_EQ(run("gen", cfg), kExitOk);
  ASSERT_EQ(run("build", cfg), kExitOk);
  ASSERT_EQ(run("ablate", cfg), kExitOk);
  std::istringstream in(slurp(out / "ablation.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "variant,horizon,mae,rmse,mape");
  std::map<std::string, std::set<std::string>> by_horizon;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    by_horizon[f[1]].insert(f[0]);
  }
  ASSERT_EQ(by_horizon.size(), 4u);
  for (const auto& [h, variants] : by_horizon) EXPECT_EQ(variants.size(), 6u) << h;
}

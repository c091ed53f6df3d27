#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "igstf/io.hpp"

using namespace igstf;

namespace {

SensorMeta sensor(std::string id, std::string fwy, double pm, double lat = 37.70, double lon = -122.10) {
  SensorMeta s;
  s.id = std::move(id);
  s.type = "Mainline";
  s.surface = "Asphalt";
  s.roadway_use = "Urban";
  s.freeway = std::move(fwy);
  s.abs_pm = pm;
  s.latitude = lat;
  s.longitude = lon;
  return s;
}

IncidentRecord incident(std::string fwy, double pm, TimePoint ts = {}, double lat = 37.70, double lon = -122.10) {
  IncidentRecord e;
  e.id = "e";
  e.timestamp = ts;
  e.type = "Accident";
  e.description = "Traffic Collision";
  e.freeway = std::move(fwy);
  e.abs_pm = pm;
  e.latitude = lat;
  e.longitude = lon;
  return e;
}

TimePoint t0() { return *parse_iso8601("2023-01-02T00:00:00Z"); }

std::shared_ptr<const TrafficSeries> flat_series(std::size_t steps, std::size_t nodes) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < nodes; ++i) ids.push_back("s" + std::to_string(i));
  Tensor flow({steps, nodes});
  for (std::size_t i = 0; i < flow.size(); ++i) flow[i] = static_cast<double>(i);
  return std::make_shared<const TrafficSeries>(TrafficSeries::from_flow(flow, t0(), ids));
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("igstf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Time, ParseAndFormatRoundTrip) {
  auto tp = parse_iso8601("2023-03-15T07:45:10Z");
  ASSERT_TRUE(tp);
  EXPECT_EQ(format_iso8601(*tp), "2023-03-15T07:45:10Z");
  EXPECT_TRUE(parse_iso8601("2023-03-15 07:45:10"));
  EXPECT_TRUE(parse_iso8601("2023-03-15T07:45:10.250+00:00"));
  EXPECT_FALSE(parse_iso8601("2023-02-30T00:00:00Z"));
  EXPECT_FALSE(parse_iso8601("yesterday"));
  EXPECT_FALSE(parse_iso8601("2023-03-15T07:45:10+02:00"));
}

TEST(Time, SlotsAndWeekdays) {
  EXPECT_EQ(time_of_day_slot(t0()), 0u);
  EXPECT_EQ(time_of_day_slot(*parse_iso8601("2023-01-02T23:55:00Z")), 287u);
  EXPECT_EQ(time_of_day_slot(*parse_iso8601("2023-01-02T00:04:59Z")), 0u);
  EXPECT_EQ(day_of_week(t0()), 0u);  // a Monday
  EXPECT_EQ(day_of_week(*parse_iso8601("2023-01-08T12:00:00Z")), 6u);
}

TEST(Adjacency, SamePostmileIsOne) {
  auto g = build_adjacency({sensor("a", "I-880", 23.15), sensor("b", "I-880", 23.15)}, 1.0);
  EXPECT_EQ(g.adjacency.at(0, 1), 1.0);
  EXPECT_EQ(g.adjacency.at(0, 0), 0.0);
}

TEST(Adjacency, DifferentFreewaysAreZero) {
  auto g = build_adjacency({sensor("a", "I-880", 23.15), sensor("b", "I-580", 23.15)}, 1.0);
  EXPECT_EQ(g.adjacency.at(0, 1), 0.0);
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(Adjacency, KernelAtOneBandwidthIsExpMinusOne) {
  const double gap_km = (25.50 - 23.15) * 1.609344;
  auto g = build_adjacency({sensor("a", "I-880", 23.15), sensor("b", "I-880", 25.50)}, gap_km);
  EXPECT_NEAR(g.adjacency.at(0, 1), std::exp(-1.0), 1e-12);
  EXPECT_EQ(g.adjacency.at(1, 0), g.adjacency.at(0, 1));
  auto g2 = build_adjacency({sensor("a", "I-880", 23.15), sensor("b", "I-880", 25.50)}, 3.782);
  EXPECT_NEAR(g2.adjacency.at(0, 1), 0.3679, 1e-4);
}

TEST(Adjacency, ThresholdAndPreconditions) {
  std::vector<SensorMeta> s = {sensor("a", "F", 0.0), sensor("b", "F", 1.0), sensor("c", "F", 10.0)};
  auto g = build_adjacency(s, 1.609344, 0.1);
  EXPECT_NEAR(g.adjacency.at(0, 1), std::exp(-1.0), 1e-12);
  EXPECT_EQ(g.adjacency.at(0, 2), 0.0);  // exp(-100) below threshold
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_THROW(build_adjacency({s[0]}, 1.0), ConfigError);
  EXPECT_THROW(build_adjacency(s, 0.0), ConfigError);
  EXPECT_THROW(build_adjacency(s, 1.0, 1.0), ConfigError);
  EXPECT_THROW(build_adjacency({s[0], s[0]}, 1.0), IngestionError);
}

TEST(Adjacency, RowNormalizedKeepsZeroRows) {
  auto g = build_adjacency({sensor("a", "F", 0.0), sensor("b", "F", 0.5), sensor("c", "G", 0.0)}, 2.0);
  Tensor r = g.row_normalized();
  EXPECT_NEAR(r.at(0, 1), 1.0, 1e-15);
  EXPECT_EQ(r.at(2, 0) + r.at(2, 1) + r.at(2, 2), 0.0);
}

TEST(Relation, UpstreamBitFromPostmiles) {
  auto d = build_relation_tensor({incident("I-880", 25.50)}, {sensor("a", "I-880", 23.15)}, {1.0, 1.0});
  EXPECT_EQ(d.d.at(0, 0, RelationTensor::kUpstream), 1.0);
  auto rev = build_relation_tensor({incident("I-880", 23.15)}, {sensor("a", "I-880", 25.50)}, {1.0, 1.0});
  EXPECT_EQ(rev.d.at(0, 0, RelationTensor::kUpstream), 0.0);
}

TEST(Relation, CoLocatedIsOneOneZero) {
  auto d = build_relation_tensor({incident("I-880", 23.15)}, {sensor("a", "I-880", 23.15)}, {2.0, 3.0});
  EXPECT_EQ(d.d.at(0, 0, 0), 1.0);
  EXPECT_EQ(d.d.at(0, 0, 1), 1.0);
  EXPECT_EQ(d.d.at(0, 0, 2), 0.0);
}

TEST(Relation, CrossFreewayRoadScoreIsZero) {
  auto d = build_relation_tensor({incident("I-580", 23.15)}, {sensor("a", "I-880", 23.15)}, {2.0, 3.0});
  EXPECT_EQ(d.d.at(0, 0, RelationTensor::kRoad), 0.0);
  EXPECT_EQ(d.d.at(0, 0, RelationTensor::kEuclidean), 1.0);
}

TEST(Relation, ProximityMonotoneInDistance) {
  std::vector<SensorMeta> s;
  for (int i = 0; i < 10; ++i) s.push_back(sensor("s" + std::to_string(i), "F", 5.0 + i, 37.70 + 0.01 * i));
  auto d = build_relation_tensor({incident("F", 5.0, {}, 37.70)}, s, {1.5, 2.5});
  for (std::size_t j = 1; j < s.size(); ++j) {
    EXPECT_LE(d.d.at(0, j, 0), d.d.at(0, j - 1, 0));
    EXPECT_LE(d.d.at(0, j, 1), d.d.at(0, j - 1, 1));
  }
}

TEST(Relation, HaversineKnownDistance) {
  // One degree of latitude on the mean-radius sphere.
  EXPECT_NEAR(haversine_km(0.0, 0.0, 1.0, 0.0), kEarthRadiusKm * std::numbers::pi / 180.0, 1e-9);
  EXPECT_EQ(haversine_km(37.7, -122.1, 37.7, -122.1), 0.0);
}

TEST(Relation, ConnectivityThresholdsRoadScore) {
  RelationTensor rt{Tensor({1, 3, 3})};
  rt.d.at(0, 0, 1) = 0.05;
  rt.d.at(0, 1, 1) = 0.0499;
  rt.d.at(0, 2, 1) = 0.9;
  Tensor c = rt.connectivity(0.05);
  EXPECT_EQ(c.at(0, 0), 1.0);
  EXPECT_EQ(c.at(0, 1), 0.0);
  EXPECT_EQ(c.at(0, 2), 1.0);
}

TEST(Alignment, FloorWindows) {
  auto s = flat_series(24, 2);
  std::vector<IncidentRecord> inc = {incident("F", 0, t0()), incident("F", 0, t0() + std::chrono::seconds{299}),
                                     incident("F", 0, t0() + std::chrono::seconds{3600}),
                                     incident("F", 0, t0() - std::chrono::seconds{1}),
                                     incident("F", 0, t0() + std::chrono::seconds{24 * 300})};
  auto a = align_incidents(inc, *s);
  EXPECT_EQ(a.by_window.at(0), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.by_window.at(12), (std::vector<std::size_t>{2}));
  EXPECT_EQ(a.dropped, 2u);
  EXPECT_EQ(a.aligned_count() + a.dropped, inc.size());
}

TEST(Instances, CountsAndIncidentAttachment) {
  auto s = flat_series(24, 3);
  std::vector<IncidentRecord> inc = {incident("F", 0, t0() + std::chrono::seconds{11 * 300})};
  std::vector<SensorMeta> sensors = {sensor("s0", "F", 0), sensor("s1", "F", 1), sensor("s2", "F", 2)};
  auto rel = build_relation_tensor(inc, sensors, {1.0, 1.0});
  auto inst = make_instances(s, align_incidents(inc, *s), inc, rel);
  ASSERT_EQ(inst.size(), 1u);
  EXPECT_EQ(inst[0].anchor, 11u);
  ASSERT_EQ(inst[0].incident_count(), 1u);
  EXPECT_EQ(inst[0].incidents[0].relative_position, 11);
  EXPECT_EQ(inst[0].relation.d.shape(), (Shape{1, 3, 3}));
  EXPECT_EQ(inst[0].history().shape(), (Shape{12, 3, 3}));
  EXPECT_EQ(inst[0].target().shape(), (Shape{12, 3, 1}));
  EXPECT_EQ(inst[0].target().at(0, 0, 0), s->flow(12, 0));
  EXPECT_EQ(inst[0].history().at(11, 2, 0), s->flow(11, 2));
}

TEST(Instances, NoIncidentsMeansEmptySets) {
  auto s = flat_series(40, 2);
  RelationTensor empty{Tensor({0, 2, 3})};
  auto inst = make_instances(s, {}, {}, empty);
  EXPECT_EQ(inst.size(), 40u - 24u + 1u);
  for (const auto& i : inst) {
    EXPECT_EQ(i.incident_count(), 0u);
    EXPECT_EQ(i.relation.d.shape(), (Shape{0, 2, 3}));
  }
  EXPECT_THROW(make_instances(flat_series(23, 2), {}, {}, empty), ConfigError);
}

TEST(Instances, TargetMaskFlagsMissing) {
  Tensor flow({24, 1}, 5.0);
  flow.at(13, 0) = std::nan("");
  auto s = std::make_shared<const TrafficSeries>(TrafficSeries::from_flow(flow, t0(), {"a"}));
  auto inst = make_instances(s, {}, {}, RelationTensor{Tensor({0, 1, 3})});
  Tensor m = inst[0].target_mask();
  EXPECT_EQ(m.at(0, 0, 0), 1.0);
  EXPECT_EQ(m.at(1, 0, 0), 0.0);
}

namespace {
std::vector<ForecastInstance> spaced(std::size_t n, std::size_t gap) {
  std::vector<ForecastInstance> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i].anchor = 11 + i * gap;
  return v;
}
}  // namespace

TEST(Split, SeventyFifteenFifteenBeforeDropping) {
  auto s = split_chronological(spaced(100, 100));
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.val.size(), 15u);
  EXPECT_EQ(s.test.size(), 15u);
  EXPECT_EQ(s.dropped_boundary, 0u);
}

TEST(Split, MinimalThree) {
  auto s = split_chronological(spaced(3, 100));
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, RejectsZeroRatio) {
  EXPECT_THROW(split_chronological(spaced(100, 1), {1.0, 0.0, 0.0}), ConfigError);
  EXPECT_THROW(split_chronological(spaced(2, 100)), ConfigError);
}

TEST(Split, DropsBoundaryOverlap) {
  // Consecutive anchors: each split boundary loses T_h + T_p - 1 = 23 instances.
  auto s = split_chronological(spaced(1000, 1));
  EXPECT_EQ(s.val.size(), 150u - 23u);
  EXPECT_EQ(s.train.size(), 700u - 23u);
  EXPECT_EQ(s.dropped_boundary, 46u);
  EXPECT_LT(s.train.back().target_end(), s.val.front().history_start());
  EXPECT_LT(s.val.back().target_end(), s.test.front().history_start());
}

TEST(Vocab, DiscoverSortedAndRejectsUnknown) {
  auto v = Vocabulary::discover({"b", "a", "b"});
  EXPECT_EQ(v.items(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(v.index("b"), 1u);
  EXPECT_THROW(v.index("zz"), EncodingError);
}

TEST(Taxonomy, SixTypesThirtyDescriptions) {
  EXPECT_EQ(kIncidentTypes.size(), 6u);
  EXPECT_EQ(kIncidentDescriptions.size(), 30u);
  EXPECT_EQ(description_type(*incident_description_index("1141 En Route")), *incident_type_index("Accident"));
  EXPECT_EQ(description_type(*incident_description_index("Traffic Hazard")), *incident_type_index("Hazard"));
}

TEST(Io, TrafficContainerRoundTrip) {
  const auto dir = temp_dir("traffic");
  Tensor flow({5, 2});
  for (std::size_t i = 0; i < flow.size(); ++i) flow[i] = 0.5 * static_cast<double>(i);
  flow.at(3, 1) = std::nan("");
  auto s = TrafficSeries::from_flow(flow, t0(), {"a", "b"});
  write_traffic(dir / "x.igstf", s, true);
  auto r = read_traffic(dir / "x.igstf");
  EXPECT_EQ(r.steps(), 5u);
  EXPECT_EQ(r.sensor_ids, s.sensor_ids);
  EXPECT_EQ(r.start, s.start);
  EXPECT_TRUE(r.missing(3, 1));
  EXPECT_EQ(r.flow(4, 0), 4.0);
  EXPECT_EQ(r.x.at(1, 0, kTimeOfDayChannel), 1.0 / 288.0);

  write_traffic(dir / "y.igstf", s, false);
  auto r3 = read_traffic(dir / "y.igstf");
  EXPECT_EQ(r3.x.at(1, 0, kTimeOfDayChannel), static_cast<double>(static_cast<float>(1.0 / 288.0)));
}

TEST(Io, ContainerRejectsBadMagicAndTruncation) {
  const auto dir = temp_dir("badmagic");
  write_text_file(dir / "bad.igstf", "NOTMAGIC0000");
  EXPECT_THROW(read_traffic(dir / "bad.igstf"), IngestionError);
  auto s = TrafficSeries::from_flow(Tensor({2, 1}, 1.0), t0(), {"a"});
  write_traffic(dir / "ok.igstf", s, true);
  std::string bytes = read_text_file(dir / "ok.igstf");
  write_text_file(dir / "cut.igstf", bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_traffic(dir / "cut.igstf"), IngestionError);
  EXPECT_THROW(read_traffic(dir / "absent.igstf"), IoError);
}

TEST(Io, TensorContainerRoundTrip) {
  const auto dir = temp_dir("tensors");
  ParamStore p;
  p.add("w", Tensor::matrix({{1.5, -2.0}, {0.25, 3.0}}));
  p.add("empty", Tensor({0, 4}));
  write_tensors(dir / "p.bin", p);
  EXPECT_EQ(read_tensors(dir / "p.bin"), p);
}

TEST(Io, CsvRoundTripAndErrors) {
  const auto dir = temp_dir("csv");
  std::vector<SensorMeta> s = {sensor("400001", "I-880", 23.15), sensor("400002", "I-880", 25.5)};
  s[1].type = "On, Ramp";
  write_sensors_csv(dir / "sensors.csv", s);
  auto back = read_sensors_csv(dir / "sensors.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].type, "On, Ramp");
  EXPECT_EQ(back[0].abs_pm, 23.15);

  std::vector<IncidentRecord> inc = {incident("I-880", 25.5, t0() + std::chrono::seconds{3300})};
  write_incidents_csv(dir / "incidents.csv", inc);
  auto ib = read_incidents_csv(dir / "incidents.csv");
  EXPECT_EQ(ib[0].timestamp, inc[0].timestamp);
  EXPECT_EQ(ib[0].description, "Traffic Collision");

  write_text_file(dir / "nocol.csv", "id,type\n1,x\n");
  try {
    read_sensors_csv(dir / "nocol.csv");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("missing column 'surface'"), std::string::npos);
  }
  write_text_file(dir / "badts.csv",
                  "id,timestamp,type,description,holiday,latitude,longitude,abs_pm,freeway\n"
                  "a,2023-01-02T00:00:00Z,Accident,Traffic Collision,0,37,-122,1,F\n"
                  "b,garbage,Accident,Traffic Collision,0,37,-122,1,F\n");
  try {
    read_incidents_csv(dir / "badts.csv");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
}

TEST(Io, LongFormCsvToSeries) {
  const auto dir = temp_dir("long");
  write_text_file(dir / "flow.csv",
                  "timestamp,sensor_id,flow\n"
                  "2023-01-02T00:00:00Z,a,10\n"
                  "2023-01-02T00:00:00Z,b,20\n"
                  "2023-01-02T00:10:00Z,b,\n"
                  "2023-01-02T00:10:00Z,a,30\n");
  auto s = read_long_form_csv(dir / "flow.csv", {"a", "b"});
  EXPECT_EQ(s.steps(), 3u);
  EXPECT_EQ(s.flow(0, 1), 20.0);
  EXPECT_TRUE(s.missing(1, 0));
  EXPECT_TRUE(s.missing(2, 1));
  EXPECT_EQ(s.flow(2, 0), 30.0);
}

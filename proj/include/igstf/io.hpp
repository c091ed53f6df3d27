#pragma once

// File formats: sensors.csv, incidents.csv, long-form flow CSV, the
// IGSTF001 traffic container and the IGSTP001 named-tensor container.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "igstf/datamodel.hpp"
#include "igstf/params.hpp"

namespace igstf {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

// ------------------------------------------------------------------- text files

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

// ------------------------------------------------------------------- CSV

using CsvRow = std::vector<std::string>;

/// Splits one CSV line; double quotes group fields and "" escapes a quote.
inline CsvRow split_csv_line(const std::string& line) {
  CsvRow out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

struct CsvTable {
  std::string source;
  CsvRow header;
  std::vector<CsvRow> rows;  // rows[i] is data row i + 1 (header is row 0)
};

/// Reads a CSV file and checks that the header equals `expected` exactly.
inline CsvTable read_csv(const fs::path& path, const CsvRow& expected) {
  std::istringstream in(read_text_file(path));
  CsvTable t;
  t.source = path.filename().string();
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      t.header = split_csv_line(line);
      first = false;
      continue;
    }
    if (line.empty()) continue;
    t.rows.push_back(split_csv_line(line));
  }
  if (first) throw IngestionError(t.source + ": empty file");
  for (const auto& col : expected) {
    if (std::find(t.header.begin(), t.header.end(), col) == t.header.end()) {
      throw IngestionError(t.source + ": missing column '" + col + "'");
    }
  }
  if (t.header != expected) throw IngestionError(t.source + ": header does not match the expected column order");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != expected.size()) {
      throw IngestionError(t.source + " row " + std::to_string(r + 1) + ": expected " +
                           std::to_string(expected.size()) + " fields, got " + std::to_string(t.rows[r].size()));
    }
  }
  return t;
}

namespace detail {

inline std::string row_ctx(const CsvTable& t, std::size_t r, const std::string& col) {
  return t.source + " row " + std::to_string(r + 1) + " column '" + col + "'";
}

inline double parse_double(const CsvTable& t, std::size_t r, std::size_t c) {
  const std::string& s = t.rows[r][c];
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestionError(row_ctx(t, r, t.header[c]) + ": not a number: '" + s + "'");
  }
}

inline int parse_int(const CsvTable& t, std::size_t r, std::size_t c) {
  const std::string& s = t.rows[r][c];
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestionError(row_ctx(t, r, t.header[c]) + ": not an integer: '" + s + "'");
  }
}

inline TimePoint parse_time(const CsvTable& t, std::size_t r, std::size_t c) {
  auto tp = parse_iso8601(t.rows[r][c]);
  if (!tp) throw IngestionError(row_ctx(t, r, t.header[c]) + ": unparsable timestamp '" + t.rows[r][c] + "'");
  return *tp;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline const CsvRow kSensorColumns = {"id",        "type",     "surface",   "roadway_use", "lane_width",
                                      "design_speed", "latitude", "longitude", "freeway",     "abs_pm"};
inline const CsvRow kIncidentColumns = {"id",       "timestamp", "type",    "description", "holiday",
                                        "latitude", "longitude", "abs_pm", "freeway"};

inline std::vector<SensorMeta> read_sensors_csv(const fs::path& path) {
  const CsvTable t = read_csv(path, kSensorColumns);
  std::vector<SensorMeta> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    SensorMeta s;
    s.id = row[0];
    s.type = row[1];
    s.surface = row[2];
    s.roadway_use = row[3];
    s.lane_width = detail::parse_double(t, r, 4);
    s.design_speed = detail::parse_int(t, r, 5);
    s.latitude = detail::parse_double(t, r, 6);
    s.longitude = detail::parse_double(t, r, 7);
    s.freeway = row[8];
    s.abs_pm = detail::parse_double(t, r, 9);
    try {
      validate_sensor(s);
    } catch (const IngestionError& e) {
      throw IngestionError(t.source + " row " + std::to_string(r + 1) + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  require_unique_ids(out);
  return out;
}

inline std::vector<IncidentRecord> read_incidents_csv(const fs::path& path) {
  const CsvTable t = read_csv(path, kIncidentColumns);
  std::vector<IncidentRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    IncidentRecord e;
    e.id = row[0];
    e.timestamp = detail::parse_time(t, r, 1);
    e.type = row[2];
    e.description = row[3];
    e.holiday = detail::parse_int(t, r, 4);
    e.latitude = detail::parse_double(t, r, 5);
    e.longitude = detail::parse_double(t, r, 6);
    e.abs_pm = detail::parse_double(t, r, 7);
    e.freeway = row[8];
    try {
      validate_incident(e);
    } catch (const IngestionError& err) {
      throw IngestionError(t.source + " row " + std::to_string(r + 1) + ": " + err.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_sensors_csv(const fs::path& path, const std::vector<SensorMeta>& sensors) {
  std::ostringstream out;
  for (std::size_t i = 0; i < kSensorColumns.size(); ++i) out << (i ? "," : "") << kSensorColumns[i];
  out << '\n';
  for (const auto& s : sensors) {
    out << csv_field(s.id) << ',' << csv_field(s.type) << ',' << csv_field(s.surface) << ','
        << csv_field(s.roadway_use) << ',' << detail::fmt_double(s.lane_width) << ',' << s.design_speed << ','
        << detail::fmt_double(s.latitude) << ',' << detail::fmt_double(s.longitude) << ',' << csv_field(s.freeway)
        << ',' << detail::fmt_double(s.abs_pm) << '\n';
  }
  write_text_file(path, out.str());
}

inline void write_incidents_csv(const fs::path& path, const std::vector<IncidentRecord>& incidents) {
  std::ostringstream out;
  for (std::size_t i = 0; i < kIncidentColumns.size(); ++i) out << (i ? "," : "") << kIncidentColumns[i];
  out << '\n';
  for (const auto& e : incidents) {
    out << csv_field(e.id) << ',' << format_iso8601(e.timestamp) << ',' << csv_field(e.type) << ','
        << csv_field(e.description) << ',' << e.holiday << ',' << detail::fmt_double(e.latitude) << ','
        << detail::fmt_double(e.longitude) << ',' << detail::fmt_double(e.abs_pm) << ',' << csv_field(e.freeway)
        << '\n';
  }
  write_text_file(path, out.str());
}

/// Converts `timestamp,sensor_id,flow` rows to a series on a 300 s grid
/// starting at the earliest timestamp. Unobserved cells are NaN; empty flow
/// fields are treated as missing. Node order follows `sensor_ids`.
inline TrafficSeries read_long_form_csv(const fs::path& path, const std::vector<std::string>& sensor_ids) {
  const CsvTable t = read_csv(path, {"timestamp", "sensor_id", "flow"});
  if (t.rows.empty()) throw IngestionError(t.source + ": no data rows");
  std::map<std::string, std::size_t> node;
  for (std::size_t i = 0; i < sensor_ids.size(); ++i) node[sensor_ids[i]] = i;
  std::vector<TimePoint> times(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) times[r] = detail::parse_time(t, r, 0);
  const TimePoint start = *std::min_element(times.begin(), times.end());
  const TimePoint last = *std::max_element(times.begin(), times.end());
  const std::size_t steps = static_cast<std::size_t>((last - start).count() / kStepSeconds) + 1;
  Tensor flow({steps, sensor_ids.size()}, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long off = (times[r] - start).count();
    if (off % kStepSeconds != 0) {
      throw IngestionError(detail::row_ctx(t, r, "timestamp") + ": not on the 300 s grid");
    }
    auto it = node.find(t.rows[r][1]);
    if (it == node.end()) {
      throw IngestionError(detail::row_ctx(t, r, "sensor_id") + ": unknown sensor '" + t.rows[r][1] + "'");
    }
    if (t.rows[r][2].empty()) continue;
    flow.at(static_cast<std::size_t>(off / kStepSeconds), it->second) = detail::parse_double(t, r, 2);
  }
  return TrafficSeries::from_flow(flow, start, sensor_ids);
}

// ------------------------------------------------------------------- binary containers

namespace detail {

inline void write_container(const fs::path& path, const char (&magic)[9], const json& header,
                            const std::vector<float>& payload) {
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto len = static_cast<std::uint32_t>(h.size());
  out.write(magic, 8);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
  if (!out) throw IoError("write failed for " + path.string());
}

struct Container {
  json header;
  std::vector<float> payload;
};

inline Container read_container(const fs::path& path, const char (&magic)[9]) {
  const std::string bytes = read_text_file(path);
  const std::string name = path.filename().string();
  if (bytes.size() < 12 || bytes.compare(0, 8, magic) != 0) {
    throw IngestionError(name + ": bad magic (expected " + std::string(magic) + ")");
  }
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 4);
  if (12 + static_cast<std::size_t>(len) > bytes.size()) throw IngestionError(name + ": truncated header");
  Container c;
  try {
    c.header = json::parse(bytes.substr(12, len));
  } catch (const json::exception& e) {
    throw IngestionError(name + ": malformed JSON header: " + e.what());
  }
  const std::size_t rest = bytes.size() - 12 - len;
  if (rest % 4 != 0) throw IngestionError(name + ": payload is not a whole number of float32 values");
  c.payload.resize(rest / 4);
  std::memcpy(c.payload.data(), bytes.data() + 12 + len, rest);
  return c;
}

}  // namespace detail

inline constexpr char kTrafficMagic[9] = "IGSTF001";
inline constexpr char kParamsMagic[9] = "IGSTP001";

/// Writes the series; `flow_only` stores C = 1 instead of all three channels.
inline void write_traffic(const fs::path& path, const TrafficSeries& s, bool flow_only = false) {
  const std::size_t c = flow_only ? 1 : kTrafficChannels;
  json h = {{"T", s.steps()},
            {"N", s.nodes()},
            {"C", c},
            {"start", format_iso8601(s.start)},
            {"step_seconds", s.step_seconds},
            {"sensor_ids", s.sensor_ids}};
  std::vector<float> payload;
  payload.reserve(s.steps() * s.nodes() * c);
  for (std::size_t t = 0; t < s.steps(); ++t)
    for (std::size_t n = 0; n < s.nodes(); ++n)
      for (std::size_t k = 0; k < c; ++k) payload.push_back(static_cast<float>(s.x.at(t, n, k)));
  detail::write_container(path, kTrafficMagic, h, payload);
}

inline TrafficSeries read_traffic(const fs::path& path) {
  auto c = detail::read_container(path, kTrafficMagic);
  const std::string name = path.filename().string();
  std::size_t T, N, C;
  TimePoint start;
  std::vector<std::string> ids;
  try {
    T = c.header.at("T").get<std::size_t>();
    N = c.header.at("N").get<std::size_t>();
    C = c.header.at("C").get<std::size_t>();
    if (c.header.at("step_seconds").get<int>() != kStepSeconds) throw IngestionError(name + ": step_seconds must be 300");
    auto tp = parse_iso8601(c.header.at("start").get<std::string>());
    if (!tp) throw IngestionError(name + ": unparsable start time");
    start = *tp;
    ids = c.header.at("sensor_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IngestionError(name + ": bad header: " + e.what());
  }
  if (ids.size() != N) throw IngestionError(name + ": sensor_ids length differs from N");
  if (C != 1 && C != kTrafficChannels) throw IngestionError(name + ": C must be 1 or 3");
  if (c.payload.size() != T * N * C) throw IngestionError(name + ": payload size does not match T*N*C");
  if (C == 1) {
    Tensor flow({T, N});
    for (std::size_t i = 0; i < flow.size(); ++i) flow[i] = c.payload[i];
    return TrafficSeries::from_flow(flow, start, ids);
  }
  TrafficSeries s;
  s.start = start;
  s.sensor_ids = std::move(ids);
  s.x = Tensor({T, N, C});
  for (std::size_t i = 0; i < s.x.size(); ++i) s.x[i] = c.payload[i];
  return s;
}

/// Named float32 tensors; the header is {"params":[{"name":…,"shape":[…]},…]}.
inline void write_tensors(const fs::path& path, const ParamStore& tensors) {
  json manifest = json::array();
  std::vector<float> payload;
  for (const auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}});
    for (double v : t.storage()) payload.push_back(static_cast<float>(v));
  }
  detail::write_container(path, kParamsMagic, json{{"params", manifest}}, payload);
}

inline ParamStore read_tensors(const fs::path& path) {
  auto c = detail::read_container(path, kParamsMagic);
  const std::string name = path.filename().string();
  ParamStore out;
  std::size_t off = 0;
  try {
    for (const auto& entry : c.header.at("params")) {
      Shape shape = entry.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      if (off + n > c.payload.size()) throw IngestionError(name + ": payload shorter than manifest");
      std::vector<double> data(c.payload.begin() + static_cast<long>(off),
                               c.payload.begin() + static_cast<long>(off + n));
      out.add(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
      off += n;
    }
  } catch (const json::exception& e) {
    throw IngestionError(name + ": bad manifest: " + e.what());
  }
  if (off != c.payload.size()) throw IngestionError(name + ": payload longer than manifest");
  return out;
}

}  // namespace igstf

#include "vibestep/data_model.hpp"

#include "vibestep/serialization.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace vibestep {

namespace fs = std::filesystem;

MissingFileError::MissingFileError(const fs::path& p)
    : DataError("missing file: " + p.string()), path(p) {}

MalformedFileError::MalformedFileError(const fs::path& p, std::size_t l, const std::string& detail)
    : DataError("malformed file " + p.string() + " at line " + std::to_string(l) + ": " + detail),
      path(p),
      line(l) {}

NonFiniteSampleError::NonFiniteSampleError(const fs::path& p, std::size_t l)
    : DataError("non-finite sample in " + p.string() + " at line " + std::to_string(l)), path(p), line(l) {}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

// Parses a double, accepting nan/inf spellings so that the caller can report
// them as non-finite rather than malformed.
std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::ifstream open_input(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError(path);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

void VibrationTrace::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw DataError("trace " + sensor_id + ": sample rate must be positive");
  }
  if (samples.empty()) throw DataError("trace " + sensor_id + ": no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw DataError("trace " + sensor_id + ": non-finite sample at index " + std::to_string(i));
    }
  }
}

void FootstepEvent::validate(std::size_t trace_length) const {
  if (!(start_index < peak_index && peak_index < end_index && end_index <= trace_length)) {
    throw DataError("footstep event on " + trace_ref + " violates start < peak < end <= length");
  }
}

void FeatureVector::validate() const {
  if (values.size() < 2) throw DataError("feature vector needs at least 2 bands");
  if (band_edges_hz.size() != static_cast<std::size_t>(values.size()) + 1) {
    throw DataError("feature vector has " + std::to_string(values.size()) + " values but " +
                    std::to_string(band_edges_hz.size()) + " band edges");
  }
  for (std::size_t i = 1; i < band_edges_hz.size(); ++i) {
    if (!(band_edges_hz[i] > band_edges_hz[i - 1])) throw DataError("band edges must be strictly ascending");
  }
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw DataError("feature values must be finite and non-negative");
    }
  }
}

GroupedFeatures GroupedFeatures::group(std::span<const FeatureVector> features, GroupingMode mode) {
  std::map<std::string, std::vector<FeatureVector>> buckets;
  for (const auto& f : features) {
    const auto& key = mode == GroupingMode::ByPerson ? f.labels.person_id : f.labels.location_id;
    if (!key || key->empty()) {
      throw DataError(std::string("cannot group by ") +
                      (mode == GroupingMode::ByPerson ? "person" : "location") + ": unlabeled feature vector");
    }
    buckets[*key].push_back(f);
  }
  GroupedFeatures out;
  out.mode = mode;
  for (auto& [key, members] : buckets) out.groups.push_back({key, std::move(members)});
  out.validate();
  return out;
}

std::size_t GroupedFeatures::sample_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.members.size();
  return n;
}

Eigen::Index GroupedFeatures::dimension() const {
  for (const auto& g : groups) {
    if (!g.members.empty()) return g.members.front().dimension();
  }
  return 0;
}

void GroupedFeatures::validate() const {
  const auto d = dimension();
  for (const auto& g : groups) {
    if (g.members.empty()) throw DataError("group " + g.key + " is empty");
    for (const auto& m : g.members) {
      if (m.dimension() != d) throw DataError("group " + g.key + " mixes feature dimensions");
    }
  }
}

void FeatureSpec::validate() const {
  if (!(window_s > 0.0)) throw ConfigError("feature window must be positive");
  if (band_edges_hz.size() < 3) throw ConfigError("feature spec needs at least 2 bands");
  for (std::size_t i = 1; i < band_edges_hz.size(); ++i) {
    if (!(band_edges_hz[i] > band_edges_hz[i - 1])) throw ConfigError("band edges must be strictly ascending");
  }
  if (band_edges_hz.front() < 0.0) throw ConfigError("band edges must be non-negative");
  if (!(detection_threshold_sigma > 0.0)) throw ConfigError("detection threshold must be positive");
  if (!(refractory_s > 0.0)) throw ConfigError("refractory period must be positive");
}

FeatureSpec FeatureSpec::defaults(double sample_rate_hz, std::size_t bands, double low_hz) {
  FeatureSpec spec;
  const double high = 0.8 * 0.5 * sample_rate_hz;
  spec.band_edges_hz.resize(bands + 1);
  for (std::size_t i = 0; i <= bands; ++i) {
    spec.band_edges_hz[i] = low_hz * std::pow(high / low_hz, static_cast<double>(i) / static_cast<double>(bands));
  }
  spec.band_edges_hz.back() = high;
  return spec;
}

std::string to_string(ExcitationKind kind) {
  return kind == ExcitationKind::Footstep ? "footstep" : "ball_drop";
}

ExcitationKind excitation_kind_from_string(const std::string& text) {
  if (text == "footstep") return ExcitationKind::Footstep;
  if (text == "ball_drop") return ExcitationKind::BallDrop;
  throw ConfigError("unknown excitation kind: " + text);
}

void DatasetManifest::validate() const {
  std::map<std::string, int> ids;
  for (const auto& s : structures) {
    if (ids[s.id]++) throw ConfigError("duplicate structure id: " + s.id);
  }
  std::map<std::string, int> session_ids;
  for (const auto& s : sessions) {
    if (session_ids[s.session_id]++) throw ConfigError("duplicate session id: " + s.session_id);
    if (!ids.count(s.structure_id)) throw ConfigError("session " + s.session_id + " references unknown structure");
    if (s.kind == ExcitationKind::Footstep && s.person_id.empty()) {
      throw ConfigError("footstep session " + s.session_id + " has no person id");
    }
  }
  feature_spec.validate();
}

std::size_t Dataset::trace_count() const {
  std::size_t n = 0;
  for (const auto& s : traces) n += s.size();
  return n;
}

// ---------------------------------------------------------------------------
// manifest JSON


DatasetManifest load_manifest(const fs::path& path) {
  const Json j = read_json(path);
  DatasetManifest m;
  try {
    for (const auto& s : j.at("structures")) {
      m.structures.push_back({s.at("id").get<std::string>(), s.value("material", std::string{})});
    }
    for (const auto& s : j.at("sessions")) {
      Session session;
      session.session_id = s.at("session_id").get<std::string>();
      session.kind = excitation_kind_from_string(s.value("kind", std::string("footstep")));
      session.person_id = s.value("person_id", std::string{});
      session.structure_id = s.at("structure_id").get<std::string>();
      session.protocol = s.value("protocol", std::string("walk"));
      session.start_time_s = s.value("start_time_s", 0.0);
      for (const auto& t : s.at("traces")) {
        session.traces.push_back({t.at("path").get<std::string>(), t.value("sensor_id", std::string{}),
                                  t.value("sensor_position_m", 0.0), t.value("sample_rate_hz", 0.0)});
      }
      if (s.contains("events")) {
        for (const auto& e : s.at("events")) {
          session.events.push_back({e.at("onset_s").get<double>(), e.value("peak_time_s", e.at("onset_s").get<double>()),
                                    e.value("location_m", 0.0), e.value("location_id", std::string{})});
        }
      }
      m.sessions.push_back(std::move(session));
    }
    m.feature_spec = feature_spec_from_json(j.at("feature_spec"));
  } catch (const Json::exception& e) {
    throw MalformedFileError(path, 0, e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  Json j;
  j["structures"] = Json::array();
  for (const auto& s : m.structures) j["structures"].push_back({{"id", s.id}, {"material", s.material}});
  j["sessions"] = Json::array();
  for (const auto& s : m.sessions) {
    Json traces = Json::array();
    for (const auto& t : s.traces) {
      traces.push_back({{"path", t.path.generic_string()},
                        {"sensor_id", t.sensor_id},
                        {"sensor_position_m", t.sensor_position_m},
                        {"sample_rate_hz", t.sample_rate_hz}});
    }
    Json events = Json::array();
    for (const auto& e : s.events) {
      events.push_back({{"onset_s", e.onset_s},
                        {"peak_time_s", e.peak_time_s},
                        {"location_m", e.location_m},
                        {"location_id", e.location_id}});
    }
    j["sessions"].push_back({{"session_id", s.session_id},
                             {"kind", to_string(s.kind)},
                             {"person_id", s.person_id},
                             {"structure_id", s.structure_id},
                             {"protocol", s.protocol},
                             {"start_time_s", s.start_time_s},
                             {"traces", traces},
                             {"events", events}});
  }
  j["feature_spec"] = to_json(m.feature_spec);
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// traces

void save_trace_csv(const VibrationTrace& trace, const fs::path& path) {
  auto out = open_output(path);
  std::string buf = "time_s,amplitude\n";
  buf.reserve(trace.samples.size() * 44);
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    buf += format_double(static_cast<double>(i) / trace.sample_rate_hz);
    buf += ',';
    buf += format_double(trace.samples[i]);
    buf += '\n';
  }
  out << buf;
}

VibrationTrace load_trace_csv(const fs::path& path, const TraceRef& ref) {
  auto in = open_input(path);
  VibrationTrace trace;
  trace.sensor_id = ref.sensor_id;
  trace.sensor_position_m = ref.sensor_position_m;
  std::string line;
  std::size_t lineno = 0;
  double t0 = 0.0, t1 = 0.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (lineno == 1 && !parse_double(cells.front())) continue;  // header
    if (cells.size() != 2) throw MalformedFileError(path, lineno, "expected 2 columns");
    auto t = parse_double(cells[0]);
    auto a = parse_double(cells[1]);
    if (!t || !a) throw MalformedFileError(path, lineno, "unparsable number");
    if (!std::isfinite(*t) || !std::isfinite(*a)) throw NonFiniteSampleError(path, lineno);
    if (trace.samples.empty()) t0 = *t;
    if (trace.samples.size() == 1) t1 = *t;
    trace.samples.push_back(*a);
  }
  if (trace.samples.empty()) throw MalformedFileError(path, lineno, "no samples");
  trace.sample_rate_hz = ref.sample_rate_hz;
  if (!(trace.sample_rate_hz > 0.0)) {
    if (trace.samples.size() < 2 || !(t1 > t0)) throw MalformedFileError(path, lineno, "cannot infer sample rate");
    trace.sample_rate_hz = 1.0 / (t1 - t0);
  }
  trace.validate();
  return trace;
}

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  for (const auto& s : ds.manifest.sessions) {
    std::vector<VibrationTrace> channels;
    for (const auto& ref : s.traces) {
      const auto p = ref.path.is_absolute() ? ref.path : base / ref.path;
      channels.push_back(load_trace_csv(p, ref));
    }
    ds.traces.push_back(std::move(channels));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// features

namespace {

constexpr const char* kLabelColumns[] = {"person_id", "location_id", "structure_id", "session_id",
                                         "sensor_id",  "time_s",      "excitation",   "protocol"};
constexpr std::size_t kLabelCount = std::size(kLabelColumns);

std::optional<std::string> opt_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

void save_features(std::span<const FeatureVector> features, const fs::path& path) {
  std::vector<double> edges;
  if (!features.empty()) {
    edges = features.front().band_edges_hz;
    for (const auto& f : features) {
      if (f.dimension() != features.front().dimension()) {
        throw DataError("feature list mixes dimensions " + std::to_string(features.front().dimension()) +
                        " and " + std::to_string(f.dimension()));
      }
      if (f.band_edges_hz != edges) throw DataError("feature list mixes band definitions");
    }
  }
  auto out = open_output(path);
  std::string buf = "# band_edges_hz:";
  for (std::size_t i = 0; i < edges.size(); ++i) buf += (i ? "," : "") + format_double(edges[i]);
  buf += '\n';
  const std::size_t d = edges.empty() ? 0 : edges.size() - 1;
  for (std::size_t i = 0; i < d; ++i) buf += "band_" + std::to_string(i) + ',';
  for (std::size_t i = 0; i < kLabelCount; ++i) buf += std::string(kLabelColumns[i]) + (i + 1 < kLabelCount ? "," : "\n");
  for (const auto& f : features) {
    for (Eigen::Index i = 0; i < f.values.size(); ++i) buf += format_double(f.values[i]) + ',';
    const auto& l = f.labels;
    buf += l.person_id.value_or("") + ',' + l.location_id.value_or("") + ',' + l.structure_id.value_or("") + ',' +
           l.session_id.value_or("") + ',' + l.sensor_id.value_or("") + ',' +
           (l.time_s ? format_double(*l.time_s) : std::string{}) + ',' + l.excitation.value_or("") + ',' +
           l.protocol.value_or("") + '\n';
  }
  out << buf;
}

std::vector<FeatureVector> load_features(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> edges;
  std::size_t d = 0;
  bool have_header = false;
  std::vector<FeatureVector> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# band_edges_hz:", 0) == 0) {
      auto cells = split_csv(line.substr(16));
      for (const auto& c : cells) {
        if (c.empty()) continue;
        auto v = parse_double(c);
        if (!v) throw MalformedFileError(path, lineno, "bad band edge");
        edges.push_back(*v);
      }
      d = edges.empty() ? 0 : edges.size() - 1;
      continue;
    }
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (!have_header) {
      if (cells.size() != d + kLabelCount) throw MalformedFileError(path, lineno, "header does not match band count");
      have_header = true;
      continue;
    }
    if (cells.size() != d + kLabelCount) {
      throw MalformedFileError(path, lineno, "expected " + std::to_string(d + kLabelCount) + " columns");
    }
    FeatureVector f;
    f.band_edges_hz = edges;
    f.values.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      auto v = parse_double(cells[i]);
      if (!v) throw MalformedFileError(path, lineno, "unparsable band value");
      if (!std::isfinite(*v)) throw NonFiniteSampleError(path, lineno);
      f.values[static_cast<Eigen::Index>(i)] = *v;
    }
    f.labels.person_id = opt_cell(cells[d]);
    f.labels.location_id = opt_cell(cells[d + 1]);
    f.labels.structure_id = opt_cell(cells[d + 2]);
    f.labels.session_id = opt_cell(cells[d + 3]);
    f.labels.sensor_id = opt_cell(cells[d + 4]);
    if (!cells[d + 5].empty()) {
      auto t = parse_double(cells[d + 5]);
      if (!t) throw MalformedFileError(path, lineno, "unparsable time_s");
      f.labels.time_s = *t;
    }
    f.labels.excitation = opt_cell(cells[d + 6]);
    f.labels.protocol = opt_cell(cells[d + 7]);
    out.push_back(std::move(f));
  }
  if (!have_header) throw MalformedFileError(path, lineno, "missing header");
  return out;
}

}  // namespace vibestep

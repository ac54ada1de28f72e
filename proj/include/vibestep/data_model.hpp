#ifndef VIBESTEP_DATA_MODEL_HPP
#define VIBESTEP_DATA_MODEL_HPP

#include "vibestep/core.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vibestep {

// One sensor channel. Amplitudes are arbitrary linear units.
struct VibrationTrace {
  std::vector<double> samples;
  double sample_rate_hz = 0.0;
  std::string sensor_id;
  double sensor_position_m = 0.0;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }

  // Throws DataError when the rate is not positive, the trace is empty, or a
  // sample is not finite.
  void validate() const;
};

struct FootstepEvent {
  std::string trace_ref;
  std::size_t start_index = 0;
  std::size_t peak_index = 0;
  std::size_t end_index = 0;

  void validate(std::size_t trace_length) const;
};

struct FeatureLabels {
  std::optional<std::string> person_id;
  std::optional<std::string> location_id;
  std::optional<std::string> structure_id;
  // Provenance. Not used for grouping but needed to select, order and
  // aggregate footsteps downstream.
  std::optional<std::string> session_id;
  std::optional<std::string> sensor_id;
  std::optional<double> time_s;
  std::optional<std::string> excitation;  // "footstep" or "ball_drop"
  std::optional<std::string> protocol;    // "walk" or "grid"

  bool operator==(const FeatureLabels&) const = default;
};

// Frequency-band amplitudes of one footstep: values[i] is the square root of
// the power between band_edges_hz[i] and band_edges_hz[i + 1].
struct FeatureVector {
  VectorXd values;
  std::vector<double> band_edges_hz;
  FeatureLabels labels;

  Eigen::Index dimension() const { return values.size(); }
  void validate() const;

  bool operator==(const FeatureVector& other) const {
    return values.size() == other.values.size() && values == other.values &&
           band_edges_hz == other.band_edges_hz && labels == other.labels;
  }
};

enum class GroupingMode { ByLocation, ByPerson };

struct FeatureGroup {
  std::string key;
  std::vector<FeatureVector> members;
};

// Features partitioned by excitation location or by person. Groups are kept
// in ascending key order so every downstream reduction is order-stable.
struct GroupedFeatures {
  GroupingMode mode = GroupingMode::ByPerson;
  std::vector<FeatureGroup> groups;

  // Throws DataError when a vector lacks the label the mode requires.
  static GroupedFeatures group(std::span<const FeatureVector> features, GroupingMode mode);

  std::size_t group_count() const { return groups.size(); }
  std::size_t sample_count() const;
  Eigen::Index dimension() const;
  void validate() const;

  // Samples of each group as rows of a matrix.
  template <typename Scalar = double>
  std::vector<Matrix<Scalar>> matrices() const {
    std::vector<Matrix<Scalar>> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
      Matrix<Scalar> m(static_cast<Eigen::Index>(g.members.size()), dimension());
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = g.members[i].values.cast<Scalar>().transpose();
      }
      out.push_back(std::move(m));
    }
    return out;
  }
};

// Parameters of footstep detection and band-amplitude extraction.
struct FeatureSpec {
  double window_s = 0.5;
  std::vector<double> band_edges_hz;
  double detection_threshold_sigma = 4.0;
  double refractory_s = 0.3;
  bool l2_normalize = false;   // applied first
  bool log_amplitude = false;  // natural log with a floor of 1e-9 x the largest band

  std::size_t band_count() const { return band_edges_hz.empty() ? 0 : band_edges_hz.size() - 1; }
  void validate() const;

  // d log-spaced bands from low_hz up to 0.8 * Nyquist.
  static FeatureSpec defaults(double sample_rate_hz, std::size_t bands = 16, double low_hz = 5.0);
};

enum class ExcitationKind { Footstep, BallDrop };

std::string to_string(ExcitationKind kind);
ExcitationKind excitation_kind_from_string(const std::string& text);

struct StructureInfo {
  std::string id;
  std::string material;
};

struct TraceRef {
  std::filesystem::path path;  // relative to the manifest directory unless absolute
  std::string sensor_id;
  double sensor_position_m = 0.0;
  double sample_rate_hz = 0.0;
};

// Simulator ground truth for one impulse within a session.
struct GroundTruthStep {
  double onset_s = 0.0;
  double peak_time_s = 0.0;
  double location_m = 0.0;
  std::string location_id;
};

struct Session {
  std::string session_id;
  ExcitationKind kind = ExcitationKind::Footstep;
  std::string person_id;  // empty for ball drops
  std::string structure_id;
  // "walk" for walking passes, "grid" for repeated impulses on a location grid
  std::string protocol = "walk";
  double start_time_s = 0.0;  // position of the session in the recording schedule
  std::vector<TraceRef> traces;
  std::vector<GroundTruthStep> events;
};

struct DatasetManifest {
  std::vector<StructureInfo> structures;
  std::vector<Session> sessions;
  FeatureSpec feature_spec;

  void validate() const;
};

struct Dataset {
  DatasetManifest manifest;
  // traces[s][c] is channel c of manifest.sessions[s].
  std::vector<std::vector<VibrationTrace>> traces;

  std::size_t trace_count() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Loads the manifest and every referenced trace. Paths are resolved against
// the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Two-column CSV (time_s, amplitude) with a header row.
void save_trace_csv(const VibrationTrace& trace, const std::filesystem::path& path);
VibrationTrace load_trace_csv(const std::filesystem::path& path, const TraceRef& ref);

// Feature CSV: a `# band_edges_hz:` comment line, then a header of band
// columns followed by label columns. Empty label cells mean unknown.
void save_features(std::span<const FeatureVector> features, const std::filesystem::path& path);
std::vector<FeatureVector> load_features(const std::filesystem::path& path);

// Specific data errors. Each names the offending file and, where known, the
// 1-based line number.
class MissingFileError : public DataError {
 public:
  explicit MissingFileError(const std::filesystem::path& path);
  std::filesystem::path path;
};

class MalformedFileError : public DataError {
 public:
  MalformedFileError(const std::filesystem::path& path, std::size_t line, const std::string& detail);
  std::filesystem::path path;
  std::size_t line;
};

class NonFiniteSampleError : public DataError {
 public:
  NonFiniteSampleError(const std::filesystem::path& path, std::size_t line);
  std::filesystem::path path;
  std::size_t line;
};

// %.17g formatting: parses back to the identical double.
std::string format_double(double value);

}  // namespace vibestep

#endif  // VIBESTEP_DATA_MODEL_HPP

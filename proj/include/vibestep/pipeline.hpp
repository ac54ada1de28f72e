#ifndef VIBESTEP_PIPELINE_HPP
#define VIBESTEP_PIPELINE_HPP

#include "vibestep/experiment.hpp"
#include "vibestep/fisher.hpp"
#include "vibestep/online.hpp"
#include "vibestep/variability.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vibestep {

// Whether the transform and the identification stream are per structure or
// pooled over all structures.
enum class TransformScope { PerStructure, Joint };

std::string to_string(TransformScope scope);
TransformScope transform_scope_from_string(const std::string& text);

struct PipelineConfig {
  std::filesystem::path dataset;     // manifest; empty means simulate
  std::filesystem::path output_dir;
  ExperimentConfig experiment;       // simulator, feature spec and seed
  std::optional<Eigen::Index> components;  // offline transform; default persons - 1
  std::optional<double> gamma;
  TransformScope scope = TransformScope::PerStructure;
  AdaptiveOptions online;
  int seed_walks = 0;                // walks of the seed person given up front; 0 = all

  static PipelineConfig defaults();
  void validate() const;
};

// Keeps features whose labels satisfy every given value.
std::vector<FeatureVector> select_features(std::span<const FeatureVector> features,
                                           const std::optional<std::string>& protocol,
                                           const std::optional<std::string>& excitation = std::nullopt,
                                           const std::optional<std::string>& structure = std::nullopt);

// Splits features by structure, or returns one "joint" part.
struct FeaturePart {
  std::string key;
  std::vector<FeatureVector> features;
};
std::vector<FeaturePart> partition(std::span<const FeatureVector> features, TransformScope scope);

// Scores of the first k principal components (rows follow the input rows).
MatrixXd principal_scores(const MatrixXd& samples, Eigen::Index k);

// Variability decomposition of grid impulses, one entry per structure,
// excitation kind and sensor, with features grouped by excitation location.
struct DecompositionEntry {
  std::string structure_id;
  std::string excitation;
  std::string sensor_id;
  std::size_t locations = 0;
  std::size_t samples = 0;
  VariabilityReport report;
};

struct ScatterPoint {
  std::string structure_id;
  std::string sensor_id;
  std::string excitation;
  std::string location_id;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

struct Decomposition {
  std::vector<DecompositionEntry> entries;
  std::vector<ScatterPoint> scatter;  // first two principal components per structure and sensor
};

Decomposition decompose(std::span<const FeatureVector> features);

// Offline transform per part, fit on walk features grouped by person.
struct PartTransform {
  std::string key;
  FisherTransform<double> transform;
};
std::vector<PartTransform> fit_transforms(std::span<const FeatureVector> features, const PipelineConfig& config);

// Within-person variability before and after a transform on walk features
// grouped by person, with 2-D projections (first two principal components
// before, first two transform components after).
struct VariabilityEvaluation {
  std::string key;
  std::size_t persons = 0;
  std::size_t samples = 0;
  double ratio_before = 0.0;  // tr(S_W) / tr(S_T)
  double ratio_after = 0.0;
  double reduction = 0.0;
  MatrixXd projection_before;
  MatrixXd projection_after;
  std::vector<FeatureLabels> labels;
};
VariabilityEvaluation evaluate_transform(const std::string& key, std::span<const FeatureVector> walk_features,
                                         const FisherTransform<double>& transform);

// Seed/stream split of one part: the lowest person id is the known person.
struct OnlineStream {
  std::string seed_person;
  std::vector<std::string> seed_sessions;
  std::vector<VectorXd> seed;
  std::vector<StreamSample> stream;
};
OnlineStream make_stream(std::span<const FeatureVector> walk_features, int seed_walks);

struct PartOutcome {
  std::string key;
  OnlineStream stream;
  AdaptiveRun run;
  VariabilityEvaluation variability;  // offline transform fit on true labels
};

struct OnlineOutcome {
  std::vector<PartOutcome> parts;
  double mean_accuracy = 0.0;
  double mean_reduction = 0.0;
};

// Online identification of every part, plus the offline variability
// evaluation. Throws DataError when a part has fewer than 2 persons.
OnlineOutcome run_online(std::span<const FeatureVector> features, const PipelineConfig& config);

// Features of the configured dataset: loads config.dataset when set,
// otherwise simulates config.experiment.
std::vector<FeatureVector> pipeline_features(const PipelineConfig& config);

}  // namespace vibestep

#endif  // VIBESTEP_PIPELINE_HPP

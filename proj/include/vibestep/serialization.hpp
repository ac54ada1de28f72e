#ifndef VIBESTEP_SERIALIZATION_HPP
#define VIBESTEP_SERIALIZATION_HPP

#include "vibestep/dpmm.hpp"
#include "vibestep/fisher.hpp"
#include "vibestep/online.hpp"
#include "vibestep/pipeline.hpp"
#include "vibestep/variability.hpp"

#include <json.hpp>

#include <filesystem>

namespace vibestep {

using Json = nlohmann::ordered_json;

// Matrices as {"rows": r, "cols": c, "data": [row-major values]}.
Json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);

Json to_json(const FeatureSpec& spec);
FeatureSpec feature_spec_from_json(const Json& j, FeatureSpec base = {});

Json to_json(const VariabilityReport& report);
VariabilityReport variability_report_from_json(const Json& j);

Json to_json(const FisherTransform<double>& t);
FisherTransform<double> fisher_transform_from_json(const Json& j);

Json to_json(const NiwPrior<double>& prior);
NiwPrior<double> niw_prior_from_json(const Json& j);

std::string to_string(AssignmentMode mode);
AssignmentMode assignment_mode_from_string(const std::string& text);

// Checkpoint: configuration, cluster statistics and the assignment log. Loading
// replays the log and checks the stored statistics against the replay.
Json to_json(const DpmmModel<double>& model);
DpmmModel<double> dpmm_model_from_json(const Json& j);

Json to_json(const OnlineRunReport& report);

// Configurations accept partial objects: missing keys keep the values of
// base, unknown keys are configuration errors.
Json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base = ExperimentConfig::defaults());
Json to_json(const AdaptiveOptions& options);
AdaptiveOptions adaptive_options_from_json(const Json& j, AdaptiveOptions base = {});
Json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig base = PipelineConfig::defaults());

Json to_json(const Decomposition& d);  // entries only; the scatter goes to CSV
Json to_json(const VariabilityEvaluation& e);  // summary numbers only

// Pretty-printed with a trailing newline; byte-stable for equal values.
void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

}  // namespace vibestep

#endif  // VIBESTEP_SERIALIZATION_HPP

#include "vibestep/variability.hpp"

#include "vibestep/fisher.hpp"

namespace vibestep {

VariabilityReport decompose_variability(const GroupedFeatures& by_location) {
  if (by_location.mode != GroupingMode::ByLocation) throw ConfigError("decomposition needs features grouped by location");
  const auto groups = by_location.matrices<double>();
  std::vector<std::string> keys;
  for (const auto& g : by_location.groups) keys.push_back(g.key);
  const auto footstep = footstep_covariance<double>(groups, keys);
  const auto structure = structure_covariance<double>(groups);
  return variability_proportion(footstep, structure);
}

FisherTransform<double> fit(const GroupedFeatures& by_person, std::optional<Eigen::Index> components,
                            std::optional<double> gamma) {
  if (by_person.mode != GroupingMode::ByPerson) throw ConfigError("Fisher transform needs features grouped by person");
  const auto groups = by_person.matrices<double>();
  return fit<double>(std::span<const MatrixXd>(groups), components, gamma);
}

MatrixXd transform(const FisherTransform<double>& t, std::span<const FeatureVector> features) {
  MatrixXd rows(static_cast<Eigen::Index>(features.size()), t.input_dimension());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].dimension() != t.input_dimension()) {
      throw DataError("transform expects dimension " + std::to_string(t.input_dimension()) + ", got " +
                      std::to_string(features[i].dimension()));
    }
    rows.row(static_cast<Eigen::Index>(i)) = features[i].values.transpose();
  }
  return t.apply_rows(rows);
}

VectorXd transform(const FisherTransform<double>& t, const FeatureVector& feature) { return t.apply(feature.values); }

}  // namespace vibestep

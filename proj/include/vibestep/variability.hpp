#ifndef VIBESTEP_VARIABILITY_HPP
#define VIBESTEP_VARIABILITY_HPP

#include "vibestep/core.hpp"
#include "vibestep/data_model.hpp"

#include <span>
#include <string>
#include <vector>

namespace vibestep {

// Covariance decomposition of grouped features. Each group is a matrix whose
// rows are samples; all normalisations are population (1/N).
//
//   footstep:  (1/K) sum_k (1/N_k) sum_i (x_i - mu_k)(x_i - mu_k)^T
//   structure: (1/K) sum_k (mu_k - mu)(mu_k - mu)^T,  mu = mean of the mu_k
//
// With mu taken as the unweighted mean of group means, the two traces add up
// to the trace of the pooled population covariance whenever groups are
// balanced.

template <typename Scalar>
Vector<Scalar> group_mean(const Matrix<Scalar>& samples) {
  return samples.colwise().mean().transpose();
}

template <typename Scalar>
Matrix<Scalar> population_covariance(const Matrix<Scalar>& samples) {
  const Matrix<Scalar> centered = samples.rowwise() - samples.colwise().mean();
  return (centered.transpose() * centered) / static_cast<Scalar>(samples.rows());
}

template <typename Scalar>
Matrix<Scalar> footstep_covariance(std::span<const Matrix<Scalar>> groups, std::span<const std::string> keys = {}) {
  if (groups.empty()) throw DataError("footstep covariance needs at least one group");
  const auto d = groups.front().cols();
  Matrix<Scalar> sigma = Matrix<Scalar>::Zero(d, d);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].rows() < 2) {
      throw DataError("group " + (k < keys.size() ? keys[k] : std::to_string(k)) +
                      " has fewer than 2 samples");
    }
    if (groups[k].cols() != d) throw DataError("groups disagree on feature dimension");
    sigma += population_covariance<Scalar>(groups[k]);
  }
  sigma /= static_cast<Scalar>(groups.size());
  return Scalar(0.5) * (sigma + sigma.transpose());
}

template <typename Scalar>
Vector<Scalar> mean_of_group_means(std::span<const Matrix<Scalar>> groups) {
  Vector<Scalar> mu = Vector<Scalar>::Zero(groups.front().cols());
  for (const auto& g : groups) mu += group_mean<Scalar>(g);
  return mu / static_cast<Scalar>(groups.size());
}

template <typename Scalar>
Matrix<Scalar> structure_covariance(std::span<const Matrix<Scalar>> groups) {
  if (groups.size() < 2) throw DataError("structure covariance needs at least 2 groups");
  const auto d = groups.front().cols();
  const Vector<Scalar> mu = mean_of_group_means<Scalar>(groups);
  Matrix<Scalar> sigma = Matrix<Scalar>::Zero(d, d);
  for (const auto& g : groups) {
    if (g.rows() < 1) throw DataError("structure covariance got an empty group");
    if (g.cols() != d) throw DataError("groups disagree on feature dimension");
    const Vector<Scalar> delta = group_mean<Scalar>(g) - mu;
    sigma.noalias() += delta * delta.transpose();
  }
  sigma /= static_cast<Scalar>(groups.size());
  return Scalar(0.5) * (sigma + sigma.transpose());
}

struct VariabilityReport {
  MatrixXd sigma_footstep;
  MatrixXd sigma_structure;
  double footstep_trace = 0.0;
  double structure_trace = 0.0;
  double footstep_share = 0.0;
  double structure_share = 0.0;
};

template <typename DerivedF, typename DerivedS>
VariabilityReport variability_proportion(const Eigen::MatrixBase<DerivedF>& sigma_footstep,
                                         const Eigen::MatrixBase<DerivedS>& sigma_structure) {
  if (sigma_footstep.rows() != sigma_structure.rows() || sigma_footstep.cols() != sigma_structure.cols()) {
    throw DataError("covariances come from different feature spaces");
  }
  VariabilityReport r;
  r.sigma_footstep = sigma_footstep.template cast<double>();
  r.sigma_structure = sigma_structure.template cast<double>();
  r.footstep_trace = r.sigma_footstep.trace();
  r.structure_trace = r.sigma_structure.trace();
  const double total = r.footstep_trace + r.structure_trace;
  if (!(total > 0.0)) throw NumericalError("both variability traces are zero; dataset is degenerate");
  r.structure_share = r.structure_trace / total;
  r.footstep_share = 1.0 - r.structure_share;
  return r;
}

// Both covariances plus shares for features grouped by location.
VariabilityReport decompose_variability(const GroupedFeatures& by_location);

// Within-person and total scatter (sums, not averages) of grouped samples.
template <typename Scalar>
struct ScatterTraces {
  Scalar within = 0;
  Scalar total = 0;
};

template <typename Scalar>
ScatterTraces<Scalar> scatter_traces(std::span<const Matrix<Scalar>> groups) {
  ScatterTraces<Scalar> t;
  Eigen::Index n = 0;
  Vector<Scalar> sum = Vector<Scalar>::Zero(groups.empty() ? 0 : groups.front().cols());
  for (const auto& g : groups) {
    const Matrix<Scalar> centered = g.rowwise() - g.colwise().mean();
    t.within += centered.squaredNorm();
    sum += g.colwise().sum().transpose();
    n += g.rows();
  }
  const Vector<Scalar> m = sum / static_cast<Scalar>(n);
  for (const auto& g : groups) t.total += (g.rowwise() - m.transpose()).squaredNorm();
  return t;
}

// 1 - [tr(S_W)/tr(S_T)]_after / [tr(S_W)/tr(S_T)]_before. Scale invariant, so
// a transform that merely rescales features scores zero.
template <typename Scalar>
Scalar within_person_variability_ratio(std::span<const Matrix<Scalar>> before, std::span<const Matrix<Scalar>> after) {
  if (before.size() != after.size()) throw DataError("before and after have different person counts");
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].rows() != after[i].rows()) throw DataError("before and after have different sample counts");
  }
  const auto b = scatter_traces<Scalar>(before);
  const auto a = scatter_traces<Scalar>(after);
  if (!(b.total > 0) || !(a.total > 0)) throw NumericalError("total scatter is zero");
  const Scalar ratio_before = b.within / b.total;
  if (!(ratio_before > 0)) throw NumericalError("within-person scatter is zero before the transform");
  return Scalar(1) - (a.within / a.total) / ratio_before;
}

}  // namespace vibestep

#endif  // VIBESTEP_VARIABILITY_HPP

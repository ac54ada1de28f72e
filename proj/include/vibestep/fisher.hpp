#ifndef VIBESTEP_FISHER_HPP
#define VIBESTEP_FISHER_HPP

#include "vibestep/core.hpp"
#include "vibestep/data_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace vibestep {

// Fit-time intermediates of the discriminant: between-person scatter
// S_B = sum_i N_i (mu_i - m)(mu_i - m)^T and within-person scatter
// S_W = sum_i sum_n (x_n - mu_i)(x_n - mu_i)^T.
template <typename Scalar>
struct ScatterMatrices {
  Matrix<Scalar> between;
  Matrix<Scalar> within;
  Vector<Scalar> global_mean;
  std::vector<Vector<Scalar>> class_means;
  std::vector<Eigen::Index> counts;

  Eigen::Index dimension() const { return within.rows(); }
  std::size_t class_count() const { return counts.size(); }
};

template <typename Scalar>
ScatterMatrices<Scalar> scatter_matrices(std::span<const Matrix<Scalar>> groups) {
  if (groups.empty()) throw DataError("scatter matrices need at least one class");
  const auto d = groups.front().cols();
  ScatterMatrices<Scalar> s;
  s.between = Matrix<Scalar>::Zero(d, d);
  s.within = Matrix<Scalar>::Zero(d, d);
  s.global_mean = Vector<Scalar>::Zero(d);
  Eigen::Index n = 0;
  for (const auto& g : groups) {
    if (g.cols() != d) throw DataError("classes disagree on feature dimension");
    if (g.rows() < 1) throw DataError("empty class");
    s.global_mean += g.colwise().sum().transpose();
    n += g.rows();
  }
  s.global_mean /= static_cast<Scalar>(n);
  for (const auto& g : groups) {
    const Vector<Scalar> mu = g.colwise().mean().transpose();
    const Matrix<Scalar> centered = g.rowwise() - mu.transpose();
    s.within.noalias() += centered.transpose() * centered;
    const Vector<Scalar> delta = mu - s.global_mean;
    s.between.noalias() += static_cast<Scalar>(g.rows()) * delta * delta.transpose();
    s.class_means.push_back(mu);
    s.counts.push_back(g.rows());
  }
  s.within = Scalar(0.5) * (s.within + s.within.transpose());
  s.between = Scalar(0.5) * (s.between + s.between.transpose());
  return s;
}

// Learned linear map x -> w^T x. Columns of w are generalized eigenvectors of
// (S_B, S_W + gamma I), normalised so that w^T (S_W + gamma I) w = I and signed
// so that their first non-negligible component is positive.
template <typename Scalar>
struct FisherTransform {
  Matrix<Scalar> w;            // d x m
  Vector<Scalar> eigenvalues;  // m, descending
  Scalar gamma = 0;
  int class_count = 0;
  // Set when S_B vanishes: every direction is equally (un)discriminative.
  bool degenerate = false;

  Eigen::Index input_dimension() const { return w.rows(); }
  Eigen::Index output_dimension() const { return w.cols(); }

  template <typename Derived>
  Vector<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != w.rows()) {
      throw DataError("transform expects dimension " + std::to_string(w.rows()) + ", got " + std::to_string(x.size()));
    }
    return w.transpose() * x.template cast<Scalar>();
  }

  // Rows of samples are transformed independently.
  template <typename Derived>
  Matrix<Scalar> apply_rows(const Eigen::MatrixBase<Derived>& samples) const {
    if (samples.cols() != w.rows()) {
      throw DataError("transform expects dimension " + std::to_string(w.rows()) + ", got " +
                      std::to_string(samples.cols()));
    }
    return samples.template cast<Scalar>() * w;
  }
};

template <typename Scalar>
Scalar default_ridge(const Matrix<Scalar>& within) {
  return Scalar(1e-6) * within.trace() / static_cast<Scalar>(within.rows());
}

// Makes the first component whose magnitude exceeds a tiny fraction of the
// column's largest entry positive.
template <typename Derived>
void canonical_sign(Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar biggest = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > Scalar(1e-10) * biggest) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

// Top components of the generalized eigenproblem S_B v = lambda (S_W + gamma I) v,
// solved by Cholesky reduction to a symmetric standard problem. Allows any
// component count up to d; fit() adds the C - 1 limit.
template <typename Scalar>
FisherTransform<Scalar> fit_scatter(const ScatterMatrices<Scalar>& s, Eigen::Index components,
                                    std::optional<Scalar> gamma = std::nullopt) {
  const auto d = s.dimension();
  if (components < 1 || components > d) {
    throw ConfigError("component count " + std::to_string(components) + " outside [1, " + std::to_string(d) + "]");
  }
  const Scalar ridge = gamma ? *gamma : default_ridge<Scalar>(s.within);
  if (ridge < 0) throw ConfigError("ridge must be non-negative");

  const Matrix<Scalar> b = s.within + ridge * Matrix<Scalar>::Identity(d, d);
  Eigen::LLT<Matrix<Scalar>> llt(b);
  if (llt.info() != Eigen::Success) throw NumericalError("within-person scatter is singular; use a positive ridge");
  const Matrix<Scalar> l = llt.matrixL();
  const auto diag = l.diagonal().cwiseAbs();
  if (!(diag.minCoeff() > std::sqrt(std::numeric_limits<Scalar>::epsilon()) * Scalar(1e-4) * diag.maxCoeff())) {
    throw NumericalError("within-person scatter is singular; use a positive ridge");
  }

  // C = L^{-1} S_B L^{-T}
  Matrix<Scalar> c = l.template triangularView<Eigen::Lower>().solve(s.between);
  c = l.template triangularView<Eigen::Lower>().solve(c.transpose()).eval();
  c = Scalar(0.5) * (c + c.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(c);
  if (eig.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");

  FisherTransform<Scalar> t;
  t.gamma = ridge;
  t.class_count = static_cast<int>(s.class_count());
  t.w.resize(d, components);
  t.eigenvalues.resize(components);
  const Matrix<Scalar> lt = l.transpose();
  for (Eigen::Index j = 0; j < components; ++j) {
    const Eigen::Index src = d - 1 - j;  // ascending -> descending
    Vector<Scalar> v = lt.template triangularView<Eigen::Upper>().solve(eig.eigenvectors().col(src));
    canonical_sign(v);
    t.w.col(j) = v;
    t.eigenvalues(j) = std::max(Scalar(0), eig.eigenvalues()(src));
  }
  const Scalar top = eig.eigenvalues().cwiseAbs().maxCoeff();
  t.degenerate = !(top > std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), s.between.norm()));
  return t;
}

// Fisher discriminant over persons. components defaults to C - 1 (capped at d).
template <typename Scalar>
FisherTransform<Scalar> fit(std::span<const Matrix<Scalar>> groups, std::optional<Eigen::Index> components = std::nullopt,
                            std::optional<Scalar> gamma = std::nullopt) {
  const auto classes = static_cast<Eigen::Index>(groups.size());
  if (classes < 2) throw ConfigError("Fisher transform needs at least 2 persons");
  const auto s = scatter_matrices<Scalar>(groups);
  const auto m = components.value_or(std::min(classes - 1, s.dimension()));
  if (m > classes - 1) {
    throw ConfigError("component count " + std::to_string(m) + " exceeds persons - 1 = " + std::to_string(classes - 1));
  }
  return fit_scatter<Scalar>(s, m, gamma);
}

FisherTransform<double> fit(const GroupedFeatures& by_person, std::optional<Eigen::Index> components = std::nullopt,
                            std::optional<double> gamma = std::nullopt);

template <typename Derived, typename Scalar>
Scalar rayleigh_quotient(const Eigen::MatrixBase<Derived>& v, const ScatterMatrices<Scalar>& s, Scalar gamma) {
  const Vector<Scalar> x = v.template cast<Scalar>();
  const Scalar num = x.dot(s.between * x);
  const Scalar den = x.dot(s.within * x) + gamma * x.squaredNorm();
  return num / den;
}

// J(w_1) on the given classes.
template <typename Scalar>
Scalar objective(const FisherTransform<Scalar>& t, std::span<const Matrix<Scalar>> groups) {
  const auto s = scatter_matrices<Scalar>(groups);
  if (s.dimension() != t.input_dimension()) throw DataError("objective: dimension mismatch");
  return rayleigh_quotient(t.w.col(0), s, t.gamma);
}

// Applies the transform to each feature vector; rows of the result follow the
// input order.
MatrixXd transform(const FisherTransform<double>& t, std::span<const FeatureVector> features);
VectorXd transform(const FisherTransform<double>& t, const FeatureVector& feature);

}  // namespace vibestep

#endif  // VIBESTEP_FISHER_HPP

#ifndef VIBESTEP_DPMM_HPP
#define VIBESTEP_DPMM_HPP

#include "vibestep/core.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace vibestep {

// How from_seed turns the median pairwise squared distance r of the seed into
// Psi0. PairwiseMedian uses r itself. PerCoordinate uses r / (2 d), the
// per-coordinate variance of an isotropic cloud with that median, so that the
// prior mean covariance Psi0 / (nu0 - d - 1) matches the seed's spread.
enum class PriorSpread { PairwiseMedian, PerCoordinate };

// Normal-Inverse-Wishart base measure over (mean, covariance) of a cluster.
template <typename Scalar>
struct NiwPrior {
  Vector<Scalar> mean;    // m0
  Scalar kappa = 1;       // kappa0 > 0
  Scalar dof = 0;         // nu0 > dim - 1
  Matrix<Scalar> scatter; // Psi0, SPD

  Eigen::Index dimension() const { return mean.size(); }

  void validate() const {
    const auto d = mean.size();
    if (d < 1) throw ConfigError("NIW prior needs a positive dimension");
    if (scatter.rows() != d || scatter.cols() != d) throw ConfigError("NIW prior scatter has the wrong shape");
    if (!(kappa > 0)) throw ConfigError("NIW kappa0 must be positive");
    if (!(dof > static_cast<Scalar>(d) - 1)) throw ConfigError("NIW nu0 must exceed dimension - 1");
    Eigen::LLT<Matrix<Scalar>> llt(scatter);
    if (llt.info() != Eigen::Success) throw ConfigError("NIW prior scatter must be SPD");
  }

  // Weakly informative defaults from seed data (rows are samples): m0 = seed
  // mean, Psi0 = I * median pairwise squared distance, kappa0 = 1, nu0 = d + 2.
  // Without seed data, m0 = 0 and Psi0 = I.
  static NiwPrior from_seed(const Matrix<Scalar>& seed, Eigen::Index dimension,
                            PriorSpread spread_rule = PriorSpread::PairwiseMedian) {
    NiwPrior p;
    p.kappa = 1;
    p.dof = static_cast<Scalar>(dimension) + 2;
    p.mean = Vector<Scalar>::Zero(dimension);
    Scalar spread = 1;
    if (seed.rows() > 0) {
      if (seed.cols() != dimension) throw DataError("seed data dimension mismatch");
      p.mean = seed.colwise().mean().transpose();
      if (seed.rows() > 1) {
        std::vector<Scalar> d2;
        d2.reserve(static_cast<std::size_t>(seed.rows() * (seed.rows() - 1) / 2));
        for (Eigen::Index i = 0; i < seed.rows(); ++i) {
          for (Eigen::Index j = i + 1; j < seed.rows(); ++j) d2.push_back((seed.row(i) - seed.row(j)).squaredNorm());
        }
        auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
        std::nth_element(d2.begin(), mid, d2.end());
        if (*mid > 0) spread = *mid;
        if (spread_rule == PriorSpread::PerCoordinate) spread /= Scalar(2) * static_cast<Scalar>(dimension);
      }
    }
    p.scatter = spread * Matrix<Scalar>::Identity(dimension, dimension);
    return p;
  }
};

// Multivariate Student-t with location, scale matrix and degrees of freedom.
template <typename Scalar>
class StudentT {
 public:
  StudentT() = default;
  StudentT(Vector<Scalar> location, const Matrix<Scalar>& scale, Scalar dof) : location_(std::move(location)), dof_(dof) {
    llt_.compute(scale);
    if (llt_.info() != Eigen::Success || !(dof > 0)) {
      throw NumericalError("posterior predictive scale is not SPD");
    }
    const auto d = static_cast<Scalar>(location_.size());
    const Scalar log_det = Scalar(2) * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    if (!std::isfinite(log_det)) throw NumericalError("posterior predictive scale is not SPD");
    log_norm_ = std::lgamma((dof + d) / 2) - std::lgamma(dof / 2) -
                d / 2 * std::log(dof * std::numbers::pi_v<Scalar>) - log_det / 2;
  }

  template <typename Derived>
  Scalar log_density(const Eigen::MatrixBase<Derived>& x) const {
    const Vector<Scalar> z = llt_.matrixL().solve(x.template cast<Scalar>() - location_);
    const auto d = static_cast<Scalar>(location_.size());
    return log_norm_ - (dof_ + d) / 2 * std::log1p(z.squaredNorm() / dof_);
  }

  const Vector<Scalar>& location() const { return location_; }
  Scalar dof() const { return dof_; }
  Matrix<Scalar> scale() const { return llt_.reconstructedMatrix(); }

 private:
  Vector<Scalar> location_;
  Eigen::LLT<Matrix<Scalar>> llt_;
  Scalar dof_ = 1;
  Scalar log_norm_ = 0;
};

// Posterior predictive of the NIW model after n observations with sample
// mean xbar and centred scatter sum (x - xbar)(x - xbar)^T. n = 0 gives the
// prior predictive.
template <typename Scalar>
StudentT<Scalar> posterior_predictive_centered(const NiwPrior<Scalar>& prior, Eigen::Index n,
                                               const Vector<Scalar>& xbar, const Matrix<Scalar>& scatter) {
  const auto d = prior.dimension();
  const Scalar nn = static_cast<Scalar>(n);
  const Scalar kappa_n = prior.kappa + nn;
  const Scalar nu_n = prior.dof + nn;
  Vector<Scalar> mean_n = prior.mean;
  Matrix<Scalar> psi_n = prior.scatter;
  if (n > 0) {
    mean_n = (prior.kappa * prior.mean + nn * xbar) / kappa_n;
    const Vector<Scalar> shift = xbar - prior.mean;
    psi_n += scatter + (prior.kappa * nn / kappa_n) * shift * shift.transpose();
    psi_n = Scalar(0.5) * (psi_n + psi_n.transpose());
  }
  const Scalar dof = nu_n - static_cast<Scalar>(d) + 1;
  return StudentT<Scalar>(std::move(mean_n), psi_n * ((kappa_n + 1) / (kappa_n * dof)), dof);
}

// Same predictive from the raw sum and sum of outer products.
template <typename Scalar>
StudentT<Scalar> posterior_predictive(const NiwPrior<Scalar>& prior, Eigen::Index n, const Vector<Scalar>& sum,
                                      const Matrix<Scalar>& outer) {
  if (n == 0) return posterior_predictive_centered<Scalar>(prior, 0, prior.mean, prior.scatter);
  const Scalar nn = static_cast<Scalar>(n);
  const Vector<Scalar> xbar = sum / nn;
  return posterior_predictive_centered<Scalar>(prior, n, xbar, outer - nn * xbar * xbar.transpose());
}

enum class AssignmentMode { PerFootstep, PerTraceMajority };

template <typename Scalar>
struct DpmmConfig {
  Scalar alpha = 1;
  NiwPrior<Scalar> prior;
  AssignmentMode mode = AssignmentMode::PerFootstep;

  void validate() const {
    if (!(alpha > 0)) throw ConfigError("DP concentration alpha must be positive");
    prior.validate();
  }
};

inline constexpr int kNewCluster = -1;

template <typename Scalar>
struct IdentityDecision {
  int assigned = kNewCluster;          // cluster id or kNewCluster
  std::vector<int> candidates;         // existing cluster ids, then kNewCluster
  Vector<Scalar> log_posterior;        // aligned with candidates, normalised
  bool is_newcomer = true;
  std::uint64_t model_version = 0;
};

template <typename Scalar>
struct ClusterStats {
  int id = 0;
  Eigen::Index count = 0;
  Vector<Scalar> sum;
  Matrix<Scalar> outer;
  // running mean and centred scatter (Welford); the predictive is computed
  // from these because outer - n * xbar * xbar^T cancels badly when the
  // spread is small next to the mean
  Vector<Scalar> mean;
  Matrix<Scalar> scatter;
};

template <typename Scalar>
struct AssignmentRecord {
  Vector<Scalar> x;
  int cluster = 0;
};

// Open-set Dirichlet-process Gaussian mixture updated one observation at a
// time. Cluster weights follow the Chinese restaurant process (n_c for an
// existing cluster, alpha for a new one) and likelihoods are NIW posterior
// predictives. The assignment log fully determines the state.
//
// Single writer: predict() is const and may run concurrently with other
// predicts, never with update() or assign().
template <typename Scalar>
class DpmmModel {
 public:
  explicit DpmmModel(DpmmConfig<Scalar> config) : config_(std::move(config)) {
    config_.validate();
    const auto d = dimension();
    prior_predictive_ =
        posterior_predictive_centered<Scalar>(config_.prior, 0, Vector<Scalar>::Zero(d), Matrix<Scalar>::Zero(d, d));
  }

  Eigen::Index dimension() const { return config_.prior.dimension(); }
  const DpmmConfig<Scalar>& config() const { return config_; }
  const std::vector<ClusterStats<Scalar>>& clusters() const { return clusters_; }
  Eigen::Index total_count() const { return total_; }
  std::uint64_t version() const { return version_; }
  const std::vector<AssignmentRecord<Scalar>>& log() const { return log_; }
  int next_cluster_id() const { return next_id_; }

  template <typename Derived>
  IdentityDecision<Scalar> predict(const Eigen::MatrixBase<Derived>& x) const {
    check_input(x);
    IdentityDecision<Scalar> dec;
    dec.model_version = version_;
    const auto k = clusters_.size();
    dec.log_posterior.resize(static_cast<Eigen::Index>(k + 1));
    for (std::size_t c = 0; c < k; ++c) {
      dec.candidates.push_back(clusters_[c].id);
      dec.log_posterior(static_cast<Eigen::Index>(c)) =
          std::log(static_cast<Scalar>(clusters_[c].count)) + predictive_[c].log_density(x);
    }
    dec.candidates.push_back(kNewCluster);
    dec.log_posterior(static_cast<Eigen::Index>(k)) = std::log(config_.alpha) + prior_predictive_.log_density(x);

    const Scalar top = dec.log_posterior.maxCoeff();
    const Scalar lse = top + std::log((dec.log_posterior.array() - top).exp().sum());
    dec.log_posterior.array() -= lse;
    if (!dec.log_posterior.allFinite()) throw NumericalError("non-finite log posterior");

    // first maximum wins, so ties go to the lowest cluster id and NEW loses ties
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < dec.log_posterior.size(); ++i) {
      if (dec.log_posterior(i) > dec.log_posterior(best)) best = i;
    }
    dec.assigned = dec.candidates[static_cast<std::size_t>(best)];
    dec.is_newcomer = dec.assigned == kNewCluster;
    return dec;
  }

  // Applies a decision made on the current state.
  template <typename Derived>
  int update(const Eigen::MatrixBase<Derived>& x, const IdentityDecision<Scalar>& decision) {
    if (decision.model_version != version_) throw ConfigError("stale decision: model changed since predict");
    return assign(x, decision.assigned);
  }

  // Adds x to the given cluster, or to a fresh one for kNewCluster. Returns the
  // cluster id used.
  template <typename Derived>
  int assign(const Eigen::MatrixBase<Derived>& x, int cluster) {
    check_input(x);
    const Vector<Scalar> v = x.template cast<Scalar>();
    std::size_t idx = clusters_.size();
    if (cluster == kNewCluster || cluster == next_id_) {
      ClusterStats<Scalar> c;
      c.id = next_id_++;
      c.sum = Vector<Scalar>::Zero(dimension());
      c.outer = Matrix<Scalar>::Zero(dimension(), dimension());
      c.mean = Vector<Scalar>::Zero(dimension());
      c.scatter = Matrix<Scalar>::Zero(dimension(), dimension());
      clusters_.push_back(std::move(c));
      predictive_.emplace_back();
    } else {
      idx = index_of(cluster);
    }
    auto& c = clusters_[idx];
    c.count += 1;
    c.sum += v;
    c.outer.noalias() += v * v.transpose();
    const Vector<Scalar> before = v - c.mean;
    c.mean += before / static_cast<Scalar>(c.count);
    c.scatter.noalias() += before * (v - c.mean).transpose();
    c.scatter = Scalar(0.5) * (c.scatter + c.scatter.transpose());
    predictive_[idx] = posterior_predictive_centered<Scalar>(config_.prior, c.count, c.mean, c.scatter);
    total_ += 1;
    ++version_;
    log_.push_back({v, c.id});
    return c.id;
  }

  template <typename Derived>
  Scalar log_predictive(int cluster, const Eigen::MatrixBase<Derived>& x) const {
    check_input(x);
    if (cluster == kNewCluster) return prior_predictive_.log_density(x);
    return predictive_[index_of(cluster)].log_density(x);
  }

  const StudentT<Scalar>& prior_predictive() const { return prior_predictive_; }

  // Rebuilds a model from its configuration and assignment log.
  static DpmmModel replay(DpmmConfig<Scalar> config, const std::vector<AssignmentRecord<Scalar>>& log) {
    DpmmModel m(std::move(config));
    for (const auto& r : log) m.assign(r.x, r.cluster);
    return m;
  }

 private:
  template <typename Derived>
  void check_input(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != dimension()) {
      throw DataError("DPMM expects dimension " + std::to_string(dimension()) + ", got " + std::to_string(x.size()));
    }
    if (!x.allFinite()) throw DataError("DPMM input is not finite");
  }

  std::size_t index_of(int cluster) const {
    for (std::size_t i = 0; i < clusters_.size(); ++i) {
      if (clusters_[i].id == cluster) return i;
    }
    throw ConfigError("unknown cluster id " + std::to_string(cluster));
  }

  DpmmConfig<Scalar> config_;
  std::vector<ClusterStats<Scalar>> clusters_;
  std::vector<StudentT<Scalar>> predictive_;
  StudentT<Scalar> prior_predictive_;
  std::vector<AssignmentRecord<Scalar>> log_;
  Eigen::Index total_ = 0;
  std::uint64_t version_ = 0;
  int next_id_ = 0;
};

}  // namespace vibestep

#endif  // VIBESTEP_DPMM_HPP

#ifndef VIBESTEP_TESTS_GENERATORS_HPP
#define VIBESTEP_TESTS_GENERATORS_HPP

// Small seeded generators for property tests.

#include "vibestep/core.hpp"
#include "vibestep/data_model.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gen {

using vibestep::MatrixXd;
using vibestep::VectorXd;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(0.0, sd);
    }
    return m;
  }

  VectorXd gaussian_vector(Eigen::Index n, double sd = 1.0) { return gaussian(n, 1, sd).col(0); }

  // Well conditioned symmetric positive definite matrix.
  MatrixXd spd(Eigen::Index d) {
    const MatrixXd a = gaussian(d, d);
    return a * a.transpose() + static_cast<double>(d) * MatrixXd::Identity(d, d);
  }

  // K groups in d dimensions with N_k rows each, means spread by offset.
  std::vector<MatrixXd> groups(int k, Eigen::Index d, int n_min, int n_max, double offset = 3.0) {
    std::vector<MatrixXd> out;
    for (int i = 0; i < k; ++i) {
      const VectorXd mu = gaussian_vector(d, offset);
      MatrixXd g = gaussian(integer(n_min, n_max), d);
      g.rowwise() += mu.transpose();
      out.push_back(g);
    }
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<double> log_edges(std::size_t bands, double lo, double hi) {
  std::vector<double> e(bands + 1);
  for (std::size_t i = 0; i <= bands; ++i) e[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(bands));
  return e;
}

// Labelled feature vectors drawn from per-group Gaussians.
inline std::vector<vibestep::FeatureVector> labelled(const std::vector<MatrixXd>& groups, bool by_person) {
  std::vector<vibestep::FeatureVector> out;
  const auto d = groups.empty() ? 0 : groups.front().cols();
  const auto edges = log_edges(static_cast<std::size_t>(d), 10.0, 500.0);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    for (Eigen::Index i = 0; i < groups[k].rows(); ++i) {
      vibestep::FeatureVector f;
      f.values = groups[k].row(i).transpose();
      f.band_edges_hz = edges;
      const std::string key = (by_person ? "p" : "loc") + std::to_string(k + 10);
      if (by_person) {
        f.labels.person_id = key;
      } else {
        f.labels.location_id = key;
      }
      out.push_back(f);
    }
  }
  return out;
}

inline double relative_error(const MatrixXd& a, const MatrixXd& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

}  // namespace gen

#endif  // VIBESTEP_TESTS_GENERATORS_HPP

#include "generators.hpp"

#include "vibestep/variability.hpp"

#include <doctest.h>

using namespace vibestep;

namespace {

// Element-by-element double loops, written independently of the library.
MatrixXd brute_footstep(const std::vector<MatrixXd>& groups) {
  const auto d = groups.front().cols();
  MatrixXd out = MatrixXd::Zero(d, d);
  for (const auto& g : groups) {
    std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index a = 0; a < d; ++a) mu[std::size_t(a)] += g(i, a);
    }
    for (auto& m : mu) m /= double(g.rows());
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < g.rows(); ++i) acc += (g(i, a) - mu[std::size_t(a)]) * (g(i, b) - mu[std::size_t(b)]);
        out(a, b) += acc / double(g.rows());
      }
    }
  }
  return out / double(groups.size());
}

MatrixXd brute_structure(const std::vector<MatrixXd>& groups) {
  const auto d = groups.front().cols();
  const std::size_t k = groups.size();
  std::vector<std::vector<double>> mus(k, std::vector<double>(std::size_t(d), 0.0));
  std::vector<double> mu(std::size_t(d), 0.0);
  for (std::size_t g = 0; g < k; ++g) {
    for (Eigen::Index i = 0; i < groups[g].rows(); ++i) {
      for (Eigen::Index a = 0; a < d; ++a) mus[g][std::size_t(a)] += groups[g](i, a) / double(groups[g].rows());
    }
    for (Eigen::Index a = 0; a < d; ++a) mu[std::size_t(a)] += mus[g][std::size_t(a)] / double(k);
  }
  MatrixXd out = MatrixXd::Zero(d, d);
  for (std::size_t g = 0; g < k; ++g) {
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) {
        out(a, b) += (mus[g][std::size_t(a)] - mu[std::size_t(a)]) * (mus[g][std::size_t(b)] - mu[std::size_t(b)]) / double(k);
      }
    }
  }
  return out;
}

MatrixXd stack(const std::vector<MatrixXd>& groups) {
  Eigen::Index n = 0;
  for (const auto& g : groups) n += g.rows();
  MatrixXd all(n, groups.front().cols());
  Eigen::Index r = 0;
  for (const auto& g : groups) {
    all.middleRows(r, g.rows()) = g;
    r += g.rows();
  }
  return all;
}

}  // namespace

TEST_SUITE("variability") {
  TEST_CASE("covariances match brute-force loops") {
    gen::Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
      const auto d = rng.integer(1, 8);
      const auto groups = rng.groups(rng.integer(2, 10), d, 2, 20);
      const std::span<const MatrixXd> view(groups);
      CHECK(gen::relative_error(footstep_covariance<double>(view), brute_footstep(groups)) < 1e-12);
      CHECK(gen::relative_error(structure_covariance<double>(view), brute_structure(groups)) < 1e-12);
    }
  }

  TEST_CASE("balanced groups: the traces add up to the pooled variance") {
    gen::Rng rng(52);
    for (int trial = 0; trial < 30; ++trial) {
      const auto d = rng.integer(1, 8);
      const int n = rng.integer(2, 20);
      const auto groups = rng.groups(rng.integer(2, 10), d, n, n);
      const std::span<const MatrixXd> view(groups);
      const double total = population_covariance<double>(stack(groups)).trace();
      const double sum = footstep_covariance<double>(view).trace() + structure_covariance<double>(view).trace();
      CHECK(std::abs(sum - total) <= 1e-9 * total);
    }
  }

  TEST_CASE("covariances are symmetric positive semidefinite") {
    gen::Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
      const auto groups = rng.groups(rng.integer(2, 6), rng.integer(2, 6), 2, 10);
      const std::span<const MatrixXd> view(groups);
      for (const MatrixXd& s : {footstep_covariance<double>(view), structure_covariance<double>(view)}) {
        CHECK((s - s.transpose()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, s.norm()));
      }
    }
  }

  TEST_CASE("shifting every sample leaves both covariances unchanged") {
    gen::Rng rng(54);
    auto groups = rng.groups(4, 5, 3, 8);
    const std::span<const MatrixXd> view(groups);
    const MatrixXd f = footstep_covariance<double>(view);
    const MatrixXd s = structure_covariance<double>(view);
    const VectorXd shift = rng.gaussian_vector(5, 10.0);
    for (auto& g : groups) g.rowwise() += shift.transpose();
    CHECK(gen::relative_error(footstep_covariance<double>(view), f) < 1e-10);
    CHECK(gen::relative_error(structure_covariance<double>(view), s) < 1e-10);
  }

  TEST_CASE("identical group means give zero structure covariance") {
    gen::Rng rng(55);
    auto groups = rng.groups(3, 4, 5, 5);
    for (auto& g : groups) g.rowwise() -= g.colwise().mean();
    const std::span<const MatrixXd> view(groups);
    CHECK(structure_covariance<double>(view).norm() < 1e-12);
    const auto r = variability_proportion(footstep_covariance<double>(view), structure_covariance<double>(view));
    CHECK(r.structure_share == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.footstep_share == doctest::Approx(1.0));
  }

  TEST_CASE("shares are in [0, 1] and add up to one") {
    gen::Rng rng(56);
    for (int trial = 0; trial < 20; ++trial) {
      const auto groups = rng.groups(rng.integer(2, 8), rng.integer(1, 6), 2, 12, rng.uniform(0.0, 5.0));
      const std::span<const MatrixXd> view(groups);
      const auto r = variability_proportion(footstep_covariance<double>(view), structure_covariance<double>(view));
      CHECK(r.footstep_share >= 0.0);
      CHECK(r.structure_share >= 0.0);
      CHECK(r.footstep_share + r.structure_share == doctest::Approx(1.0).epsilon(1e-15));
    }
  }

  TEST_CASE("error conditions") {
    gen::Rng rng(57);
    std::vector<MatrixXd> one_row{rng.gaussian(1, 3), rng.gaussian(4, 3)};
    CHECK_THROWS_AS(footstep_covariance<double>(one_row), DataError);
    std::vector<MatrixXd> single{rng.gaussian(4, 3)};
    CHECK_THROWS_AS(structure_covariance<double>(single), DataError);
    std::vector<MatrixXd> mixed{rng.gaussian(4, 3), rng.gaussian(4, 2)};
    CHECK_THROWS_AS(footstep_covariance<double>(mixed), DataError);
    CHECK_THROWS_AS(variability_proportion(MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2)), NumericalError);
    CHECK_THROWS_AS(variability_proportion(MatrixXd::Identity(2, 2), MatrixXd::Identity(3, 3)), DataError);
  }

  TEST_CASE("float and double agree") {
    gen::Rng rng(58);
    const auto groups = rng.groups(4, 3, 5, 9);
    std::vector<Matrix<float>> single;
    for (const auto& g : groups) single.push_back(g.cast<float>());
    const MatrixXd a = footstep_covariance<float>(single).cast<double>();
    CHECK(gen::relative_error(a, footstep_covariance<double>(groups)) < 1e-5);
  }

  TEST_CASE("decompose_variability on grouped features") {
    gen::Rng rng(59);
    const auto groups = rng.groups(3, 4, 4, 4);
    auto features = gen::labelled(groups, false);
    const auto grouped = GroupedFeatures::group(features, GroupingMode::ByLocation);
    const auto r = decompose_variability(grouped);
    CHECK(gen::relative_error(r.sigma_footstep, brute_footstep(groups)) < 1e-12);
    CHECK(gen::relative_error(r.sigma_structure, brute_structure(groups)) < 1e-12);
  }

  TEST_CASE("within-person reduction") {
    gen::Rng rng(60);
    const auto groups = rng.groups(5, 4, 6, 6);
    std::vector<MatrixXd> scaled;
    for (const auto& g : groups) scaled.push_back(3.5 * g);
    CHECK(std::abs(within_person_variability_ratio<double>(groups, scaled)) < 1e-12);
    CHECK(within_person_variability_ratio<double>(groups, groups) == doctest::Approx(0.0));

    // collapsing every person to its mean removes all within-person spread
    std::vector<MatrixXd> collapsed;
    for (const auto& g : groups) collapsed.push_back(g.colwise().mean().replicate(g.rows(), 1));
    CHECK(within_person_variability_ratio<double>(groups, collapsed) == doctest::Approx(1.0));

    const auto t = scatter_traces<double>(groups);
    const MatrixXd all = stack(groups);
    CHECK(t.total == doctest::Approx((all.rowwise() - all.colwise().mean()).squaredNorm()));
    CHECK(t.within <= t.total);
  }
}

#include "generators.hpp"

#include "vibestep/fisher.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>

using namespace vibestep;

namespace {

struct Oracle {
  VectorXd values;   // descending
  MatrixXd vectors;  // unit columns
};

// Dense QZ solution of S_B v = lambda (S_W + gamma I) v.
Oracle qz(const ScatterMatrices<double>& s, double gamma) {
  const auto d = s.dimension();
  Eigen::GeneralizedEigenSolver<MatrixXd> ges(s.between, s.within + gamma * MatrixXd::Identity(d, d));
  REQUIRE(ges.info() == Eigen::Success);
  std::vector<std::pair<double, VectorXd>> pairs;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lambda = ges.alphas()(i).real() / ges.betas()(i);
    VectorXd v = ges.eigenvectors().col(i).real();
    pairs.emplace_back(lambda, v.normalized());
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  Oracle o{VectorXd(d), MatrixXd(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    o.values(i) = pairs[std::size_t(i)].first;
    o.vectors.col(i) = pairs[std::size_t(i)].second;
  }
  return o;
}

}  // namespace

TEST_SUITE("fisher") {
  TEST_CASE("scatter matrices: S_T = S_W + S_B") {
    gen::Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
      const auto groups = rng.groups(rng.integer(2, 6), rng.integer(1, 6), 1, 10);
      const auto s = scatter_matrices<double>(groups);
      Eigen::Index n = 0;
      for (const auto& g : groups) n += g.rows();
      MatrixXd all(n, s.dimension());
      Eigen::Index r = 0;
      for (const auto& g : groups) {
        all.middleRows(r, g.rows()) = g;
        r += g.rows();
      }
      const MatrixXd c = all.rowwise() - all.colwise().mean();
      CHECK(gen::relative_error(s.within + s.between, c.transpose() * c) < 1e-12);
    }
  }

  TEST_CASE("components match a dense QZ generalized eigensolver") {
    gen::Rng rng(62);
    for (int trial = 0; trial < 20; ++trial) {
      const auto d = rng.integer(2, 8);
      const int classes = rng.integer(2, 8);
      const auto groups = rng.groups(classes, d, d + 2, 25);
      const auto s = scatter_matrices<double>(groups);
      const auto t = fit<double>(groups);
      const auto o = qz(s, t.gamma);
      REQUIRE(t.output_dimension() == std::min<Eigen::Index>(classes - 1, d));
      for (Eigen::Index j = 0; j < t.output_dimension(); ++j) {
        CHECK(t.eigenvalues(j) == doctest::Approx(o.values(j)).epsilon(1e-8));
        const bool distinct = (j == 0 || o.values(j - 1) - o.values(j) > 1e-6 * o.values(0)) &&
                              (j + 1 >= o.values.size() || o.values(j) - o.values(j + 1) > 1e-6 * o.values(0));
        if (distinct) CHECK(std::abs(t.w.col(j).normalized().dot(o.vectors.col(j))) == doctest::Approx(1.0).epsilon(1e-8));
      }
    }
  }

  TEST_CASE("the first component beats random unit probes") {
    gen::Rng rng(63);
    for (int trial = 0; trial < 20; ++trial) {
      const auto d = rng.integer(2, 8);
      const auto groups = rng.groups(rng.integer(2, 6), d, d + 1, 20);
      const auto s = scatter_matrices<double>(groups);
      const auto t = fit<double>(groups);
      const double best = objective<double>(t, groups);
      CHECK(best == doctest::Approx(t.eigenvalues(0)).epsilon(1e-9));
      for (int p = 0; p < 1000; ++p) {
        const VectorXd v = rng.gaussian_vector(d).normalized();
        CHECK(rayleigh_quotient(v, s, t.gamma) <= best * (1 + 1e-12));
      }
    }
  }

  TEST_CASE("w is (S_W + gamma I)-orthonormal with canonical signs and descending eigenvalues") {
    gen::Rng rng(64);
    const auto groups = rng.groups(6, 5, 8, 12);
    const auto s = scatter_matrices<double>(groups);
    const auto t = fit<double>(groups, 4);
    const MatrixXd b = s.within + t.gamma * MatrixXd::Identity(5, 5);
    CHECK((t.w.transpose() * b * t.w - MatrixXd::Identity(4, 4)).norm() < 1e-9);
    for (Eigen::Index j = 1; j < 4; ++j) CHECK(t.eigenvalues(j) <= t.eigenvalues(j - 1));
    for (Eigen::Index j = 0; j < 4; ++j) {
      const VectorXd c = t.w.col(j);
      const double big = c.cwiseAbs().maxCoeff();
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        if (std::abs(c(i)) > 1e-10 * big) {
          CHECK(c(i) > 0.0);
          break;
        }
      }
    }
    CHECK(t.gamma == doctest::Approx(1e-6 * s.within.trace() / 5.0));
  }

  TEST_CASE("projections are invariant to invertible feature maps when gamma = 0") {
    gen::Rng rng(65);
    const auto groups = rng.groups(4, 4, 10, 15);
    const MatrixXd a = rng.spd(4) + rng.gaussian(4, 4, 0.1);
    std::vector<MatrixXd> mapped;
    for (const auto& g : groups) mapped.push_back(g * a.transpose());
    const auto t = fit<double>(groups, 3, 0.0);
    const auto u = fit<double>(mapped, 3, 0.0);
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const MatrixXd p = t.apply_rows(groups[k]);
      const MatrixXd q = u.apply_rows(mapped[k]);
      for (Eigen::Index j = 0; j < 3; ++j) {
        const double sign = p.col(j).dot(q.col(j)) >= 0 ? 1.0 : -1.0;
        CHECK((p.col(j) - sign * q.col(j)).norm() < 1e-7 * p.col(j).norm());
      }
    }
  }

  TEST_CASE("two well separated classes: one component along the mean difference") {
    gen::Rng rng(66);
    MatrixXd a = rng.gaussian(50, 3, 0.1);
    MatrixXd b = rng.gaussian(50, 3, 0.1);
    b.col(1).array() += 5.0;
    const std::vector<MatrixXd> groups{a, b};
    const auto t = fit<double>(groups);
    REQUIRE(t.output_dimension() == 1);
    CHECK(std::abs(t.w.col(0).normalized()(1)) > 0.99);
    const double gap = std::abs(t.apply_rows(a).mean() - t.apply_rows(b).mean());
    CHECK(gap > 10.0 * std::sqrt(1.0 / 100.0));
  }

  TEST_CASE("degenerate and invalid inputs") {
    gen::Rng rng(67);
    std::vector<MatrixXd> one{rng.gaussian(5, 3)};
    CHECK_THROWS_AS(fit<double>(one), ConfigError);

    const auto groups = rng.groups(3, 4, 6, 6);
    CHECK_THROWS_AS(fit<double>(groups, 3), ConfigError);
    CHECK_THROWS_AS(fit<double>(groups, 0), ConfigError);
    CHECK_THROWS_AS(fit<double>(groups, std::nullopt, -1.0), ConfigError);

    // fewer samples than dimensions: singular S_W without a ridge
    const auto thin = rng.groups(2, 6, 2, 2);
    CHECK_THROWS_AS(fit<double>(thin, std::nullopt, 0.0), NumericalError);
    CHECK_NOTHROW(fit<double>(thin, std::nullopt, 1e-3));

    // identical class means: S_B = 0
    auto same = rng.groups(3, 3, 5, 5);
    for (auto& g : same) g.rowwise() -= g.colwise().mean();
    const auto t = fit<double>(same);
    CHECK(t.degenerate);
    CHECK(t.eigenvalues.norm() < 1e-12);

    const auto ok = fit<double>(groups);
    CHECK_THROWS_AS(ok.apply(VectorXd::Zero(3)), DataError);
  }

  TEST_CASE("fit_scatter allows full-rank whitening of one class") {
    gen::Rng rng(68);
    const std::vector<MatrixXd> one{rng.gaussian(40, 4) * rng.spd(4)};
    const auto s = scatter_matrices<double>(one);
    const auto t = fit_scatter<double>(s, 4, 0.0);
    CHECK((t.w.transpose() * s.within * t.w - MatrixXd::Identity(4, 4)).norm() < 1e-9);
    CHECK(t.degenerate);
  }

  TEST_CASE("grouped-features overload agrees with the matrix version") {
    gen::Rng rng(69);
    const auto groups = rng.groups(4, 3, 5, 8);
    const auto features = gen::labelled(groups, true);
    const auto g = GroupedFeatures::group(features, GroupingMode::ByPerson);
    const auto a = fit(g);
    const auto b = fit<double>(groups);
    CHECK((a.w - b.w).norm() < 1e-12 * b.w.norm());
    const MatrixXd rows = transform(a, features);
    CHECK(rows.rows() == static_cast<Eigen::Index>(features.size()));
    CHECK((rows.row(0).transpose() - transform(a, features.front())).norm() == 0.0);
  }
}

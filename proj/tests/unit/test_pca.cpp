#include "aubase/pca.hpp"

#include "doctest.h"

#include <Eigen/Eigenvalues>

#include <random>

using namespace aubase;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

Eigen::MatrixXd random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
  const Eigen::MatrixXd a = random_matrix(n, n, rng);
  return (a + a.transpose()) / 2.0;
}

double cofactor_det(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::MatrixXd minor(n - 1, n - 1);
    for (Eigen::Index i = 1; i < n; ++i)
      for (Eigen::Index j = 0, k = 0; j < n; ++j)
        if (j != c) minor(i - 1, k++) = m(i, j);
    det += (c % 2 ? -1.0 : 1.0) * m(0, c) * cofactor_det(minor);
  }
  return det;
}

std::vector<int> single_group(Eigen::Index m) { return std::vector<int>(static_cast<std::size_t>(m), 0); }

// Explicit quadratic form x (I - Xi Xi^T) x^T on the normalized row.
double quadratic_spe(const PcaModel& model, const Eigen::RowVectorXd& x_raw) {
  const Eigen::RowVectorXd x = apply_scaling(Eigen::MatrixXd(x_raw), model.scaling);
  const Eigen::Index m = x.size();
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(m, m) - model.loadings * model.loadings.transpose();
  return (x * proj * x.transpose())(0, 0);
}

}  // namespace

TEST_CASE("covariance hand value and naive loop oracle") {
  const Eigen::MatrixXd x1 = (Eigen::MatrixXd(2, 1) << 1, -1).finished();
  CHECK(covariance(x1)(0, 0) == doctest::Approx(2.0));

  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = random_matrix(20, 6, rng);
  const auto c = covariance(x);
  for (Eigen::Index j = 0; j < 6; ++j)
    for (Eigen::Index k = 0; k < 6; ++k) {
      double acc = 0;
      for (Eigen::Index i = 0; i < 20; ++i) acc += x(i, j) * x(i, k);
      CHECK(std::abs(c(j, k) - acc / 19.0) < 1e-12);
      CHECK(c(j, k) == c(k, j));
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);

  const Eigen::MatrixXd orth = (Eigen::MatrixXd(4, 2) << 1, 1, -1, 1, 1, -1, -1, -1).finished();
  CHECK(std::abs(covariance(orth)(0, 1)) < 1e-15);
  CHECK_THROWS_AS(covariance(Eigen::MatrixXd::Ones(1, 3)), std::invalid_argument);
}

TEST_CASE("jacobi on identity and diagonal") {
  const auto id = eig_sym(Eigen::MatrixXd::Identity(3, 3));
  CHECK((id.values.array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK((id.vectors.transpose() * id.vectors - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);

  const auto d = eig_sym(Eigen::Vector3d(3, 1, 2).asDiagonal().toDenseMatrix());
  CHECK(d.values == Eigen::Vector3d(3, 2, 1));
  CHECK(d.vectors == (Eigen::MatrixXd(3, 3) << 1, 0, 0, 0, 0, 1, 0, 1, 0).finished());
}

TEST_CASE("jacobi agrees with reference eigensolver and determinant") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd c = random_symmetric(5, rng);
    const auto e = eig_sym(c);
    const double scale = c.norm();
    CHECK((c * e.vectors - e.vectors * e.values.asDiagonal().toDenseMatrix()).norm() < 1e-8 * scale);
    CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(e.values.sum() - c.trace()) < 1e-8 * std::max(1.0, std::abs(c.trace())));
    for (Eigen::Index k = 1; k < 5; ++k) CHECK(e.values[k - 1] >= e.values[k]);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(c);
    const Eigen::VectorXd sorted = ref.eigenvalues().reverse();
    CHECK((e.values - sorted).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK(std::abs(e.values.prod() - cofactor_det(c)) < 1e-9 * std::pow(scale, 5));
    for (Eigen::Index k = 0; k < 5; ++k) {
      Eigen::Index arg = 0;
      e.vectors.col(k).cwiseAbs().maxCoeff(&arg);
      CHECK(e.vectors(arg, k) > 0.0);
    }
  }
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
  asym(0, 2) = 1.0;
  CHECK_THROWS_AS(eig_sym(asym), std::invalid_argument);
}

TEST_CASE("gram path agrees with the direct path") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = random_matrix(8, 20, rng);
  const auto direct = eig_sym(covariance(x));
  const auto gram = eig_covariance_gram(x);
  CHECK((direct.values.head(8) - gram.values.head(8)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(gram.values.tail(12).cwiseAbs().maxCoeff() == 0.0);
  // Uncentered 8 x 20 data: rank 8.
  for (Eigen::Index k = 0; k < 8; ++k) {
    const double dot = direct.vectors.col(k).dot(gram.vectors.col(k));
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-8);
  }
}

TEST_CASE("retained component count") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);

  Eigen::MatrixXd rank1(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double t = g(rng);
    rank1.row(i) << t, 2 * t;
  }
  // Separate groups keep the two columns on their own scales.
  const std::vector<int> two{0, 1};
  const auto m1 = fit_pca(rank1, two, 0.95);
  CHECK(m1.retained == 1);
  CHECK(m1.eigvals[0] / m1.eigvals.sum() > 1 - 1e-12);

  const Eigen::MatrixXd full = random_matrix(50, 6, rng);
  CHECK(fit_pca(full, single_group(6), 1.0).retained == 6);

  const Eigen::MatrixXd basis = random_matrix(2, 10, rng);
  Eigen::MatrixXd rank2 = random_matrix(60, 2, rng) * basis;
  rank2 += 1e-6 * random_matrix(60, 10, rng);
  const auto m2 = fit_pca(rank2, single_group(10), 0.95);
  CHECK(m2.retained == 2);
  const auto r = m2.retained;
  CHECK(m2.eigvals.head(r).sum() / m2.eigvals.sum() >= 0.95);
  CHECK(m2.eigvals.head(r - 1).sum() / m2.eigvals.sum() < 0.95);

  CHECK(retained_components(Eigen::Vector3d(10, 0, 0), 0.95) == 1);
  CHECK_THROWS_AS(fit_pca(full, single_group(6), 0.0), std::invalid_argument);
}

TEST_CASE("projection, reconstruction and SPE") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x = random_matrix(30, 8, rng) * random_matrix(8, 8, rng);
  const std::vector<int> groups{0, 0, 0, 0, 1, 1, 1, 1};
  const auto model = fit_pca(x, groups, 0.8);
  const auto r = model.retained;
  REQUIRE(r < 8);
  CHECK((model.loadings.transpose() * model.loadings - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() < 1e-9);

  // Scores against a naive triple loop.
  const Eigen::MatrixXd z = apply_scaling(x, model.scaling);
  const Eigen::MatrixXd t = project(model, x);
  for (Eigen::Index i = 0; i < 30; ++i)
    for (Eigen::Index k = 0; k < r; ++k) {
      double acc = 0;
      for (Eigen::Index j = 0; j < 8; ++j) acc += z(i, j) * model.loadings(j, k);
      CHECK(std::abs(t(i, k) - acc) < 1e-12);
    }

  CHECK(project(model, Eigen::MatrixXd(model.scaling.col_means)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(reconstruct(model, Eigen::MatrixXd::Zero(1, r)).isZero(0.0));
  CHECK_THROWS_AS(reconstruct(model, Eigen::MatrixXd::Zero(1, r + 1)), std::invalid_argument);

  // Residual orthogonal to the retained loadings.
  const Eigen::MatrixXd resid = z - reconstruct(model, t);
  CHECK((resid * model.loadings).cwiseAbs().maxCoeff() < 1e-9);

  // Projector idempotence.
  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(8, 8) - model.loadings * model.loadings.transpose();
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-9);

  // Point along the first loading: a single nonzero score.
  const double sigma = 1.7;
  Eigen::RowVectorXd along = model.scaling.col_means;
  for (Eigen::Index j = 0; j < 8; ++j)
    along[j] += sigma * model.loadings(j, 0) * model.scaling.group_stds[groups[static_cast<std::size_t>(j)]];
  const Eigen::RowVectorXd s = project(model, Eigen::MatrixXd(along));
  CHECK(s[0] == doctest::Approx(sigma).epsilon(1e-9));
  CHECK(s.tail(r - 1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(spe(model, along) < 1e-9);

  // Dual formulas and non-negativity on fresh rows.
  const Eigen::MatrixXd fresh = random_matrix(200, 8, rng) * 3.0;
  const Eigen::VectorXd q = spe(model, fresh);
  const Eigen::VectorXd q2 = spe_residual_norm(model, fresh);
  for (Eigen::Index i = 0; i < 200; ++i) {
    CHECK(q[i] >= 0.0);
    CHECK(std::abs(q[i] - q2[i]) < 1e-9);
    CHECK(std::abs(q[i] - quadratic_spe(model, fresh.row(i))) < 1e-9);
  }

  // Nested models: more components never raise SPE.
  double previous = 1e300;
  for (double thr : {0.5, 0.7, 0.9, 0.99, 1.0}) {
    const double e = spe(fit_pca(x, groups, thr), Eigen::RowVectorXd(fresh.row(0)));
    CHECK(e <= previous + 1e-12);
    previous = e;
  }
  CHECK(spe(fit_pca(x, groups, 1.0), fresh).maxCoeff() < 1e-9);
}

TEST_CASE("validation SPE stays near training SPE") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd basis = random_matrix(3, 12, rng);
  auto sample = [&](Eigen::Index n) {
    Eigen::MatrixXd out = random_matrix(n, 3, rng) * basis;
    out += 0.1 * random_matrix(n, 12, rng);
    return out;
  };
  const Eigen::MatrixXd train = sample(70);
  const Eigen::MatrixXd val = sample(30);
  const auto model = fit_pca(train, single_group(12), 0.95);
  auto median = [](Eigen::VectorXd v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(spe(model, val)) <= 3.0 * median(spe(model, train)));
}

#include "aubase/pca.hpp"
#include "aubase/som.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace aubase;

namespace {

Eigen::MatrixXd gaussian_data(Eigen::Index n, Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = g(rng);
  return m;
}

std::pair<Eigen::Index, Eigen::Index> scan_two(const SomModel& m, const Eigen::RowVectorXd& x) {
  std::vector<std::pair<double, Eigen::Index>> d;
  for (Eigen::Index i = 0; i < m.units(); ++i) d.emplace_back((m.weights.row(i) - x).squaredNorm(), i);
  std::sort(d.begin(), d.end());
  return {d[0].second, d[1].second};
}

}  // namespace

TEST_CASE("lattice geometry") {
  std::mt19937_64 rng(1);
  const auto m = init_som(3, 4, gaussian_data(10, 2, rng), InitMode::random, 1);
  CHECK(m.units() == 12);
  CHECK(m.lattice_distance(0, 0) == 0.0);
  CHECK(m.lattice_distance(0, 5) == doctest::Approx(std::sqrt(2.0)));
  CHECK(m.lattice_neighbours(0) == std::vector<Eigen::Index>{1, 4});
  CHECK(m.lattice_neighbours(5) == std::vector<Eigen::Index>{1, 4, 6, 9});
  CHECK(default_grid(100) == std::pair<int, int>{8, 8});
  CHECK(default_grid(1000000) == std::pair<int, int>{20, 20});
}

TEST_CASE("kernel values") {
  CHECK(kernel_value(0.0, 1.0, KernelForm::printed) == 1.0);
  CHECK(kernel_value(1.0, 1.0, KernelForm::printed) == doctest::Approx(std::exp(-1.0)));
  CHECK(kernel_value(1.0, 1.0, KernelForm::printed) == doctest::Approx(0.3679).epsilon(1e-4));
  CHECK(kernel_value(1.0, 1.0, KernelForm::gaussian) == doctest::Approx(std::exp(-0.5)));
  CHECK_THROWS_AS(kernel_value(1.0, 0.0, KernelForm::printed), std::invalid_argument);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int t = 0; t < 200; ++t) {
    const double d = u(rng), l = u(rng);
    const double expect = (1.0 / l) * std::exp(-(d * d) / (l * l));
    CHECK(std::abs(kernel_value(d, l, KernelForm::printed) - expect) <= 1e-15 * std::max(1.0, expect));
  }
  const auto m = init_som(4, 4, gaussian_data(5, 2, rng), InitMode::random, 3);
  for (Eigen::Index i = 0; i < 16; ++i)
    for (Eigen::Index j = 0; j < 16; ++j) {
      CHECK(kernel(m, i, j, 1.3) == kernel(m, j, i, 1.3));
      CHECK(kernel(m, i, j, 1.3) <= kernel(m, i, i, 1.3));
      CHECK(kernel(m, i, j, 1.3) > 0.0);
    }
}

TEST_CASE("bmu queries against an exhaustive scan") {
  std::mt19937_64 rng(3);
  const auto data = gaussian_data(50, 3, rng);
  const auto m = train_som(init_som(5, 5, data, InitMode::linear, 1), data, {}).model;
  const auto queries = gaussian_data(100, 3, rng);
  for (Eigen::Index q = 0; q < 100; ++q) {
    const auto [a, b] = scan_two(m, queries.row(q));
    CHECK(bmu(m, queries.row(q)) == a);
    CHECK(second_bmu(m, queries.row(q)) == b);
    CHECK(a != b);
  }
  CHECK(bmu(m, m.weights.row(7)) == 7);
  CHECK_THROWS_AS(bmu(m, Eigen::RowVectorXd::Zero(2)), std::invalid_argument);

  SomModel tie = init_som(1, 3, data.leftCols(1), InitMode::random, 1);
  tie.weights << 1.0, -1.0, 5.0;
  CHECK(bmu(tie, Eigen::RowVectorXd::Zero(1)) == 0);
  CHECK(second_bmu(tie, Eigen::RowVectorXd::Zero(1)) == 1);
}

TEST_CASE("initialization") {
  std::mt19937_64 rng(4);
  const auto data = gaussian_data(40, 4, rng);
  const auto one = init_som(1, 1, data, InitMode::linear, 1);
  CHECK((one.weights.row(0) - data.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);

  // Rank-2 data: every initial weight stays in the affine span of the top two components.
  const Eigen::MatrixXd rank2 = gaussian_data(60, 2, rng) * gaussian_data(2, 6, rng);
  const auto lin = init_som(4, 5, rank2, InitMode::linear, 1);
  const Eigen::RowVectorXd mean = rank2.colwise().mean();
  const auto eig = eig_sym(covariance(Eigen::MatrixXd(rank2.rowwise() - mean)));
  const Eigen::MatrixXd basis = eig.vectors.leftCols(2);
  for (Eigen::Index i = 0; i < lin.units(); ++i) {
    const Eigen::RowVectorXd off = lin.weights.row(i) - mean;
    CHECK((off - off * basis * basis.transpose()).norm() < 1e-9);
  }

  const auto r1 = init_som(3, 3, data, InitMode::random, 9);
  const auto r2 = init_som(3, 3, data, InitMode::random, 9);
  CHECK(r1.weights == r2.weights);
  const Eigen::RowVectorXd lo = data.colwise().minCoeff();
  const Eigen::RowVectorXd hi = data.colwise().maxCoeff();
  for (Eigen::Index i = 0; i < 9; ++i)
    for (Eigen::Index d = 0; d < 4; ++d) {
      CHECK(r1.weights(i, d) >= lo[d]);
      CHECK(r1.weights(i, d) <= hi[d]);
    }
  CHECK_THROWS_AS(init_som(2, 2, Eigen::MatrixXd(0, 3), InitMode::linear, 1), std::invalid_argument);
}

TEST_CASE("training fixed points") {
  const Eigen::MatrixXd point = Eigen::RowVector3d(1.0, -2.0, 0.5);
  SomModel m = init_som(3, 3, point, InitMode::random, 1);
  m.weights.setRandom();
  const auto single = train_som(m, point, {}).model;
  for (Eigen::Index i = 0; i < 9; ++i) CHECK((single.weights.row(i) - point).norm() < 1e-6);

  const Eigen::MatrixXd two = (Eigen::MatrixXd(2, 2) << 0, 0, 10, 10).finished();
  const auto t = train_som(init_som(1, 2, two, InitMode::linear, 1), two, {}).model;
  const Eigen::Index a = bmu(t, two.row(0));
  const Eigen::Index b = bmu(t, two.row(1));
  CHECK(a != b);
  CHECK((t.weights.row(a) - two.row(0)).norm() < 1.0);
  CHECK((t.weights.row(b) - two.row(1)).norm() < 1.0);
}

TEST_CASE("training lowers quantization error and cost") {
  std::mt19937_64 rng(5);
  int cost_lower = 0;
  for (int s = 0; s < 20; ++s) {
    const auto data = gaussian_data(80, 3, rng);
    const auto init = init_som(5, 5, data, InitMode::random, static_cast<std::uint64_t>(s));
    TrainOptions opts;
    opts.epochs = 30;
    const auto result = train_som(init, data, opts);
    CHECK(result.qe_trace.back() <= result.qe_trace.front());
    CHECK(result.qe_trace.size() == 31);
    CHECK(result.qe_trace.front() == doctest::Approx(mean_quantization_error(init, data)));
    const double lambda = result.model.schedule.end;
    if (som_cost(result.model, data, lambda) < som_cost(init, data, lambda)) ++cost_lower;

    const auto again = train_som(init, data, opts);
    CHECK(again.model.weights == result.model.weights);
  }
  CHECK(cost_lower >= 18);
}

TEST_CASE("lambda schedule") {
  LambdaSchedule s{4.0, 0.5};
  CHECK(s.at(0, 50) == 4.0);
  CHECK(s.at(50, 50) == doctest::Approx(0.5));
  CHECK(s.at(25, 50) == doctest::Approx(std::sqrt(4.0 * 0.5)));
}

TEST_CASE("u-matrix") {
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(2, 2);
  SomModel flat = init_som(3, 3, data, InitMode::linear, 1);
  CHECK(u_matrix(flat).isZero(0.0));

  SomModel pair = init_som(1, 2, data, InitMode::random, 1);
  pair.weights << 0, 0, 3, 4;
  CHECK(u_matrix(pair) == Eigen::RowVector2d(5, 5));

  SomModel sq = init_som(2, 2, data, InitMode::random, 1);
  sq.weights << 0, 0, 1, 0, 0, 2, 1, 2;
  // Each corner: mean of distance to its row and column neighbour.
  const Eigen::Matrix2d expect = (Eigen::Matrix2d() << 1.5, 1.5, 1.5, 1.5).finished();
  CHECK((u_matrix(sq) - expect).cwiseAbs().maxCoeff() < 1e-15);
  sq.weights.row(3) << 4, 2;
  const Eigen::Matrix2d expect2 = (Eigen::Matrix2d() << 1.5, (1 + std::sqrt(13.0)) / 2, (2 + 4) / 2.0,
                                   (std::sqrt(13.0) + 4) / 2).finished();
  CHECK((u_matrix(sq) - expect2).cwiseAbs().maxCoeff() < 1e-15);
}

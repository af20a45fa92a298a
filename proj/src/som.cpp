#include "aubase/som.hpp"

#include "aubase/pca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace aubase {

double LambdaSchedule::at(int epoch, int epochs) const {
  if (epochs <= 0) return end;
  return start * std::pow(end / start, static_cast<double>(epoch) / epochs);
}

double SomModel::lattice_distance(Eigen::Index i, Eigen::Index j) const {
  return (positions.row(i) - positions.row(j)).norm();
}

std::vector<Eigen::Index> SomModel::lattice_neighbours(Eigen::Index i) const {
  const Eigen::Index r = i / width;
  const Eigen::Index c = i % width;
  std::vector<Eigen::Index> out;
  if (r > 0) out.push_back(i - width);
  if (c > 0) out.push_back(i - 1);
  if (c + 1 < width) out.push_back(i + 1);
  if (r + 1 < height) out.push_back(i + width);
  return out;
}

std::pair<int, int> default_grid(Eigen::Index n_samples) {
  const double n = static_cast<double>(std::max<Eigen::Index>(n_samples, 1));
  const int side = std::clamp(static_cast<int>(std::ceil(std::sqrt(5.0 * std::sqrt(n)))), 1, 20);
  return {side, side};
}

namespace {

SomModel make_lattice(int height, int width, Eigen::Index dim) {
  if (height < 1 || width < 1) throw std::invalid_argument("som: grid dimensions must be >= 1");
  SomModel m;
  m.height = height;
  m.width = width;
  const Eigen::Index units = static_cast<Eigen::Index>(height) * width;
  m.weights = Eigen::MatrixXd::Zero(units, dim);
  m.positions.resize(units, 2);
  for (Eigen::Index i = 0; i < units; ++i) {
    m.positions(i, 0) = static_cast<double>(i / width);
    m.positions(i, 1) = static_cast<double>(i % width);
  }
  return m;
}

double lattice_coordinate(int index, int extent) {
  return extent > 1 ? 2.0 * index / (extent - 1) - 1.0 : 0.0;
}

}  // namespace

SomModel init_som(int height, int width, const Eigen::MatrixXd& data, InitMode mode, std::uint64_t seed) {
  if (data.rows() == 0 || data.cols() == 0) throw std::invalid_argument("init_som: empty data");
  SomModel m = make_lattice(height, width, data.cols());
  const Eigen::RowVectorXd mean = data.colwise().mean();

  if (mode == InitMode::random) {
    std::mt19937_64 rng(seed);
    const Eigen::RowVectorXd lo = data.colwise().minCoeff();
    const Eigen::RowVectorXd hi = data.colwise().maxCoeff();
    for (Eigen::Index i = 0; i < m.units(); ++i)
      for (Eigen::Index d = 0; d < m.dim(); ++d)
        m.weights(i, d) = std::uniform_real_distribution<double>(lo[d], std::nextafter(hi[d], hi[d] + 1.0))(rng);
    return m;
  }

  m.weights.rowwise() = mean;
  if (m.units() == 1) return m;
  if (data.rows() < 2) throw std::invalid_argument("init_som: linear mode needs at least 2 rows");

  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const auto eig = centered.rows() >= centered.cols() ? eig_sym(covariance(centered))
                                                      : eig_covariance_gram(centered);
  Eigen::RowVectorXd axis[2];
  for (int k = 0; k < 2; ++k) {
    const bool present = k < eig.values.size() && eig.values[k] > 0.0;
    axis[k] = present ? Eigen::RowVectorXd(std::sqrt(eig.values[k]) * eig.vectors.col(k).transpose())
                      : Eigen::RowVectorXd::Zero(data.cols());
  }
  // The longer lattice side follows the first principal direction.
  const bool rows_major = height >= width;
  for (Eigen::Index i = 0; i < m.units(); ++i) {
    const double ur = lattice_coordinate(static_cast<int>(i / width), height);
    const double uc = lattice_coordinate(static_cast<int>(i % width), width);
    m.weights.row(i) += rows_major ? (ur * axis[0] + uc * axis[1]) : (uc * axis[0] + ur * axis[1]);
  }
  return m;
}

double kernel_value(double lattice_distance, double lambda, KernelForm form) {
  if (!(lambda > 0.0)) throw std::invalid_argument("kernel: lambda must be positive");
  const double d2 = lattice_distance * lattice_distance;
  if (form == KernelForm::gaussian) return std::exp(-d2 / (2.0 * lambda * lambda));
  return 1.0 / (lambda * std::exp(d2 / (lambda * lambda)));
}

double kernel(const SomModel& model, Eigen::Index i, Eigen::Index j, double lambda) {
  return kernel_value(model.lattice_distance(i, j), lambda, model.kernel);
}

std::pair<Eigen::Index, Eigen::Index> two_bmus(const SomModel& model,
                                               const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (x.size() != model.dim())
    throw std::invalid_argument("bmu: input width " + std::to_string(x.size()) + " does not match map dimension " +
                                std::to_string(model.dim()));
  Eigen::Index first = -1, second = -1;
  double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
  for (Eigen::Index i = 0; i < model.units(); ++i) {
    const double d = (model.weights.row(i) - x).squaredNorm();
    if (d < d1) {
      second = first;
      d2 = d1;
      first = i;
      d1 = d;
    } else if (d < d2) {
      second = i;
      d2 = d;
    }
  }
  return {first, second};
}

Eigen::Index bmu(const SomModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return two_bmus(model, x).first;
}

Eigen::Index second_bmu(const SomModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const auto second = two_bmus(model, x).second;
  if (second < 0) throw std::invalid_argument("second_bmu: map has a single unit");
  return second;
}

Eigen::VectorXd quantization_errors(const SomModel& model, const Eigen::MatrixXd& data) {
  Eigen::VectorXd out(data.rows());
  for (Eigen::Index n = 0; n < data.rows(); ++n)
    out[n] = (model.weights.row(bmu(model, data.row(n))) - data.row(n)).norm();
  return out;
}

double mean_quantization_error(const SomModel& model, const Eigen::MatrixXd& data) {
  return data.rows() == 0 ? 0.0 : quantization_errors(model, data).mean();
}

double som_cost(const SomModel& model, const Eigen::MatrixXd& data, double lambda) {
  if (data.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index n = 0; n < data.rows(); ++n) {
    const Eigen::Index u = bmu(model, data.row(n));
    for (Eigen::Index j = 0; j < model.units(); ++j)
      total += kernel(model, j, u, lambda) * (model.weights.row(j) - data.row(n)).squaredNorm();
  }
  return total / static_cast<double>(data.rows());
}

TrainResult train_som(SomModel model, const Eigen::MatrixXd& data, const TrainOptions& options) {
  if (data.rows() < 1) throw std::invalid_argument("train_som: no data");
  if (options.epochs < 1) throw std::invalid_argument("train_som: epochs must be >= 1");
  if (data.cols() != model.dim()) throw std::invalid_argument("train_som: data width does not match map");
  LambdaSchedule schedule = options.schedule;
  if (!(schedule.start > 0.0)) schedule.start = std::max(0.5 * std::max(model.height, model.width), schedule.end);
  if (!(schedule.end > 0.0)) throw std::invalid_argument("train_som: lambda end must be positive");

  const Eigen::Index units = model.units();
  Eigen::MatrixXd lattice_d(units, units);
  for (Eigen::Index i = 0; i < units; ++i)
    for (Eigen::Index j = 0; j < units; ++j) lattice_d(i, j) = model.lattice_distance(i, j);

  TrainResult result;
  Eigen::MatrixXd sums(units, model.dim());
  Eigen::VectorXd counts(units);
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    sums.setZero();
    counts.setZero();
    double qe = 0.0;
    for (Eigen::Index n = 0; n < data.rows(); ++n) {
      const Eigen::Index u = bmu(model, data.row(n));
      qe += (model.weights.row(u) - data.row(n)).norm();
      sums.row(u) += data.row(n);
      counts[u] += 1.0;
    }
    result.qe_trace.push_back(qe / static_cast<double>(data.rows()));

    const double lambda = schedule.at(epoch, options.epochs);
    Eigen::MatrixXd k(units, units);
    for (Eigen::Index i = 0; i < units; ++i)
      for (Eigen::Index j = 0; j < units; ++j) k(i, j) = kernel_value(lattice_d(i, j), lambda, model.kernel);
    const Eigen::MatrixXd numer = k * sums;
    const Eigen::VectorXd denom = k * counts;
    for (Eigen::Index j = 0; j < units; ++j)
      if (denom[j] > 0.0) model.weights.row(j) = numer.row(j) / denom[j];
  }
  result.qe_trace.push_back(mean_quantization_error(model, data));
  model.trained_epochs += options.epochs;
  model.schedule = schedule;
  result.model = std::move(model);
  return result;
}

Eigen::MatrixXd u_matrix(const SomModel& model) {
  Eigen::MatrixXd u(model.height, model.width);
  for (Eigen::Index i = 0; i < model.units(); ++i) {
    const auto nbrs = model.lattice_neighbours(i);
    double total = 0.0;
    for (auto j : nbrs) total += (model.weights.row(i) - model.weights.row(j)).norm();
    u(i / model.width, i % model.width) = nbrs.empty() ? 0.0 : total / static_cast<double>(nbrs.size());
  }
  return u;
}

}  // namespace aubase

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace aubase {

/// Neighbourhood kernel shape. `printed` is (1/l) exp(-d^2 / l^2); `gaussian`
/// is the conventional exp(-d^2 / (2 l^2)).
enum class KernelForm { printed, gaussian };

/// Exponential decay l(t) = start * (end / start)^(t / epochs).
struct LambdaSchedule {
  double start = 0.0;  // <= 0: half the larger grid dimension
  double end = 0.5;

  double at(int epoch, int epochs) const;
};

struct SomModel {
  int height = 1;
  int width = 1;
  Eigen::MatrixXd weights;              // units x dim, unit index = row * width + col
  Eigen::Matrix<double, Eigen::Dynamic, 2> positions;  // lattice (row, col) of every unit
  int trained_epochs = 0;
  LambdaSchedule schedule;
  KernelForm kernel = KernelForm::printed;

  Eigen::Index units() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
  double lattice_distance(Eigen::Index i, Eigen::Index j) const;
  /// 4-neighbourhood of a unit on the lattice, ascending.
  std::vector<Eigen::Index> lattice_neighbours(Eigen::Index i) const;
};

enum class InitMode { linear, random };

/// Side length ceil(sqrt(5 sqrt(n))), capped at 20, as a square grid.
std::pair<int, int> default_grid(Eigen::Index n_samples);

SomModel init_som(int height, int width, const Eigen::MatrixXd& data, InitMode mode, std::uint64_t seed);

double kernel_value(double lattice_distance, double lambda, KernelForm form);
double kernel(const SomModel& model, Eigen::Index i, Eigen::Index j, double lambda);

/// Index of the closest weight vector; ties go to the lowest index.
Eigen::Index bmu(const SomModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);
/// Closest unit other than the BMU.
Eigen::Index second_bmu(const SomModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);
std::pair<Eigen::Index, Eigen::Index> two_bmus(const SomModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Euclidean distance from each row to its BMU.
Eigen::VectorXd quantization_errors(const SomModel& model, const Eigen::MatrixXd& data);
double mean_quantization_error(const SomModel& model, const Eigen::MatrixXd& data);

/// Kernel-weighted distortion (1/N) sum_n sum_j K(j, u*(x_n)) |m_j - x_n|^2.
double som_cost(const SomModel& model, const Eigen::MatrixXd& data, double lambda);

struct TrainOptions {
  int epochs = 50;
  LambdaSchedule schedule;
};

struct TrainResult {
  SomModel model;
  std::vector<double> qe_trace;  // mean quantization error: [0] before training, then after each epoch
};

/// Batch SOM: every epoch sets m_j = sum_n K(j, u*_n) x_n / sum_n K(j, u*_n).
TrainResult train_som(SomModel model, const Eigen::MatrixXd& data, const TrainOptions& options);

/// Mean weight distance of every unit to its lattice 4-neighbours (height x width).
Eigen::MatrixXd u_matrix(const SomModel& model);

}  // namespace aubase

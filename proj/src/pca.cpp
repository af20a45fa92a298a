#include "aubase/pca.hpp"

namespace aubase {

Eigen::Index retained_components(const Eigen::VectorXd& eigvals, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw std::invalid_argument("variance threshold must lie in (0, 1]");
  const double total = eigvals.sum();
  if (!(total > 0.0)) return 1;
  double cumulative = 0.0;
  for (Eigen::Index k = 0; k < eigvals.size(); ++k) {
    cumulative += eigvals[k];
    // Relative slack so a threshold of exactly 1 is reachable despite rounding.
    if (cumulative >= threshold * total * (1.0 - 1e-12)) return k + 1;
  }
  return eigvals.size();
}

PcaModel fit_pca(const Eigen::MatrixXd& x_raw, std::span<const int> col_groups, double variance_threshold) {
  if (!(variance_threshold > 0.0 && variance_threshold <= 1.0))
    throw std::invalid_argument("fit_pca: variance threshold must lie in (0, 1]");
  PcaModel model;
  model.variance_threshold = variance_threshold;
  model.trained_n = x_raw.rows();
  model.scaling = fit_group_scaling(x_raw, col_groups);
  const Eigen::MatrixXd x = apply_scaling(x_raw, model.scaling);

  const SymmetricEigen<double> eig = x.rows() >= x.cols() ? eig_sym(covariance(x)) : eig_covariance_gram(x);
  model.eigvals = eig.values;
  const double top = std::max(model.eigvals.size() > 0 ? model.eigvals[0] : 0.0, 0.0);
  for (Eigen::Index k = 0; k < model.eigvals.size(); ++k)
    if (model.eigvals[k] < 1e-12 * top) model.eigvals[k] = 0.0;

  model.retained = retained_components(model.eigvals, variance_threshold);
  model.loadings = eig.vectors.leftCols(model.retained);
  return model;
}

PcaModel fit_pca(const FeatureMatrix& x_raw, double variance_threshold) {
  return fit_pca(x_raw.values, x_raw.col_groups, variance_threshold);
}

Eigen::MatrixXd project(const PcaModel& model, const Eigen::MatrixXd& x_raw) {
  return apply_scaling(x_raw, model.scaling) * model.loadings;
}

Eigen::MatrixXd reconstruct(const PcaModel& model, const Eigen::MatrixXd& scores) {
  if (scores.cols() != model.retained)
    throw std::invalid_argument("reconstruct: expected " + std::to_string(model.retained) + " scores, got " +
                                std::to_string(scores.cols()));
  return scores * model.loadings.transpose();
}

Eigen::VectorXd spe(const PcaModel& model, const Eigen::MatrixXd& x_raw) {
  const Eigen::MatrixXd x = apply_scaling(x_raw, model.scaling);
  const Eigen::MatrixXd t = x * model.loadings;
  // x (I - Xi Xi^T) x^T = |x|^2 - |x Xi|^2; clamp the rounding residue below zero.
  Eigen::VectorXd q = x.rowwise().squaredNorm() - t.rowwise().squaredNorm();
  return q.cwiseMax(0.0);
}

double spe(const PcaModel& model, const Eigen::RowVectorXd& x_raw) {
  return spe(model, Eigen::MatrixXd(x_raw))[0];
}

Eigen::VectorXd spe_residual_norm(const PcaModel& model, const Eigen::MatrixXd& x_raw) {
  const Eigen::MatrixXd x = apply_scaling(x_raw, model.scaling);
  const Eigen::MatrixXd e = x - reconstruct(model, x * model.loadings);
  return e.rowwise().squaredNorm();
}

}  // namespace aubase

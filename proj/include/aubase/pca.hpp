#pragma once

#include "aubase/fusion.hpp"
#include "aubase/wavelet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace aubase {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// C = X^T X / (n - 1) for an already normalized matrix.
template <typename Derived>
MatrixX<typename Derived::Scalar> covariance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 2) throw std::invalid_argument("covariance: need at least 2 rows");
  MatrixX<Scalar> c = (x.transpose() * x) / Scalar(x.rows() - 1);
  // Enforce exact symmetry; the product is symmetric only up to rounding.
  return (c + c.transpose()) / Scalar(2);
}

template <typename Scalar = double>
struct SymmetricEigen {
  VectorX<Scalar> values;   // descending
  MatrixX<Scalar> vectors;  // orthonormal columns
  int sweeps = 0;
};

struct JacobiOptions {
  double tolerance = 1e-12;  // relative to the Frobenius norm
  int max_sweeps = 100;
};

namespace detail {

/// Sorts eigenpairs descending and flips each vector so its largest-magnitude entry is positive.
template <typename Scalar>
void canonicalize(SymmetricEigen<Scalar>& e) {
  const Eigen::Index m = e.values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return e.values[a] > e.values[b]; });
  SymmetricEigen<Scalar> sorted;
  sorted.sweeps = e.sweeps;
  sorted.values.resize(m);
  sorted.vectors.resize(e.vectors.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    sorted.values[k] = e.values[src];
    auto v = e.vectors.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    sorted.vectors.col(k) = v[arg] < Scalar(0) ? VectorX<Scalar>(-v) : VectorX<Scalar>(v);
  }
  e = std::move(sorted);
}

}  // namespace detail

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> eig_sym(const Eigen::MatrixBase<Derived>& c_in,
                                                 const JacobiOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  const Eigen::Index m = c_in.rows();
  if (c_in.cols() != m) throw std::invalid_argument("eig_sym: matrix is not square");
  MatrixX<Scalar> a = c_in;
  const Scalar norm = a.norm();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-9) * std::max(norm, Scalar(1)))
    throw std::invalid_argument("eig_sym: matrix is not symmetric");

  SymmetricEigen<Scalar> out;
  out.vectors = MatrixX<Scalar>::Identity(m, m);
  const Scalar limit = Scalar(opts.tolerance) * norm;

  auto max_off = [&] {
    Scalar worst(0);
    for (Eigen::Index q = 1; q < m; ++q)
      for (Eigen::Index p = 0; p < q; ++p) worst = std::max(worst, abs(a(p, q)));
    return worst;
  };

  while (out.sweeps < opts.max_sweeps && max_off() > limit) {
    ++out.sweeps;
    for (Eigen::Index p = 0; p + 1 < m; ++p) {
      for (Eigen::Index q = p + 1; q < m; ++q) {
        const Scalar apq = a(p, q);
        if (abs(apq) <= limit * Scalar(1e-3)) {
          a(p, q) = a(q, p) = Scalar(0);
          continue;
        }
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= Scalar(0) ? Scalar(1) : Scalar(-1)) / (abs(theta) + sqrt(theta * theta + Scalar(1)));
        const Scalar cs = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar sn = t * cs;
        // A <- J^T A J with J the (p, q) rotation.
        for (Eigen::Index k = 0; k < m; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (Eigen::Index k = 0; k < m; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        a(p, q) = a(q, p) = Scalar(0);
        for (Eigen::Index k = 0; k < m; ++k) {
          const Scalar vkp = out.vectors(k, p);
          const Scalar vkq = out.vectors(k, q);
          out.vectors(k, p) = cs * vkp - sn * vkq;
          out.vectors(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }
  out.values = a.diagonal();
  detail::canonicalize(out);
  return out;
}

/// Eigenpairs of the covariance of `x` (n x m, normalized) through the n x n Gram
/// matrix. Returns all m eigenvalues; eigenvectors only for the nonzero ones
/// (columns beyond the rank are zero).
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> eig_covariance_gram(const Eigen::MatrixBase<Derived>& x,
                                                             const JacobiOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  if (n < 2) throw std::invalid_argument("eig_covariance_gram: need at least 2 rows");
  MatrixX<Scalar> gram = (x * x.transpose()) / Scalar(n - 1);
  gram = (gram + gram.transpose()) / Scalar(2);
  const auto small = eig_sym(gram, opts);

  SymmetricEigen<Scalar> out;
  out.sweeps = small.sweeps;
  out.values = VectorX<Scalar>::Zero(m);
  out.vectors = MatrixX<Scalar>::Zero(m, m);
  const Scalar top = small.values.size() > 0 ? std::max(small.values[0], Scalar(0)) : Scalar(0);
  for (Eigen::Index k = 0; k < std::min(n, m); ++k) {
    const Scalar mu = small.values[k];
    if (!(mu > Scalar(1e-12) * top)) continue;
    out.values[k] = mu;
    VectorX<Scalar> v = x.transpose() * small.vectors.col(k);
    v /= v.norm();
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < Scalar(0)) v = -v;
    out.vectors.col(k) = v;
  }
  return out;
}

/// Baseline model: group scaling, retained loadings and the full spectrum.
struct PcaModel {
  ScalingParams scaling;
  Eigen::MatrixXd loadings;  // m x r, orthonormal columns
  Eigen::VectorXd eigvals;   // length m, descending, >= 0
  Eigen::Index retained = 0;
  double variance_threshold = 0.95;
  Eigen::Index trained_n = 0;

  Eigen::Index width() const { return scaling.col_means.size(); }
};

/// Smallest r whose leading eigenvalues reach `threshold` of the total (at least 1).
Eigen::Index retained_components(const Eigen::VectorXd& eigvals, double threshold);

PcaModel fit_pca(const Eigen::MatrixXd& x_raw, std::span<const int> col_groups, double variance_threshold);
PcaModel fit_pca(const FeatureMatrix& x_raw, double variance_threshold);

/// Scores T = normalize(x) Xi for each row.
Eigen::MatrixXd project(const PcaModel& model, const Eigen::MatrixXd& x_raw);
/// Back-projection T Xi^T, in normalized space.
Eigen::MatrixXd reconstruct(const PcaModel& model, const Eigen::MatrixXd& scores);
/// Squared prediction error x (I - Xi Xi^T) x^T of each (normalized) row.
Eigen::VectorXd spe(const PcaModel& model, const Eigen::MatrixXd& x_raw);
double spe(const PcaModel& model, const Eigen::RowVectorXd& x_raw);
/// Same statistic as the squared norm of normalize(x) - reconstruct(project(x)).
Eigen::VectorXd spe_residual_norm(const PcaModel& model, const Eigen::MatrixXd& x_raw);

}  // namespace aubase

#pragma once

// Periodic Mallat filter-bank DWT. Everything numeric is templated on the
// scalar type; `extract_features` is the double-precision entry point used by
// the pipeline.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace aubase {

struct SignalRecord;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct FilterBank {
  std::string name;
  VectorX<Scalar> lowpass;   // scaling side
  VectorX<Scalar> highpass;  // wavelet side, g[k] = (-1)^k h[L-1-k]

  Eigen::Index length() const { return lowpass.size(); }
};

/// Builds the quadrature-mirror high-pass filter for an orthonormal low-pass.
template <typename Scalar>
FilterBank<Scalar> make_orthonormal_bank(std::string name, const VectorX<Scalar>& lowpass) {
  const Eigen::Index n = lowpass.size();
  VectorX<Scalar> highpass(n);
  for (Eigen::Index k = 0; k < n; ++k) highpass[k] = (k % 2 == 0 ? Scalar(1) : Scalar(-1)) * lowpass[n - 1 - k];
  return {std::move(name), lowpass, std::move(highpass)};
}

/// Daubechies wavelet with 8 vanishing moments (16 taps).
template <typename Scalar = double>
FilterBank<Scalar> db8() {
  VectorX<Scalar> h(16);
  h << Scalar(-0.00011747678412476953373), Scalar(0.00067544940645056936637),
      Scalar(-0.0003917403733769470463), Scalar(-0.0048703529934515743104), Scalar(0.0087460940474057767164),
      Scalar(0.013981027917398281649), Scalar(-0.044088253930794751507), Scalar(-0.01736930100180754617),
      Scalar(0.12874742662047845886), Scalar(0.00047248457391328277036), Scalar(-0.28401554296154692652),
      Scalar(-0.015829105256349305667), Scalar(0.58535468365420671277), Scalar(0.67563073629728980681),
      Scalar(0.31287159091429997066), Scalar(0.054415842243104009955);
  return make_orthonormal_bank<Scalar>("db8", h);
}

template <typename Scalar = double>
struct WaveletDecomposition {
  int level = 0;
  VectorX<Scalar> approx;               // deepest-level approximation
  std::vector<VectorX<Scalar>> details;  // details[0] is level 1
  Eigen::Index original_length = 0;
};

/// One analysis stage: periodic convolution followed by keeping every second output.
template <typename Scalar>
void analysis_step(const VectorX<Scalar>& x, const FilterBank<Scalar>& bank, VectorX<Scalar>& approx,
                   VectorX<Scalar>& detail) {
  const Eigen::Index n = x.size();
  const Eigen::Index half = n / 2;
  const Eigen::Index taps = bank.length();
  approx.setZero(half);
  detail.setZero(half);
  for (Eigen::Index k = 0; k < half; ++k) {
    Scalar a(0), d(0);
    for (Eigen::Index i = 0; i < taps; ++i) {
      const Scalar v = x[(2 * k + i) % n];
      a += bank.lowpass[i] * v;
      d += bank.highpass[i] * v;
    }
    approx[k] = a;
    detail[k] = d;
  }
}

/// Adjoint of `analysis_step`; exact inverse for orthonormal banks.
template <typename Scalar>
VectorX<Scalar> synthesis_step(const VectorX<Scalar>& approx, const VectorX<Scalar>& detail,
                               const FilterBank<Scalar>& bank) {
  if (approx.size() != detail.size()) throw std::invalid_argument("idwt: approximation/detail size mismatch");
  const Eigen::Index half = approx.size();
  const Eigen::Index n = 2 * half;
  const Eigen::Index taps = bank.length();
  VectorX<Scalar> x = VectorX<Scalar>::Zero(n);
  for (Eigen::Index k = 0; k < half; ++k) {
    for (Eigen::Index i = 0; i < taps; ++i) {
      x[(2 * k + i) % n] += bank.lowpass[i] * approx[k] + bank.highpass[i] * detail[k];
    }
  }
  return x;
}

template <typename Derived>
WaveletDecomposition<typename Derived::Scalar> dwt(const Eigen::MatrixBase<Derived>& x, int level,
                                                   const FilterBank<typename Derived::Scalar>& bank) {
  using Scalar = typename Derived::Scalar;
  if (level < 1) throw std::invalid_argument("dwt: level must be >= 1");
  const Eigen::Index n = x.size();
  if (level >= 63 || n == 0 || n % (Eigen::Index(1) << level) != 0)
    throw std::invalid_argument("dwt: length " + std::to_string(n) + " not divisible by 2^" +
                                std::to_string(level));
  WaveletDecomposition<Scalar> out;
  out.level = level;
  out.original_length = n;
  VectorX<Scalar> current = x;
  for (int l = 0; l < level; ++l) {
    VectorX<Scalar> a, d;
    analysis_step(current, bank, a, d);
    out.details.push_back(std::move(d));
    current = std::move(a);
  }
  out.approx = std::move(current);
  return out;
}

template <typename Scalar>
VectorX<Scalar> idwt(const WaveletDecomposition<Scalar>& d, const FilterBank<Scalar>& bank) {
  if (d.level < 1 || static_cast<int>(d.details.size()) != d.level)
    throw std::invalid_argument("idwt: level does not match detail count");
  if (d.approx.size() * (Eigen::Index(1) << d.level) != d.original_length)
    throw std::invalid_argument("idwt: approximation length inconsistent with original length");
  VectorX<Scalar> current = d.approx;
  for (int l = d.level - 1; l >= 0; --l) current = synthesis_step(current, d.details[l], bank);
  return current;
}

/// Shannon entropy (natural log) of the normalized coefficient energies.
template <typename Derived>
typename Derived::Scalar shannon_entropy(const Eigen::MatrixBase<Derived>& coeffs) {
  using Scalar = typename Derived::Scalar;
  const Scalar total = coeffs.squaredNorm();
  if (!(total > Scalar(0))) throw std::invalid_argument("shannon_entropy: all-zero coefficients");
  Scalar h(0);
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    const Scalar p = coeffs(i) * coeffs(i) / total;
    if (p > Scalar(0)) h -= p * std::log(p);
  }
  return h;
}

/// Level in [1, max_level] whose approximation has minimum entropy; ties go to the deeper level.
template <typename Derived>
int select_level(const Eigen::MatrixBase<Derived>& x, const FilterBank<typename Derived::Scalar>& bank,
                 int max_level) {
  using Scalar = typename Derived::Scalar;
  if (max_level < 1) throw std::invalid_argument("select_level: max_level must be >= 1");
  if (max_level >= 63 || x.size() == 0 || x.size() % (Eigen::Index(1) << max_level) != 0)
    throw std::invalid_argument("select_level: length not divisible by 2^max_level");
  VectorX<Scalar> current = x;
  int best = 1;
  Scalar best_entropy = std::numeric_limits<Scalar>::infinity();
  for (int l = 1; l <= max_level; ++l) {
    VectorX<Scalar> a, d;
    analysis_step(current, bank, a, d);
    current = std::move(a);
    const Scalar h = shannon_entropy(current);
    if (h <= best_entropy) {
      best_entropy = h;
      best = l;
    }
  }
  return best;
}

/// Zero-pads at the tail to the next multiple of 2^level.
Eigen::VectorXd pad_to_level(const Eigen::VectorXd& x, int level);

/// Deepest-level approximation coefficients of the (padded) record.
Eigen::VectorXd extract_features(const SignalRecord& record, int level, const FilterBank<double>& bank);

/// Deepest level whose approximation band [0, fs / 2^(level+1)] still holds the
/// carrier with 20 % headroom. Gives 8 for 50 MHz sampling of a 50 kHz burst.
int band_limited_max_level(double sample_rate_hz, double carrier_hz);

}  // namespace aubase

#include "aubase/wavelet.hpp"

#include "aubase/signals.hpp"

#include <cmath>

namespace aubase {

Eigen::VectorXd pad_to_level(const Eigen::VectorXd& x, int level) {
  if (level < 1) throw std::invalid_argument("pad_to_level: level must be >= 1");
  const Eigen::Index block = Eigen::Index(1) << level;
  const Eigen::Index padded = ((x.size() + block - 1) / block) * block;
  if (padded == x.size()) return x;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(padded);
  out.head(x.size()) = x;
  return out;
}

Eigen::VectorXd extract_features(const SignalRecord& record, int level, const FilterBank<double>& bank) {
  return dwt(pad_to_level(record.samples, level), level, bank).approx;
}

int band_limited_max_level(double sample_rate_hz, double carrier_hz) {
  if (!(sample_rate_hz > 0.0 && carrier_hz > 0.0))
    throw std::invalid_argument("band_limited_max_level: rates must be positive");
  const double ratio = sample_rate_hz / (1.2 * carrier_hz);
  const int level = static_cast<int>(std::floor(std::log2(ratio))) - 1;
  return level < 1 ? 1 : level;
}

}  // namespace aubase

#pragma once

#include <span>
#include <string>
#include <vector>

namespace aubase {

struct RocPoint {
  double threshold;  // decision rule: positive iff score >= threshold
  double fpr;
  double tpr;
};

/// Points run from threshold +inf at (0, 0) to the lowest score at (1, 1).
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  int n_pos = 0;
  int n_neg = 0;
};

/// Higher score = more damage-like; `labels[i]` true for damage.
RocCurve roc(std::span<const double> scores, const std::vector<bool>& labels);

/// Fraction of negatives scoring strictly above `threshold`.
double fpr_at(std::span<const double> scores, const std::vector<bool>& labels, double threshold);

/// Lowest false-positive rate among operating points reaching `tpr_target`.
double fpr_at_tpr(const RocCurve& curve, double tpr_target);

struct AucComparison {
  double delta = 0.0;  // auc(a) - auc(b)
  std::string dominant;  // "a", "b" or "tie"
};

AucComparison compare_auc(const RocCurve& a, const RocCurve& b);

/// Linear-interpolation percentile, p in [0, 1].
double percentile(std::vector<double> values, double p);

/// Fraction of items whose predicted cluster maps to their true class under the
/// best one-to-one matching of clusters to classes.
double label_agreement(std::span<const int> predicted, std::span<const int> truth);

}  // namespace aubase

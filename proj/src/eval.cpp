#include "aubase/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace aubase {

RocCurve roc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc: scores and labels differ in length");
  RocCurve curve;
  for (bool l : labels) (l ? curve.n_pos : curve.n_neg) += 1;
  if (curve.n_pos == 0 || curve.n_neg == 0) throw std::invalid_argument("roc: need both positive and negative labels");
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("roc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  int tp = 0, fp = 0;
  double auc = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const int tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
    // Trapezoid between successive points; tied scores produce a diagonal step.
    auc += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
    curve.points.push_back({s, static_cast<double>(fp) / curve.n_neg, static_cast<double>(tp) / curve.n_pos});
  }
  curve.auc = auc / (static_cast<double>(curve.n_pos) * curve.n_neg);
  return curve;
}

double fpr_at(std::span<const double> scores, const std::vector<bool>& labels, double threshold) {
  if (scores.size() != labels.size()) throw std::invalid_argument("fpr_at: scores and labels differ in length");
  int neg = 0, above = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) continue;
    ++neg;
    if (scores[i] > threshold) ++above;
  }
  if (neg == 0) throw std::invalid_argument("fpr_at: no negatives");
  return static_cast<double>(above) / neg;
}

double fpr_at_tpr(const RocCurve& curve, double tpr_target) {
  double best = 1.0;
  for (const auto& p : curve.points)
    if (p.tpr >= tpr_target) best = std::min(best, p.fpr);
  return best;
}

AucComparison compare_auc(const RocCurve& a, const RocCurve& b) {
  if (a.n_pos != b.n_pos || a.n_neg != b.n_neg)
    throw std::invalid_argument("compare_auc: curves are not over the same experiments");
  AucComparison c;
  c.delta = a.auc - b.auc;
  c.dominant = c.delta > 0.0 ? "a" : (c.delta < 0.0 ? "b" : "tie");
  return c;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double label_agreement(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("label_agreement: length mismatch");
  if (predicted.empty()) return 1.0;
  std::map<int, int> pred_index, true_index;
  for (int p : predicted) pred_index.emplace(p, static_cast<int>(pred_index.size()));
  for (int t : truth) true_index.emplace(t, static_cast<int>(true_index.size()));
  // Re-number in sorted order so results do not depend on first appearance.
  int k = 0;
  for (auto& [key, idx] : pred_index) idx = k++;
  k = 0;
  for (auto& [key, idx] : true_index) idx = k++;

  const int kp = static_cast<int>(pred_index.size());
  const int kt = static_cast<int>(true_index.size());
  std::vector<std::vector<int>> table(static_cast<std::size_t>(kp), std::vector<int>(static_cast<std::size_t>(kt), 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) table[pred_index[predicted[i]]][true_index[truth[i]]] += 1;

  int matched = 0;
  if (kt <= 16) {
    // Exact maximum-weight matching: DP over the set of classes already used.
    const std::size_t states = std::size_t{1} << kt;
    std::vector<int> best(states, -1), next(states, -1);
    best[0] = 0;
    for (int c = 0; c < kp; ++c) {
      next = best;
      for (std::size_t mask = 0; mask < states; ++mask) {
        if (best[mask] < 0) continue;
        for (int t = 0; t < kt; ++t) {
          if (mask & (std::size_t{1} << t)) continue;
          const auto to = mask | (std::size_t{1} << t);
          next[to] = std::max(next[to], best[mask] + table[c][t]);
        }
      }
      best.swap(next);
    }
    matched = *std::max_element(best.begin(), best.end());
  } else {
    // Greedy on the largest remaining cell.
    std::vector<bool> used_p(static_cast<std::size_t>(kp)), used_t(static_cast<std::size_t>(kt));
    while (true) {
      int bp = -1, bt = -1, bv = 0;
      for (int c = 0; c < kp; ++c)
        for (int t = 0; t < kt; ++t)
          if (!used_p[c] && !used_t[t] && table[c][t] > bv) bp = c, bt = t, bv = table[c][t];
      if (bp < 0) break;
      used_p[bp] = used_t[bt] = true;
      matched += bv;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(predicted.size());
}

}  // namespace aubase

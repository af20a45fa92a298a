#include "aubase/ds2l.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace aubase {

bool EnrichedSom::linked(Eigen::Index i, Eigen::Index j) const {
  if (i == j) return false;
  if (v(i, j) > 0.0) return true;
  return lattice_links && represents_data(i) && represents_data(j) && base.lattice_distance(i, j) == 1.0;
}

double mean_nearest_weight_distance(const SomModel& model) {
  const Eigen::Index m = model.units();
  if (m < 2) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) best = std::min(best, (model.weights.row(i) - model.weights.row(j)).squaredNorm());
    total += std::sqrt(best);
  }
  return total / static_cast<double>(m);
}

EnrichedSom enrich(const SomModel& model, const Eigen::MatrixXd& data, std::optional<double> bandwidth) {
  if (data.rows() == 0) throw std::invalid_argument("enrich: empty data");
  const Eigen::Index m = model.units();
  const Eigen::Index n = data.rows();
  EnrichedSom e;
  e.base = model;
  e.v = Eigen::MatrixXd::Zero(m, m);
  e.hits = Eigen::VectorXi::Zero(m);
  e.variability = Eigen::VectorXd::Zero(m);
  e.data_bmus.reserve(static_cast<std::size_t>(n));

  const double decrement = 1.0 / static_cast<double>(m);
  double qe_total = 0.0;
  std::vector<Eigen::Index> first(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto u = bmu(model, data.row(k));
    first[static_cast<std::size_t>(k)] = u;
    e.hits[u] += 1;
    const double dist = (model.weights.row(u) - data.row(k)).norm();
    e.variability[u] += dist;
    qe_total += dist;
  }
  // The second BMU is taken among units that represent data: an empty unit
  // sitting inside a cluster would otherwise absorb the connection. With a
  // single represented unit it falls back to the plain second-closest unit.
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto u = first[static_cast<std::size_t>(k)];
    Eigen::Index second = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == u || e.hits[j] == 0) continue;
      const double d = (model.weights.row(j) - data.row(k)).squaredNorm();
      if (d < best) {
        best = d;
        second = j;
      }
    }
    if (second < 0 && m > 1) second = second_bmu(model, data.row(k));
    e.data_bmus.emplace_back(u, second);
    if (second < 0) continue;
    e.v(u, second) += 1.0;
    e.v(second, u) = e.v(u, second);
    for (Eigen::Index nb : model.lattice_neighbours(u)) {
      if (nb == second) continue;
      e.v(u, nb) = std::max(0.0, e.v(u, nb) - decrement);
      e.v(nb, u) = e.v(u, nb);
    }
  }
  for (Eigen::Index i = 0; i < m; ++i)
    if (e.hits[i] > 0) e.variability[i] /= e.hits[i];

  double rho = bandwidth.value_or(0.0);
  if (!(rho > 0.0)) rho = mean_nearest_weight_distance(model);
  if (!(rho > 0.0)) rho = qe_total / static_cast<double>(n);
  if (!(rho > 0.0)) rho = 1.0;  // every weight and datum coincide
  e.bandwidth = rho;

  const double norm = 1.0 / (rho * std::sqrt(2.0 * std::numbers::pi));
  e.density = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double d2 = (model.weights.row(i) - data.row(k)).squaredNorm();
      acc += std::exp(-d2 / (2.0 * rho * rho));
    }
    e.density[i] = acc / static_cast<double>(n) * norm;
  }
  return e;
}

std::vector<std::vector<Eigen::Index>> connected_components(const EnrichedSom& e) {
  const Eigen::Index m = e.units();
  std::vector<int> label(static_cast<std::size_t>(m), -1);
  std::vector<std::vector<Eigen::Index>> out;
  for (Eigen::Index start = 0; start < m; ++start) {
    if (!e.represents_data(start) || label[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = static_cast<int>(out.size());
    std::vector<Eigen::Index> members;
    std::vector<Eigen::Index> stack{start};
    label[static_cast<std::size_t>(start)] = id;
    while (!stack.empty()) {
      const Eigen::Index u = stack.back();
      stack.pop_back();
      members.push_back(u);
      for (Eigen::Index w = 0; w < m; ++w) {
        if (e.represents_data(w) && e.linked(u, w) && label[static_cast<std::size_t>(w)] < 0) {
          label[static_cast<std::size_t>(w)] = id;
          stack.push_back(w);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

namespace {

// Strict "denser" order: higher density first, lower index on ties.
bool denser(const EnrichedSom& e, Eigen::Index a, Eigen::Index b) {
  if (e.density[a] != e.density[b]) return e.density[a] > e.density[b];
  return a < b;
}

Eigen::Index densest(const EnrichedSom& e, const std::vector<Eigen::Index>& units) {
  Eigen::Index best = units.front();
  for (auto u : units)
    if (denser(e, u, best)) best = u;
  return best;
}

}  // namespace

std::vector<SubCluster> watershed_split(const EnrichedSom& e, std::span<const Eigen::Index> component) {
  std::vector<Eigen::Index> order(component.begin(), component.end());
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return denser(e, a, b); });

  std::map<Eigen::Index, int> assigned;
  std::vector<SubCluster> subs;
  for (Eigen::Index u : order) {
    Eigen::Index best = -1;
    for (const auto& [w, sub] : assigned) {
      if (e.linked(u, w) && (best < 0 || denser(e, w, best))) best = w;
    }
    if (best < 0) {
      assigned[u] = static_cast<int>(subs.size());
      subs.push_back({{u}, u});
    } else {
      const int sub = assigned.at(best);
      assigned[u] = sub;
      subs[static_cast<std::size_t>(sub)].units.push_back(u);
    }
  }
  for (auto& s : subs) std::sort(s.units.begin(), s.units.end());
  return subs;
}

std::optional<double> border_density(const EnrichedSom& e, const SubCluster& a, const SubCluster& b) {
  std::optional<double> best;
  for (auto i : a.units) {
    for (auto j : b.units) {
      if (e.linked(i, j)) {
        const double d = std::min(e.density[i], e.density[j]);
        if (!best || d > *best) best = d;
      }
    }
  }
  return best;
}

bool merge_check(const EnrichedSom& e, const SubCluster& a, const SubCluster& b, double theta) {
  const auto border = border_density(e, a, b);
  if (!border) throw std::invalid_argument("merge_check: clusters are not adjacent");
  const double da = e.density[a.mode];
  const double db = e.density[b.mode];
  const double harmonic = (da > 0.0 && db > 0.0) ? 2.0 / (1.0 / da + 1.0 / db) : 0.0;
  return *border >= theta * harmonic;
}

ClusterPartition cluster(const EnrichedSom& e, const ClusterOptions& options) {
  std::vector<SubCluster> groups;
  for (const auto& comp : connected_components(e)) {
    auto subs = watershed_split(e, comp);
    groups.insert(groups.end(), std::make_move_iterator(subs.begin()), std::make_move_iterator(subs.end()));
  }

  // Merge rounds: every pair is tested against the state at the start of the
  // round, so the examination order cannot change the fixpoint.
  std::mt19937_64 shuffler(options.pair_order_seed.value_or(0));
  while (true) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t b = a + 1; b < groups.size(); ++b)
        if (border_density(e, groups[a], groups[b])) pairs.emplace_back(a, b);
    if (options.pair_order_seed) std::shuffle(pairs.begin(), pairs.end(), shuffler);

    std::vector<std::size_t> parent(groups.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    bool merged = false;
    for (const auto& [a, b] : pairs) {
      if (merge_check(e, groups[a], groups[b], options.theta)) {
        const auto ra = find(a), rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
        merged = true;
      }
    }
    if (!merged) break;

    std::map<std::size_t, SubCluster> joined;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      auto& target = joined[find(g)];
      target.units.insert(target.units.end(), groups[g].units.begin(), groups[g].units.end());
    }
    groups.clear();
    for (auto& [root, g] : joined) {
      std::sort(g.units.begin(), g.units.end());
      g.mode = densest(e, g.units);
      groups.push_back(std::move(g));
    }
  }

  std::sort(groups.begin(), groups.end(),
            [](const SubCluster& a, const SubCluster& b) { return a.units.front() < b.units.front(); });
  ClusterPartition p;
  p.k = static_cast<int>(groups.size());
  p.unit_label.assign(static_cast<std::size_t>(e.units()), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (auto u : groups[g].units) p.unit_label[static_cast<std::size_t>(u)] = static_cast<int>(g);
    p.mode_units.push_back(groups[g].mode);
  }
  p.datum_label.reserve(e.data_bmus.size());
  for (const auto& [first, second] : e.data_bmus) p.datum_label.push_back(p.unit_label[static_cast<std::size_t>(first)]);
  const auto min_size =
      static_cast<int>(std::ceil(options.min_cluster_fraction * static_cast<double>(e.data_bmus.size())));
  return min_size > 1 ? absorb_small_clusters(e, p, min_size) : p;
}

ClusterPartition absorb_small_clusters(const EnrichedSom& e, const ClusterPartition& p, int min_size) {
  std::vector<int> size(static_cast<std::size_t>(p.k), 0);
  for (int label : p.datum_label)
    if (label >= 0) ++size[static_cast<std::size_t>(label)];
  std::vector<int> relabel(static_cast<std::size_t>(p.k), -1);
  int kept = 0;
  for (int c = 0; c < p.k; ++c)
    if (size[static_cast<std::size_t>(c)] >= min_size) relabel[static_cast<std::size_t>(c)] = kept++;
  if (kept == 0 || kept == p.k) return p;

  const auto& w = e.base.weights;
  ClusterPartition out;
  out.k = kept;
  out.unit_label.assign(p.unit_label.size(), -1);
  for (std::size_t u = 0; u < p.unit_label.size(); ++u) {
    const int old = p.unit_label[u];
    if (old < 0) continue;
    if (relabel[static_cast<std::size_t>(old)] >= 0) {
      out.unit_label[u] = relabel[static_cast<std::size_t>(old)];
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p.unit_label.size(); ++j) {
      const int lj = p.unit_label[j];
      if (lj < 0 || relabel[static_cast<std::size_t>(lj)] < 0) continue;
      const double d = (w.row(static_cast<Eigen::Index>(u)) - w.row(static_cast<Eigen::Index>(j))).squaredNorm();
      if (d < best) {
        best = d;
        out.unit_label[u] = relabel[static_cast<std::size_t>(lj)];
      }
    }
  }
  for (int c = 0; c < p.k; ++c)
    if (relabel[static_cast<std::size_t>(c)] >= 0) out.mode_units.push_back(p.mode_units[static_cast<std::size_t>(c)]);
  out.datum_label.reserve(e.data_bmus.size());
  for (const auto& [first, second] : e.data_bmus) out.datum_label.push_back(out.unit_label[static_cast<std::size_t>(first)]);
  return out;
}

}  // namespace aubase

#pragma once

// Density-based simultaneous two-level clustering on top of a trained SOM:
// BMU-pair connections, per-unit density and variability, connected
// components, watershed sub-clusters on density, and density-based merging.

#include "aubase/som.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace aubase {

struct EnrichedSom {
  SomModel base;
  Eigen::MatrixXd v;            // symmetric neighbourhood values, zero diagonal
  Eigen::VectorXd density;      // D_i
  Eigen::VectorXd variability;  // s_i, 0 for units representing no data
  Eigen::VectorXi hits;         // data count per unit (as first BMU)
  double bandwidth = 0.0;
  /// Per datum: first BMU and the second BMU used for its connection (closest
  /// other unit that represents data; -1 on a one-unit map).
  std::vector<std::pair<Eigen::Index, Eigen::Index>> data_bmus;
  /// Also link lattice neighbours that both represent data. With a few data
  /// per unit the BMU-pair graph alone breaks a single cloud into pieces.
  bool lattice_links = true;

  Eigen::Index units() const { return base.units(); }
  bool represents_data(Eigen::Index i) const { return hits[i] > 0; }
  /// Edge of the clustering graph: v > 0, or a lattice link when enabled.
  bool linked(Eigen::Index i, Eigen::Index j) const;
};

/// Mean distance from each weight vector to its nearest other weight vector.
double mean_nearest_weight_distance(const SomModel& model);

/// `bandwidth` <= 0 or absent selects the mean nearest-neighbour weight distance.
EnrichedSom enrich(const SomModel& model, const Eigen::MatrixXd& data, std::optional<double> bandwidth = {});

/// Units (representing data) grouped into maximal components of the `linked` graph.
std::vector<std::vector<Eigen::Index>> connected_components(const EnrichedSom& e);

struct SubCluster {
  std::vector<Eigen::Index> units;  // ascending
  Eigen::Index mode = -1;           // density peak
};

/// Descending-density region growing on the `linked` graph restricted to `component`.
std::vector<SubCluster> watershed_split(const EnrichedSom& e, std::span<const Eigen::Index> component);

/// Highest min(D_i, D_j) over connected pairs straddling the border; nullopt if not adjacent.
std::optional<double> border_density(const EnrichedSom& e, const SubCluster& a, const SubCluster& b);

/// Merge iff border density >= theta * 2 / (1/D_modeA + 1/D_modeB).
/// Throws std::invalid_argument when the two groups are not adjacent.
bool merge_check(const EnrichedSom& e, const SubCluster& a, const SubCluster& b, double theta);

struct ClusterPartition {
  int k = 0;
  std::vector<int> unit_label;   // -1: represents no data
  std::vector<int> datum_label;  // label of each datum's BMU
  std::vector<Eigen::Index> mode_units;
};

struct ClusterOptions {
  double theta = 0.5;
  /// Clusters with fewer than ceil(fraction * N) data are absorbed at the end; 0 disables.
  double min_cluster_fraction = 0.05;
  /// Shuffles the order adjacent pairs are examined in (results must not depend on it).
  std::optional<std::uint64_t> pair_order_seed;
};

ClusterPartition cluster(const EnrichedSom& e, const ClusterOptions& options = {});

/// Dissolves clusters holding fewer than `min_size` data: each of their units
/// joins the cluster of the nearest (weight distance) unit of a surviving
/// cluster. Labels of survivors keep their relative order. No-op when no
/// cluster reaches `min_size`.
ClusterPartition absorb_small_clusters(const EnrichedSom& e, const ClusterPartition& p, int min_size);

}  // namespace aubase

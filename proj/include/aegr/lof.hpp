#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "aegr/types.hpp"

namespace aegr::lof {

/// Guard used when every reachability distance in a neighborhood is zero:
/// the density becomes 1 / kZeroDistanceEpsilon instead of dividing by zero.
inline constexpr double kZeroDistanceEpsilon = 1e-10;
inline constexpr std::size_t kDefaultMinPts = 20;

/// All reference points within k_distance of a point, ties included.
struct Neighborhood {
  double k_distance = 0.0;
  std::vector<std::size_t> members;
  std::vector<double> distances;  // parallel to members
};

/// Exact Local Outlier Factor in novelty mode.
///
/// The reference set is fixed at fit time; queries are scored against it and
/// never against each other. A reference point is never its own neighbor.
/// Distances are Euclidean and neighbors are found by brute force.
class LofModel {
 public:
  /// Throws std::invalid_argument unless rows > min_pts >= 1 and cols >= 1.
  static LofModel fit(Matrix reference, std::size_t min_pts);

  std::size_t min_pts() const { return min_pts_; }
  std::size_t size() const { return static_cast<std::size_t>(reference_.rows()); }
  Eigen::Index dim() const { return reference_.cols(); }
  const Matrix& reference() const { return reference_; }

  double k_distance(std::size_t ref) const { return neighborhoods_.at(ref).k_distance; }
  const Neighborhood& neighborhood(std::size_t ref) const { return neighborhoods_.at(ref); }
  double reference_lrd(std::size_t ref) const { return lrd_.at(ref); }

  /// Neighborhood of an arbitrary point among the reference set.
  Neighborhood query_neighborhood(const RowVector& p) const;

  /// max(k-distance(o), d(p, o)).
  double reach_dist(const RowVector& p, std::size_t ref) const;

  /// Local reachability density of an arbitrary point.
  double lrd(const RowVector& p) const;

  /// LOF of one point; near 1 for inliers, larger for outliers.
  double score(const RowVector& p) const;

  /// One LOF score per query row. Width must match the reference set.
  Vector score(const Matrix& queries) const;

 private:
  LofModel() = default;
  double lrd_of(const Neighborhood& nb) const;

  Matrix reference_;
  std::size_t min_pts_ = 0;
  std::vector<Neighborhood> neighborhoods_;
  std::vector<double> lrd_;
};

/// Fits on `reference` and scores `queries`; convenience for one-shot use.
Vector fit_score(const Matrix& reference, const Matrix& queries, std::size_t min_pts);

/// CSV with header row_index,lof_score.
void write_scores_csv(const std::filesystem::path& path, const Vector& scores);

}  // namespace aegr::lof

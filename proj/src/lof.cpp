#include "aegr/lof.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace aegr::lof {

namespace {

// Distances from p to every reference row, optionally skipping one index.
Neighborhood neighborhood_of(const Matrix& reference, const RowVector& p, std::size_t min_pts,
                             std::optional<std::size_t> exclude) {
  const auto n = static_cast<std::size_t>(reference.rows());
  const Vector dist = (reference.rowwise() - p).rowwise().norm();

  std::vector<double> candidates;
  candidates.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (exclude && *exclude == i) continue;
    candidates.push_back(dist(static_cast<Eigen::Index>(i)));
  }
  if (candidates.size() < min_pts) {
    throw std::invalid_argument("reference set smaller than min_pts");
  }
  const auto kth = candidates.begin() + static_cast<std::ptrdiff_t>(min_pts - 1);
  std::nth_element(candidates.begin(), kth, candidates.end());

  Neighborhood nb;
  nb.k_distance = *kth;
  for (std::size_t i = 0; i < n; ++i) {
    if (exclude && *exclude == i) continue;
    const double d = dist(static_cast<Eigen::Index>(i));
    if (d <= nb.k_distance) {
      nb.members.push_back(i);
      nb.distances.push_back(d);
    }
  }
  return nb;
}

}  // namespace

LofModel LofModel::fit(Matrix reference, std::size_t min_pts) {
  if (min_pts < 1) throw std::invalid_argument("min_pts must be at least 1");
  if (reference.cols() < 1) throw std::invalid_argument("reference points need at least one dimension");
  if (static_cast<std::size_t>(reference.rows()) <= min_pts) {
    throw std::invalid_argument("LOF needs more than min_pts=" + std::to_string(min_pts) +
                                " reference points, got " + std::to_string(reference.rows()));
  }

  LofModel model;
  model.reference_ = std::move(reference);
  model.min_pts_ = min_pts;
  const std::size_t n = model.size();
  model.neighborhoods_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    model.neighborhoods_.push_back(neighborhood_of(
        model.reference_, model.reference_.row(static_cast<Eigen::Index>(i)), min_pts, i));
  }
  model.lrd_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) model.lrd_.push_back(model.lrd_of(model.neighborhoods_[i]));
  return model;
}

double LofModel::lrd_of(const Neighborhood& nb) const {
  double sum = 0.0;
  for (std::size_t j = 0; j < nb.members.size(); ++j) {
    sum += std::max(neighborhoods_[nb.members[j]].k_distance, nb.distances[j]);
  }
  return sum > 0.0 ? static_cast<double>(nb.members.size()) / sum : 1.0 / kZeroDistanceEpsilon;
}

Neighborhood LofModel::query_neighborhood(const RowVector& p) const {
  if (p.size() != dim()) throw std::invalid_argument("query width does not match reference width");
  return neighborhood_of(reference_, p, min_pts_, std::nullopt);
}

double LofModel::reach_dist(const RowVector& p, std::size_t ref) const {
  if (p.size() != dim()) throw std::invalid_argument("query width does not match reference width");
  return std::max(k_distance(ref), (p - reference_.row(static_cast<Eigen::Index>(ref))).norm());
}

double LofModel::lrd(const RowVector& p) const { return lrd_of(query_neighborhood(p)); }

double LofModel::score(const RowVector& p) const {
  const Neighborhood nb = query_neighborhood(p);
  const double own = lrd_of(nb);
  double sum = 0.0;
  for (const std::size_t o : nb.members) sum += lrd_[o] / own;
  return sum / static_cast<double>(nb.members.size());
}

Vector LofModel::score(const Matrix& queries) const {
  if (queries.cols() != dim()) {
    throw std::invalid_argument("queries have " + std::to_string(queries.cols()) +
                                " columns, reference set has " + std::to_string(dim()));
  }
  Vector out(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) out(i) = score(RowVector(queries.row(i)));
  return out;
}

Vector fit_score(const Matrix& reference, const Matrix& queries, std::size_t min_pts) {
  return LofModel::fit(reference, min_pts).score(queries);
}

void write_scores_csv(const std::filesystem::path& path, const Vector& scores) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "row_index,lof_score\n";
  for (Eigen::Index i = 0; i < scores.size(); ++i) out << i << ',' << scores(i) << '\n';
}

}  // namespace aegr::lof

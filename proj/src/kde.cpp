#include "aegr/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aegr::kde {

double silverman_bandwidth(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n == 0) throw std::invalid_argument("bandwidth of an empty sample");
  if (n == 1) return kDegenerateBandwidth;
  double mean = 0.0;
  for (const double v : sample) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const double v : sample) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) return kDegenerateBandwidth;
  return std::pow(4.0 / (3.0 * static_cast<double>(n)), 0.2) * sd;
}

std::vector<CurveSample> gaussian_kde_curve(std::span<const double> sample, std::size_t points) {
  if (points < 2) throw std::invalid_argument("KDE curve needs at least two points");
  const double h = silverman_bandwidth(sample);
  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  const double lo = *lo_it - 4.0 * h;
  const double hi = *hi_it + 4.0 * h;
  // Keep the grid at least as fine as h/2 so the trapezoid rule stays accurate.
  const double needed = std::ceil((hi - lo) / (0.5 * h)) + 1.0;
  points = std::max(points, static_cast<std::size_t>(std::min(needed, 100000.0)));
  const double step = (hi - lo) / static_cast<double>(points - 1);
  const double norm = 1.0 / (static_cast<double>(sample.size()) * h * std::sqrt(2.0 * std::numbers::pi));

  std::vector<CurveSample> curve;
  curve.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + step * static_cast<double>(i);
    double sum = 0.0;
    for (const double v : sample) {
      const double u = (x - v) / h;
      sum += std::exp(-0.5 * u * u);
    }
    curve.push_back({x, sum * norm});
  }
  return curve;
}

double trapezoid_integral(const std::vector<CurveSample>& curve) {
  double total = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    total += 0.5 * (curve[i].density + curve[i - 1].density) * (curve[i].x - curve[i - 1].x);
  }
  return total;
}

}  // namespace aegr::kde

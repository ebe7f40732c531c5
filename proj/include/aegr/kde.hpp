#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace aegr::kde {

/// (4 / 3n)^(1/5) * sample standard deviation. Falls back to
/// kDegenerateBandwidth when the sample has no spread.
double silverman_bandwidth(std::span<const double> sample);

inline constexpr double kDegenerateBandwidth = 1e-3;

struct CurveSample {
  double x;
  double density;
};

/// Gaussian KDE evaluated on at least `points` equally spaced samples covering the
/// data range padded by four bandwidths on each side, so the emitted curve
/// carries essentially all of the probability mass.
std::vector<CurveSample> gaussian_kde_curve(std::span<const double> sample, std::size_t points = 256);

/// Trapezoid rule over consecutive samples.
double trapezoid_integral(const std::vector<CurveSample>& curve);

}  // namespace aegr::kde

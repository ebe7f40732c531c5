#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace aegr::eval {

struct MetricResult {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

enum class Alternative { two_sided, greater, less };

struct WilcoxonResult {
  double w_statistic = 0.0;  // sum of signed ranks of a - b
  double w_plus = 0.0;       // sum of ranks of positive differences
  double p_value = 1.0;
  std::size_t n_effective = 0;
  bool exact = false;
};

/// Mann-Whitney probability that a random positive outscores a random
/// negative, ties counting one half. Throws unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision over a descending score sweep. Tied scores form a single
/// threshold so the result does not depend on their order. Throws if there
/// are no positives.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

MetricResult evaluate(std::span<const double> scores, std::span<const int> labels);

/// Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and |d| is ranked with average ranks for
/// ties. For up to kExactLimit non-zero differences the null distribution of
/// W+ is enumerated over all sign assignments of the actual ranks; above that
/// a tie-corrected normal approximation with continuity correction is used.
/// Throws std::invalid_argument on length mismatch or when every difference
/// is zero.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative = Alternative::two_sided);

inline constexpr std::size_t kExactLimit = 12;

struct CurvePoint {
  double threshold;
  double precision;
  double recall;
  double tpr;
  double fpr;
};

/// One point per distinct score, descending.
std::vector<CurvePoint> curve_points(std::span<const double> scores, std::span<const int> labels);
void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& points);

}  // namespace aegr::eval

#include "aegr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace aegr::eval {

namespace {

struct ScoreBlock {
  double score;
  std::size_t pos = 0;
  std::size_t neg = 0;
};

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length");
  }
  for (const int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
  for (const double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("scores contain NaN");
  }
}

// Groups of equal scores, highest score first.
std::vector<ScoreBlock> descending_blocks(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<ScoreBlock> blocks;
  for (const std::size_t i : order) {
    if (blocks.empty() || blocks.back().score != scores[i]) blocks.push_back({scores[i]});
    (labels[i] == 1 ? blocks.back().pos : blocks.back().neg) += 1;
  }
  return blocks;
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return {pos, labels.size() - pos};
}

// Average ranks (1-based) of |d|, ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& magnitudes) {
  std::vector<std::size_t> order(magnitudes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
  std::vector<double> ranks(magnitudes.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double standard_normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_auc needs both classes present");

  // Twice the Mann-Whitney U, kept integral.
  std::uint64_t twice_u = 0;
  std::size_t neg_above = 0;
  for (const auto& block : descending_blocks(scores, labels)) {
    const std::size_t neg_below = n_neg - neg_above - block.neg;
    twice_u += 2 * block.pos * neg_below + block.pos * block.neg;
    neg_above += block.neg;
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0) throw std::invalid_argument("pr_auc needs at least one positive");

  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& block : descending_blocks(scores, labels)) {
    tp += block.pos;
    fp += block.neg;
    if (block.pos == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += precision * static_cast<double>(block.pos) / static_cast<double>(n_pos);
  }
  return ap;
}

MetricResult evaluate(std::span<const double> scores, std::span<const int> labels) {
  MetricResult m;
  m.roc_auc = roc_auc(scores, labels);
  m.pr_auc = pr_auc(scores, labels);
  std::tie(m.n_pos, m.n_neg) = class_counts(labels);
  return m;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: samples differ in length");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (std::isnan(d)) throw std::invalid_argument("wilcoxon: NaN difference");
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw std::invalid_argument("all differences zero");

  const std::size_t n = diffs.size();
  std::vector<double> magnitudes(n);
  std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(magnitudes);

  WilcoxonResult result;
  result.n_effective = n;
  const double total = static_cast<double>(n * (n + 1)) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0) result.w_plus += ranks[i];
  }
  result.w_statistic = 2.0 * result.w_plus - total;

  double p_greater = 0.0;  // P(W+ >= observed)
  double p_less = 0.0;     // P(W+ <= observed)
  if (n <= kExactLimit) {
    result.exact = true;
    // Ranks are multiples of 1/2, so doubled ranks index an integer distribution.
    std::vector<std::size_t> doubled(n);
    std::size_t max_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
      max_sum += doubled[i];
    }
    std::vector<double> ways(max_sum + 1, 0.0);
    ways[0] = 1.0;
    for (const std::size_t r : doubled) {
      for (std::size_t s = max_sum; s >= r; --s) {
        ways[s] += ways[s - r];
        if (s == r) break;
      }
    }
    const double outcomes = std::ldexp(1.0, static_cast<int>(n));
    const auto observed = static_cast<std::size_t>(std::lround(2.0 * result.w_plus));
    for (std::size_t s = 0; s <= max_sum; ++s) {
      if (s >= observed) p_greater += ways[s];
      if (s <= observed) p_less += ways[s];
    }
    p_greater /= outcomes;
    p_less /= outcomes;
  } else {
    const double nd = static_cast<double>(n);
    const double mean = nd * (nd + 1.0) / 4.0;
    double tie_term = 0.0;
    auto sorted = magnitudes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
    const double sd = std::sqrt(nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0);
    p_greater = standard_normal_upper((result.w_plus - mean - 0.5) / sd);
    p_less = standard_normal_upper((mean - result.w_plus - 0.5) / sd);
  }

  switch (alternative) {
    case Alternative::greater: result.p_value = p_greater; break;
    case Alternative::less: result.p_value = p_less; break;
    case Alternative::two_sided: result.p_value = std::min(1.0, 2.0 * std::min(p_greater, p_less)); break;
  }
  result.p_value = std::clamp(result.p_value, 0.0, 1.0);
  return result;
}

std::vector<CurvePoint> curve_points(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  std::vector<CurvePoint> points;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& block : descending_blocks(scores, labels)) {
    tp += block.pos;
    fp += block.neg;
    CurvePoint p;
    p.threshold = block.score;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = n_pos ? static_cast<double>(tp) / static_cast<double>(n_pos) : 0.0;
    p.tpr = p.recall;
    p.fpr = n_neg ? static_cast<double>(fp) / static_cast<double>(n_neg) : 0.0;
    points.push_back(p);
  }
  return points;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "threshold,precision,recall,tpr,fpr\n";
  for (const auto& p : points) {
    out << p.threshold << ',' << p.precision << ',' << p.recall << ',' << p.tpr << ',' << p.fpr << '\n';
  }
}

}  // namespace aegr::eval

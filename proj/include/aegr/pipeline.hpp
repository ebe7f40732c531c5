#pragma once

#include <cstddef>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aegr/autoencoder.hpp"
#include "aegr/data.hpp"
#include "aegr/lof.hpp"
#include "aegr/types.hpp"

namespace aegr::pipeline {

enum class Detector { lof_raw, ae_re, ae_lof, aegr_lof };
enum class Modifier { none, prune, prune_da };

std::string to_string(Detector d);
std::string to_string(Modifier m);

struct VariantSpec {
  Detector detector = Detector::aegr_lof;
  Modifier modifier = Modifier::none;
  double aug_factor = 2.0;
  double aug_sigma = 0.1;
  std::uint64_t seed = 0;

  /// Modifiers apply only to the latent-LOF detectors.
  void validate() const;
  /// "detector/modifier", e.g. "aegr_lof/prune".
  std::string name() const;
  /// Filesystem-safe name, e.g. "aegr_lof-prune".
  std::string file_tag() const;
  /// Parses "detector" or "detector/modifier".
  static VariantSpec parse(const std::string& text);
};

/// The eight detector/modifier rows of the comparison matrix.
std::vector<VariantSpec> comparison_matrix();

struct PruneResult {
  Matrix kept;
  std::vector<bool> kept_mask;
  double mean_error = 0.0;
};

/// Keeps rows whose reconstruction error does not exceed the mean error.
PruneResult prune(const Matrix& latents, const Vector& errors);

/// Appends floor((factor - 1) * n) rows, each an original row taken in
/// cyclic order plus N(0, sigma^2) noise per coordinate. Original rows come
/// first and are unchanged.
Matrix augment(const Matrix& latents, double factor, double sigma, std::uint64_t seed);

struct PreparedData {
  data::Dataset train;
  data::Dataset val;
  data::Dataset test;
};

struct RunMetadata {
  std::size_t train_rows = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::size_t reversal_epochs = 0;
  std::size_t batch_size = 0;
  std::size_t reference_rows = 0;  // rows LOF was fitted on
  std::optional<std::size_t> pruned_rows;
  std::optional<std::size_t> augmented_rows;
  std::optional<double> mean_error_all;
  std::optional<double> mean_error_kept;
  std::optional<bool> errors_all_equal;
};

struct ScoredRun {
  VariantSpec variant;
  Vector scores;  // higher = more anomalous
  std::vector<int> labels;
  RunMetadata meta;

  // Latent-space runs keep what is needed for scatter/KDE export.
  std::optional<Matrix> train_latents;
  std::optional<std::vector<int>> train_labels;
  std::optional<std::vector<bool>> kept_mask;
  std::optional<ae::TrainHistory> history;
};

/// Thrown when a prune result violates its contract: survivors must have
/// mean error no larger than the overall mean, and the set must shrink
/// unless all errors are equal.
struct PruneContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

void check_prune_contract(const Vector& errors, const PruneResult& pruned);

/// Trains each distinct (config, data) autoencoder once and shares it.
/// Safe to call from several threads; concurrent requests for the same key
/// wait on a single training run. Entries are keyed on the config alone, so a
/// cache must only ever see one PreparedData.
class ModelCache {
 public:
  std::shared_ptr<const ae::TrainResult> get(const ae::TrainConfig& cfg, const PreparedData& data);

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_future<std::shared_ptr<const ae::TrainResult>>> entries_;
};

/// Trains the autoencoder used by every AE-based detector.
ae::TrainResult train_autoencoder(const ae::TrainConfig& cfg, const PreparedData& data);

/// Scores the test split with one detector/modifier combination.
///
/// lof_raw fits LOF on the normalized training features. ae_re scores by
/// reconstruction error. ae_lof and aegr_lof fit LOF on training latents,
/// optionally pruned by reconstruction error and augmented; ae_re and ae_lof
/// always train without reversal, aegr_lof uses `cfg` as given.
ScoredRun run_variant(const VariantSpec& spec, const PreparedData& data, const ae::TrainConfig& cfg,
                      std::size_t min_pts = lof::kDefaultMinPts, ModelCache* cache = nullptr);

}  // namespace aegr::pipeline

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "aegr/autoencoder.hpp"
#include "aegr/data.hpp"
#include "aegr/eval.hpp"
#include "aegr/pipeline.hpp"
#include "json.hpp"

namespace aegr::experiment {

inline constexpr int kPreparedFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

struct DatasetConfig {
  std::filesystem::path path;
  // When set, `path` is the training file and this is the held-out test file;
  // split.val is then the fraction of the training file used for validation.
  std::optional<std::filesystem::path> test_path;
  data::CsvSchema schema;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  data::SplitSpec split;
  ae::TrainConfig train;
  std::size_t min_pts = lof::kDefaultMinPts;
  double aug_factor = 2.0;
  double aug_sigma = 0.1;
  std::vector<pipeline::VariantSpec> variants = pipeline::comparison_matrix();
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::pair<std::string, std::string>> wilcoxon_pairs;
  std::filesystem::path output_dir = "out";

  /// Relative paths are resolved against `base_dir`. Unknown keys are errors.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Every effective setting, defaults included.
  nlohmann::json to_json() const;
  void validate() const;

  std::filesystem::path prepared_dir() const { return output_dir / "prepared"; }
};

struct PrepareSummary {
  std::size_t raw_features = 0;  // non-label columns before encoding
  std::size_t encoded_features = 0;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  std::size_t test_rows = 0;
  std::size_t train_positive = 0;
  std::size_t val_positive = 0;
  std::size_t test_positive = 0;
  std::string content_hash;
};

struct Prepared {
  pipeline::PreparedData data;
  data::NormParams norm;
  std::string content_hash;
};

/// Load, encode, split, subsample and normalize; writes
/// <out>/prepared/{train,val,test}.csv and meta.json.
PrepareSummary cmd_prepare(const ExperimentConfig& cfg, std::ostream& log);

/// Reads the artifacts written by cmd_prepare.
Prepared load_prepared(const std::filesystem::path& dir);

struct RunRow {
  pipeline::VariantSpec variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  eval::MetricResult metrics;
  pipeline::RunMetadata meta;
  double seconds = 0.0;
};

struct WilcoxonComparison {
  std::string a;
  std::string b;
  std::string metric;
  std::optional<eval::WilcoxonResult> result;
  std::string error;
};

struct RunReport {
  std::vector<RunRow> rows;
  std::vector<WilcoxonComparison> comparisons;
  nlohmann::json config;
  std::string dataset_hash;

  bool all_ok() const;
  /// Deterministic content plus a separate "metadata" block for timings.
  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

struct RunOptions {
  std::size_t jobs = 1;
};

/// Runs every (variant, seed) pair and writes report.json, report.md and the
/// per-run score, curve, latent and history files into the output directory.
RunReport cmd_run(const ExperimentConfig& cfg, const RunOptions& options, std::ostream& log);

/// Writes latent_scatter.csv and kde_curves.csv for one stored latent run.
void cmd_plotdata(const ExperimentConfig& cfg, const pipeline::VariantSpec& variant, std::uint64_t seed,
                  std::ostream& log);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

/// Shortest decimal that round-trips.
std::string format_double(double value);

}  // namespace aegr::experiment

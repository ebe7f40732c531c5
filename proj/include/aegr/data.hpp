#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aegr/types.hpp"

namespace aegr::data {

enum class ColumnKind { numeric, categorical, label, ignore };

std::string to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& name);

/// How to interpret the columns of a CSV file.
///
/// Columns can be addressed by header name or by zero-based index; an index
/// entry wins over a name entry. Anything unlisted gets `default_kind`.
/// `ignore` columns are dropped at load time and never reach a RawTable.
///
/// Label cells are mapped to {0,1}. With `label_normal_values` empty the cell
/// must parse as the number 0 or 1; otherwise a cell equal to one of the
/// listed values is normal (0) and every other value is an anomaly (1).
struct CsvSchema {
  bool has_header = true;
  std::map<std::string, ColumnKind> by_name;
  std::map<std::size_t, ColumnKind> by_index;
  ColumnKind default_kind = ColumnKind::numeric;
  std::vector<std::string> label_normal_values;
};

struct Column {
  std::string name;
  ColumnKind kind;
};

using Cell = std::variant<double, std::string>;

/// Parsed CSV contents. Numeric and label cells hold doubles (labels already
/// mapped to 0/1); categorical cells hold their raw string.
struct RawTable {
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t num_rows() const { return rows.size(); }
  std::optional<std::size_t> label_index() const;
};

struct Dataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> feature_names;

  std::size_t num_rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }
  bool has_labels() const { return labels.has_value(); }
  std::size_t count_positive() const;

  /// Rows selected by `indices`, in that order.
  Dataset select_rows(const std::vector<std::size_t>& indices) const;
};

struct NormParams {
  std::vector<double> min;
  std::vector<double> max;
};

struct SplitSpec {
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::optional<double> subsample_fraction;

  void validate() const;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Throws std::runtime_error on missing file, empty input, arity violations
/// (message names the 1-based data row) and unparsable numerics.
RawTable load_csv(const std::filesystem::path& path, const CsvSchema& schema);
RawTable parse_csv(const std::string& text, const CsvSchema& schema);

/// Categorical vocabulary learned from one table and replayable on others.
/// Vocabulary order is first appearance; a category unseen at fit time
/// encodes as an all-zero block.
class OneHotEncoder {
 public:
  static OneHotEncoder fit(const RawTable& table);

  Dataset apply(const RawTable& table) const;
  std::size_t encoded_width() const;
  const std::vector<Column>& columns() const { return columns_; }

 private:
  std::vector<Column> columns_;
  // Parallel to columns_; empty for non-categorical columns.
  std::vector<std::vector<std::string>> vocab_;
};

Dataset one_hot_encode(const RawTable& table);

NormParams normalize_fit(const Dataset& train);
/// Maps x to 2(x - min)/(max - min) - 1 with no clipping. Constant features
/// map to 0.
Dataset normalize_apply(const NormParams& params, const Dataset& data);
/// Inverse of normalize_apply for non-constant features.
Dataset denormalize(const NormParams& params, const Dataset& data);

/// Seeded shuffle partition. Sizes are floor(fraction * n) for val and test;
/// the remainder goes to train.
Splits split(const Dataset& data, const SplitSpec& spec);

Dataset subsample(const Dataset& train, double fraction, std::uint64_t seed);

}  // namespace aegr::data

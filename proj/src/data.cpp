#include "aegr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace aegr::data {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// RFC 4180-ish: double quotes group a field, "" inside quotes is a literal quote.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

ColumnKind resolve_kind(const CsvSchema& schema, std::size_t index, const std::string& name) {
  if (auto it = schema.by_index.find(index); it != schema.by_index.end()) return it->second;
  if (auto it = schema.by_name.find(name); it != schema.by_name.end()) return it->second;
  return schema.default_kind;
}

double parse_label(const std::string& cell, const CsvSchema& schema, std::size_t row) {
  if (!schema.label_normal_values.empty()) {
    const auto& normal = schema.label_normal_values;
    return std::find(normal.begin(), normal.end(), cell) != normal.end() ? 0.0 : 1.0;
  }
  const auto value = parse_double(cell);
  if (!value || (*value != 0.0 && *value != 1.0)) {
    throw std::runtime_error("row " + std::to_string(row) + ": label '" + cell +
                             "' is not 0 or 1 (set label_normal_values for string labels)");
  }
  return *value;
}

// floor(fraction * n), tolerant of representation error such as 0.29 * 100.
std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::label: return "label";
    case ColumnKind::ignore: return "ignore";
  }
  return "unknown";
}

ColumnKind column_kind_from_string(const std::string& name) {
  if (name == "numeric") return ColumnKind::numeric;
  if (name == "categorical") return ColumnKind::categorical;
  if (name == "label") return ColumnKind::label;
  if (name == "ignore") return ColumnKind::ignore;
  throw std::invalid_argument("unknown column kind '" + name +
                              "' (expected numeric, categorical, label or ignore)");
}

std::optional<std::size_t> RawTable::label_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::label) return i;
  }
  return std::nullopt;
}

std::size_t Dataset::count_positive() const {
  if (!labels) return 0;
  return static_cast<std::size_t>(std::count(labels->begin(), labels->end(), 1));
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  if (labels) out.labels.emplace();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(indices[i]));
    if (labels) out.labels->push_back((*labels)[indices[i]]);
  }
  return out;
}

void SplitSpec::validate() const {
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0) {
    throw std::invalid_argument("split fractions must be non-negative");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  if (subsample_fraction && (*subsample_fraction <= 0.0 || *subsample_fraction > 1.0)) {
    throw std::invalid_argument("subsample fraction must lie in (0, 1]");
  }
}

RawTable parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::size_t arity = 0;
  bool have_arity = false;

  if (schema.has_header) {
    while (std::getline(in, line)) {
      if (is_blank(line)) continue;
      header = split_fields(line);
      arity = header.size();
      have_arity = true;
      break;
    }
  }

  RawTable table;
  std::vector<ColumnKind> kinds;
  auto set_columns = [&](std::size_t width) {
    std::size_t labels = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const std::string name = header.empty() ? "c" + std::to_string(c) : header[c];
      const ColumnKind kind = resolve_kind(schema, c, name);
      kinds.push_back(kind);
      if (kind == ColumnKind::ignore) continue;
      if (kind == ColumnKind::label) ++labels;
      table.columns.push_back({name, kind});
    }
    if (labels > 1) throw std::runtime_error("schema assigns more than one label column");
  };
  if (have_arity) set_columns(arity);

  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    ++row_number;
    const auto fields = split_fields(line);
    if (!have_arity) {
      arity = fields.size();
      have_arity = true;
      set_columns(arity);
    }
    if (fields.size() != arity) {
      throw std::runtime_error("malformed row " + std::to_string(row_number) + ": expected " +
                               std::to_string(arity) + " fields, found " +
                               std::to_string(fields.size()));
    }
    std::vector<Cell> row;
    row.reserve(table.columns.size());
    for (std::size_t c = 0; c < arity; ++c) {
      switch (kinds[c]) {
        case ColumnKind::ignore:
          break;
        case ColumnKind::categorical:
          row.emplace_back(fields[c]);
          break;
        case ColumnKind::label:
          row.emplace_back(parse_label(fields[c], schema, row_number));
          break;
        case ColumnKind::numeric: {
          const auto value = parse_double(fields[c]);
          if (!value) {
            throw std::runtime_error("row " + std::to_string(row_number) + ", column '" +
                                     (header.empty() ? std::to_string(c) : header[c]) +
                                     "': cannot parse '" + fields[c] + "' as a number");
          }
          row.emplace_back(*value);
          break;
        }
      }
    }
    table.rows.push_back(std::move(row));
  }

  if (table.rows.empty()) throw std::runtime_error("no rows");
  return table;
}

RawTable load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_csv(buffer.str(), schema);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

OneHotEncoder OneHotEncoder::fit(const RawTable& table) {
  OneHotEncoder enc;
  enc.columns_ = table.columns;
  enc.vocab_.resize(table.columns.size());
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (table.columns[c].kind != ColumnKind::categorical) continue;
    auto& vocab = enc.vocab_[c];
    for (const auto& row : table.rows) {
      const auto& value = std::get<std::string>(row[c]);
      if (std::find(vocab.begin(), vocab.end(), value) == vocab.end()) vocab.push_back(value);
    }
  }
  return enc;
}

std::size_t OneHotEncoder::encoded_width() const {
  std::size_t width = 0;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    switch (columns_[c].kind) {
      case ColumnKind::numeric: width += 1; break;
      case ColumnKind::categorical: width += vocab_[c].size(); break;
      default: break;
    }
  }
  return width;
}

Dataset OneHotEncoder::apply(const RawTable& table) const {
  if (table.columns.size() != columns_.size()) {
    throw std::invalid_argument("table has " + std::to_string(table.columns.size()) +
                                " columns, encoder was fit on " +
                                std::to_string(columns_.size()));
  }
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (table.columns[c].kind != columns_[c].kind) {
      throw std::invalid_argument("column '" + table.columns[c].name +
                                  "' kind differs from the fitted table");
    }
  }

  Dataset out;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].kind == ColumnKind::numeric) {
      out.feature_names.push_back(columns_[c].name);
    } else if (columns_[c].kind == ColumnKind::categorical) {
      for (const auto& v : vocab_[c]) out.feature_names.push_back(columns_[c].name + "=" + v);
    }
  }

  const auto n = static_cast<Eigen::Index>(table.num_rows());
  out.features = Matrix::Zero(n, static_cast<Eigen::Index>(encoded_width()));
  const auto label_col = table.label_index();
  if (label_col) out.labels.emplace(table.num_rows(), 0);

  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    Eigen::Index offset = 0;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      switch (columns_[c].kind) {
        case ColumnKind::numeric:
          out.features(r, offset++) = std::get<double>(row[c]);
          break;
        case ColumnKind::categorical: {
          const auto& vocab = vocab_[c];
          const auto it = std::find(vocab.begin(), vocab.end(), std::get<std::string>(row[c]));
          if (it != vocab.end()) out.features(r, offset + (it - vocab.begin())) = 1.0;
          offset += static_cast<Eigen::Index>(vocab.size());
          break;
        }
        case ColumnKind::label:
          (*out.labels)[static_cast<std::size_t>(r)] = static_cast<int>(std::get<double>(row[c]));
          break;
        case ColumnKind::ignore:
          break;
      }
    }
  }
  return out;
}

Dataset one_hot_encode(const RawTable& table) { return OneHotEncoder::fit(table).apply(table); }

NormParams normalize_fit(const Dataset& train) {
  if (train.num_rows() == 0) throw std::invalid_argument("cannot fit normalization on zero rows");
  NormParams params;
  for (Eigen::Index c = 0; c < train.features.cols(); ++c) {
    params.min.push_back(train.features.col(c).minCoeff());
    params.max.push_back(train.features.col(c).maxCoeff());
  }
  return params;
}

Dataset normalize_apply(const NormParams& params, const Dataset& data) {
  if (params.min.size() != data.num_features()) {
    throw std::invalid_argument("normalization width mismatch");
  }
  Dataset out = data;
  for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
    const double lo = params.min[static_cast<std::size_t>(c)];
    const double hi = params.max[static_cast<std::size_t>(c)];
    if (hi == lo) {
      out.features.col(c).setZero();
      continue;
    }
    for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
      out.features(r, c) = 2.0 * (out.features(r, c) - lo) / (hi - lo) - 1.0;
    }
  }
  return out;
}

Dataset denormalize(const NormParams& params, const Dataset& data) {
  if (params.min.size() != data.num_features()) {
    throw std::invalid_argument("normalization width mismatch");
  }
  Dataset out = data;
  for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
    const double lo = params.min[static_cast<std::size_t>(c)];
    const double hi = params.max[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
      out.features(r, c) = hi == lo ? lo : (out.features(r, c) + 1.0) * 0.5 * (hi - lo) + lo;
    }
  }
  return out;
}

Splits split(const Dataset& data, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = data.num_rows();
  if (n < 3) throw std::invalid_argument("split needs at least 3 rows, got " + std::to_string(n));

  const std::size_t n_val = fraction_count(spec.val_fraction, n);
  const std::size_t n_test = fraction_count(spec.test_fraction, n);
  const std::size_t n_train = n - n_val - n_test;
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw std::invalid_argument("split of " + std::to_string(n) + " rows leaves an empty partition");
  }

  const auto order = shuffled_indices(n, spec.seed);
  const auto begin = order.begin();
  Splits out;
  out.train = data.select_rows({begin, begin + static_cast<std::ptrdiff_t>(n_train)});
  out.val = data.select_rows({begin + static_cast<std::ptrdiff_t>(n_train),
                              begin + static_cast<std::ptrdiff_t>(n_train + n_val)});
  out.test = data.select_rows({begin + static_cast<std::ptrdiff_t>(n_train + n_val), order.end()});
  return out;
}

Dataset subsample(const Dataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample fraction must lie in (0, 1]");
  }
  const std::size_t n = train.num_rows();
  const std::size_t keep = fraction_count(fraction, n);
  if (keep == 0) throw std::invalid_argument("subsample leaves no rows");
  auto order = shuffled_indices(n, seed);
  order.resize(keep);
  return train.select_rows(order);
}

}  // namespace aegr::data

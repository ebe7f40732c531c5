#include "aegr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "aegr/kde.hpp"

namespace aegr::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPreparedFormatName = "aegr-prepared-dataset";
constexpr const char* kReportFormatName = "aegr-run-report";

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + where + "." + key + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string dataset_csv(const data::Dataset& d) {
  std::string out;
  for (std::size_t c = 0; c < d.feature_names.size(); ++c) {
    if (c) out += ',';
    out += csv_field(d.feature_names[c]);
  }
  if (d.labels) out += d.feature_names.empty() ? "label" : ",label";
  out += '\n';
  for (Eigen::Index r = 0; r < d.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.features.cols(); ++c) {
      if (c) out += ',';
      out += format_double(d.features(r, c));
    }
    if (d.labels) {
      if (d.features.cols()) out += ',';
      out += std::to_string((*d.labels)[static_cast<std::size_t>(r)]);
    }
    out += '\n';
  }
  return out;
}

data::Dataset parse_prepared_split(const std::string& text, std::size_t width, bool labelled,
                                   const std::vector<std::string>& names) {
  data::CsvSchema schema;
  schema.has_header = true;
  if (labelled) schema.by_index[width] = data::ColumnKind::label;
  data::Dataset d = data::one_hot_encode(data::parse_csv(text, schema));
  if (d.num_features() != width) throw std::runtime_error("prepared split has unexpected width");
  d.feature_names = names;
  return d;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string display_detector(pipeline::Detector d) {
  switch (d) {
    case pipeline::Detector::lof_raw: return "Stand-alone LOF";
    case pipeline::Detector::ae_re: return "AE-RE";
    case pipeline::Detector::ae_lof: return "AE-LOF";
    case pipeline::Detector::aegr_lof: return "AEGR-LOF";
  }
  return "?";
}

std::string display_modifier(pipeline::Modifier m) {
  switch (m) {
    case pipeline::Modifier::none: return "None";
    case pipeline::Modifier::prune: return "Pruning";
    case pipeline::Modifier::prune_da: return "Pruning+DA";
  }
  return "?";
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string run_file(const std::string& prefix, const pipeline::VariantSpec& v, std::uint64_t seed,
                     const std::string& ext = ".csv") {
  return prefix + "_" + v.file_tag() + "_" + std::to_string(seed) + ext;
}

std::string scores_csv(const pipeline::ScoredRun& run) {
  std::string out = "row_index,score,label\n";
  for (Eigen::Index i = 0; i < run.scores.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(run.scores(i)) + ',' +
           std::to_string(run.labels[static_cast<std::size_t>(i)]) + '\n';
  }
  return out;
}

std::string latents_csv(const pipeline::ScoredRun& run) {
  const Matrix& z = *run.train_latents;
  std::string out;
  for (Eigen::Index c = 0; c < z.cols(); ++c) out += "latent_" + std::to_string(c + 1) + ',';
  out += "label,pruned_flag\n";
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) out += format_double(z(r, c)) + ',';
    const auto i = static_cast<std::size_t>(r);
    out += std::to_string(run.train_labels ? (*run.train_labels)[i] : -1) + ',';
    out += (*run.kept_mask)[i] ? "0\n" : "1\n";
  }
  return out;
}

std::string history_csv(const ae::TrainHistory& h) {
  std::string out = "epoch,train_loss,val_loss,max_GS,reversal_applied\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_loss) + ',';
    if (e.max_gradient_batch) out += format_double(e.max_gradient_score);
    out += std::string(",") + (e.reversal_applied ? "1" : "0") + '\n';
  }
  return out;
}

std::string curve_csv(const std::vector<eval::CurvePoint>& points) {
  std::string out = "threshold,precision,recall,tpr,fpr\n";
  for (const auto& p : points) {
    out += format_double(p.threshold) + ',' + format_double(p.precision) + ',' + format_double(p.recall) +
           ',' + format_double(p.tpr) + ',' + format_double(p.fpr) + '\n';
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("cannot format double");
  return std::string(buf, ptr);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
  const fs::path tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc, {"dataset", "split", "train", "lof", "augment", "variants", "seeds", "wilcoxon_pairs",
                   "output_dir"},
             "config");
  ExperimentConfig cfg;

  const json& ds = doc.at("dataset");
  check_keys(ds, {"path", "test_path", "has_header", "columns", "default_kind", "label_normal_values"},
             "dataset");
  cfg.dataset.path = resolve(base_dir, ds.at("path").get<std::string>());
  if (ds.contains("test_path")) cfg.dataset.test_path = resolve(base_dir, ds["test_path"].get<std::string>());
  auto& schema = cfg.dataset.schema;
  schema.has_header = ds.value("has_header", true);
  if (ds.contains("default_kind")) {
    schema.default_kind = data::column_kind_from_string(ds["default_kind"].get<std::string>());
  }
  if (ds.contains("columns")) {
    for (const auto& [key, kind] : ds["columns"].items()) {
      const auto parsed = data::column_kind_from_string(kind.get<std::string>());
      if (!key.empty() && key[0] == '#') {
        schema.by_index[std::stoul(key.substr(1))] = parsed;
      } else {
        schema.by_name[key] = parsed;
      }
    }
  }
  if (ds.contains("label_normal_values")) {
    for (const auto& v : ds["label_normal_values"]) {
      schema.label_normal_values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
  }

  if (doc.contains("split")) {
    const json& s = doc["split"];
    check_keys(s, {"train", "val", "test", "seed", "subsample"}, "split");
    cfg.split.train_fraction = s.value("train", cfg.split.train_fraction);
    cfg.split.val_fraction = s.value("val", cfg.split.val_fraction);
    cfg.split.test_fraction = s.value("test", cfg.split.test_fraction);
    cfg.split.seed = s.value("seed", cfg.split.seed);
    if (s.contains("subsample")) cfg.split.subsample_fraction = s["subsample"].get<double>();
  }

  if (doc.contains("train")) {
    const json& t = doc["train"];
    check_keys(t, {"max_epochs", "batch_size", "learning_rate", "gr_start_epoch", "patience", "min_improvement"},
               "train");
    auto& tc = cfg.train;
    tc.max_epochs = t.value("max_epochs", tc.max_epochs);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.learning_rate = t.value("learning_rate", tc.learning_rate);
    tc.gr_start_epoch = t.value("gr_start_epoch", tc.gr_start_epoch);
    tc.patience = t.value("patience", tc.patience);
    tc.min_improvement = t.value("min_improvement", tc.min_improvement);
  }

  if (doc.contains("lof")) {
    check_keys(doc["lof"], {"min_pts"}, "lof");
    cfg.min_pts = doc["lof"].value("min_pts", cfg.min_pts);
  }
  if (doc.contains("augment")) {
    check_keys(doc["augment"], {"factor", "sigma"}, "augment");
    cfg.aug_factor = doc["augment"].value("factor", cfg.aug_factor);
    cfg.aug_sigma = doc["augment"].value("sigma", cfg.aug_sigma);
  }

  if (doc.contains("variants")) {
    cfg.variants.clear();
    for (const auto& v : doc["variants"]) {
      const auto name = v.get<std::string>();
      if (name == "all") {
        const auto all = pipeline::comparison_matrix();
        cfg.variants.insert(cfg.variants.end(), all.begin(), all.end());
      } else {
        cfg.variants.push_back(pipeline::VariantSpec::parse(name));
      }
    }
  }
  for (auto& v : cfg.variants) {
    v.aug_factor = cfg.aug_factor;
    v.aug_sigma = cfg.aug_sigma;
  }

  if (doc.contains("seeds")) cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  if (doc.contains("wilcoxon_pairs")) {
    for (const auto& pair : doc["wilcoxon_pairs"]) {
      if (!pair.is_array() || pair.size() != 2) {
        throw std::invalid_argument("config: wilcoxon_pairs entries must be [variant, variant]");
      }
      const auto a = pipeline::VariantSpec::parse(pair[0].get<std::string>()).name();
      const auto b = pipeline::VariantSpec::parse(pair[1].get<std::string>()).name();
      cfg.wilcoxon_pairs.emplace_back(a, b);
    }
  }
  if (doc.contains("output_dir")) cfg.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
  else cfg.output_dir = base_dir / "out";

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return from_json(doc, base);
}

void ExperimentConfig::validate() const {
  if (dataset.test_path) {
    if (!(split.val_fraction > 0.0 && split.val_fraction < 1.0)) {
      throw std::invalid_argument("config: split.val must lie in (0, 1) when test_path is set");
    }
  } else {
    split.validate();
  }
  if (split.subsample_fraction && (*split.subsample_fraction <= 0.0 || *split.subsample_fraction > 1.0)) {
    throw std::invalid_argument("config: split.subsample must lie in (0, 1]");
  }
  train.validate();
  if (min_pts < 1) throw std::invalid_argument("config: lof.min_pts must be at least 1");
  if (aug_factor < 1.0 || aug_sigma < 0.0) throw std::invalid_argument("config: augment factor >= 1, sigma >= 0");
  if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
  if (variants.empty()) throw std::invalid_argument("config: no variants selected");
  for (const auto& v : variants) v.validate();
}

json ExperimentConfig::to_json() const {
  json doc;
  json columns = json::object();
  for (const auto& [name, kind] : dataset.schema.by_name) columns[name] = data::to_string(kind);
  for (const auto& [index, kind] : dataset.schema.by_index) columns["#" + std::to_string(index)] = data::to_string(kind);
  doc["dataset"] = {{"path", dataset.path.string()},
                    {"has_header", dataset.schema.has_header},
                    {"columns", columns},
                    {"default_kind", data::to_string(dataset.schema.default_kind)},
                    {"label_normal_values", dataset.schema.label_normal_values}};
  if (dataset.test_path) doc["dataset"]["test_path"] = dataset.test_path->string();
  doc["split"] = {{"train", split.train_fraction},
                  {"val", split.val_fraction},
                  {"test", split.test_fraction},
                  {"seed", split.seed},
                  {"subsample", split.subsample_fraction ? json(*split.subsample_fraction) : json(1.0)}};
  doc["train"] = {{"max_epochs", train.max_epochs},
                  {"batch_size", train.batch_size},
                  {"learning_rate", train.learning_rate},
                  {"gr_start_epoch", train.gr_start_epoch},
                  {"patience", train.patience},
                  {"min_improvement", train.min_improvement}};
  doc["lof"] = {{"min_pts", min_pts}};
  doc["augment"] = {{"factor", aug_factor}, {"sigma", aug_sigma}};
  json variant_names = json::array();
  for (const auto& v : variants) variant_names.push_back(v.name());
  doc["variants"] = variant_names;
  doc["seeds"] = seeds;
  json pairs = json::array();
  for (const auto& [a, b] : wilcoxon_pairs) pairs.push_back({a, b});
  doc["wilcoxon_pairs"] = pairs;
  doc["output_dir"] = output_dir.string();
  return doc;
}

// ---------------------------------------------------------------------------
// prepare

PrepareSummary cmd_prepare(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const data::RawTable table = data::load_csv(cfg.dataset.path, cfg.dataset.schema);
  const auto encoder = data::OneHotEncoder::fit(table);

  PrepareSummary summary;
  for (const auto& col : table.columns) {
    if (col.kind != data::ColumnKind::label) ++summary.raw_features;
  }

  data::Splits splits;
  if (cfg.dataset.test_path) {
    const data::Dataset full_train = encoder.apply(table);
    const data::RawTable test_table = data::load_csv(*cfg.dataset.test_path, cfg.dataset.schema);
    // The test file only supplies the test split; validation comes from the training file.
    data::SplitSpec holdout;
    holdout.val_fraction = cfg.split.val_fraction;
    holdout.test_fraction = 0.0;
    holdout.train_fraction = 1.0 - holdout.val_fraction;
    holdout.seed = cfg.split.seed;
    holdout.validate();
    const std::size_t n = full_train.num_rows();
    const auto n_val = static_cast<std::size_t>(std::floor(holdout.val_fraction * static_cast<double>(n) + 1e-9));
    if (n_val == 0 || n_val >= n) throw std::invalid_argument("validation holdout leaves an empty partition");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(holdout.seed);
    std::shuffle(order.begin(), order.end(), rng);
    splits.train = full_train.select_rows({order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val)});
    splits.val = full_train.select_rows({order.end() - static_cast<std::ptrdiff_t>(n_val), order.end()});
    splits.test = encoder.apply(test_table);
  } else {
    splits = data::split(encoder.apply(table), cfg.split);
  }

  if (cfg.split.subsample_fraction && *cfg.split.subsample_fraction < 1.0) {
    splits.train = data::subsample(splits.train, *cfg.split.subsample_fraction, cfg.split.seed);
  }

  const data::NormParams norm = data::normalize_fit(splits.train);
  splits.train = data::normalize_apply(norm, splits.train);
  splits.val = data::normalize_apply(norm, splits.val);
  splits.test = data::normalize_apply(norm, splits.test);

  const std::string train_csv = dataset_csv(splits.train);
  const std::string val_csv = dataset_csv(splits.val);
  const std::string test_csv = dataset_csv(splits.test);

  summary.encoded_features = splits.train.num_features();
  summary.train_rows = splits.train.num_rows();
  summary.val_rows = splits.val.num_rows();
  summary.test_rows = splits.test.num_rows();
  summary.train_positive = splits.train.count_positive();
  summary.val_positive = splits.val.count_positive();
  summary.test_positive = splits.test.count_positive();
  summary.content_hash = fnv1a_hex(train_csv + val_csv + test_csv);

  json meta;
  meta["format"] = kPreparedFormatName;
  meta["version"] = kPreparedFormatVersion;
  meta["feature_names"] = splits.train.feature_names;
  meta["has_labels"] = splits.train.has_labels();
  meta["raw_features"] = summary.raw_features;
  meta["encoded_features"] = summary.encoded_features;
  meta["rows"] = {{"train", summary.train_rows}, {"val", summary.val_rows}, {"test", summary.test_rows}};
  meta["positives"] = {{"train", summary.train_positive}, {"val", summary.val_positive}, {"test", summary.test_positive}};
  meta["normalization"] = {{"min", norm.min}, {"max", norm.max}};
  meta["content_hash"] = summary.content_hash;

  const fs::path dir = cfg.prepared_dir();
  write_file_atomic(dir / "train.csv", train_csv);
  write_file_atomic(dir / "val.csv", val_csv);
  write_file_atomic(dir / "test.csv", test_csv);
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");

  log << "features: " << summary.raw_features << " raw, " << summary.encoded_features << " after encoding\n"
      << "train: " << summary.train_rows << " rows (" << summary.train_positive << " anomalies)\n"
      << "val:   " << summary.val_rows << " rows (" << summary.val_positive << " anomalies)\n"
      << "test:  " << summary.test_rows << " rows (" << summary.test_positive << " anomalies)\n"
      << "hash:  " << summary.content_hash << "\n"
      << "written to " << dir.string() << "\n";
  return summary;
}

Prepared load_prepared(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) {
    throw std::runtime_error("prepared dataset not found at " + dir.string() + " (run `prepare` first)");
  }
  const json meta = json::parse(read_file(meta_path));
  if (meta.value("format", "") != kPreparedFormatName || meta.value("version", 0) != kPreparedFormatVersion) {
    throw std::runtime_error(meta_path.string() + ": unsupported prepared dataset format");
  }
  const auto names = meta.at("feature_names").get<std::vector<std::string>>();
  const bool labelled = meta.at("has_labels").get<bool>();

  Prepared p;
  const std::string train_csv = read_file(dir / "train.csv");
  const std::string val_csv = read_file(dir / "val.csv");
  const std::string test_csv = read_file(dir / "test.csv");
  p.content_hash = fnv1a_hex(train_csv + val_csv + test_csv);
  if (p.content_hash != meta.at("content_hash").get<std::string>()) {
    throw std::runtime_error("prepared dataset in " + dir.string() + " does not match its recorded hash");
  }
  p.data.train = parse_prepared_split(train_csv, names.size(), labelled, names);
  p.data.val = parse_prepared_split(val_csv, names.size(), labelled, names);
  p.data.test = parse_prepared_split(test_csv, names.size(), labelled, names);
  p.norm.min = meta.at("normalization").at("min").get<std::vector<double>>();
  p.norm.max = meta.at("normalization").at("max").get<std::vector<double>>();
  return p;
}

// ---------------------------------------------------------------------------
// run

bool RunReport::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const RunRow& r) { return r.ok; });
}

json RunReport::to_json() const {
  json doc;
  doc["format"] = kReportFormatName;
  doc["version"] = kReportFormatVersion;
  doc["config"] = config;
  doc["dataset"] = {{"content_hash", dataset_hash}};

  json rows_json = json::array();
  json seconds = json::array();
  for (const auto& r : rows) {
    json row;
    row["variant"] = r.variant.name();
    row["detector"] = pipeline::to_string(r.variant.detector);
    row["modifier"] = pipeline::to_string(r.variant.modifier);
    row["seed"] = r.seed;
    row["status"] = r.ok ? "ok" : "failed";
    if (!r.ok) row["error"] = r.error;
    if (r.ok) {
      row["roc_auc"] = r.metrics.roc_auc;
      row["pr_auc"] = r.metrics.pr_auc;
      row["n_pos"] = r.metrics.n_pos;
      row["n_neg"] = r.metrics.n_neg;
      row["train_rows"] = r.meta.train_rows;
      row["reference_rows"] = r.meta.reference_rows;
      row["pruned_rows"] = optional_json(r.meta.pruned_rows);
      row["augmented_rows"] = optional_json(r.meta.augmented_rows);
      row["mean_error_all"] = optional_json(r.meta.mean_error_all);
      row["mean_error_kept"] = optional_json(r.meta.mean_error_kept);
      row["epochs_run"] = r.meta.epochs_run;
      row["best_epoch"] = r.meta.best_epoch;
      row["reversal_epochs"] = r.meta.reversal_epochs;
      row["batch_size"] = r.meta.batch_size;
    }
    rows_json.push_back(std::move(row));
    seconds.push_back({{"variant", r.variant.name()}, {"seed", r.seed}, {"seconds", r.seconds}});
  }
  doc["rows"] = std::move(rows_json);

  json summary = json::array();
  std::vector<std::string> seen;
  for (const auto& r : rows) {
    const auto name = r.variant.name();
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) continue;
    seen.push_back(name);
    std::vector<double> pr;
    std::vector<double> roc;
    std::size_t total = 0;
    for (const auto& s : rows) {
      if (s.variant.name() != name) continue;
      ++total;
      if (!s.ok) continue;
      pr.push_back(s.metrics.pr_auc);
      roc.push_back(s.metrics.roc_auc);
    }
    const auto [pr_mean, pr_sd] = mean_sd(pr);
    const auto [roc_mean, roc_sd] = mean_sd(roc);
    json entry = {{"variant", name}, {"runs", total}, {"completed", pr.size()}};
    entry["pr_auc_mean"] = pr.empty() ? json(nullptr) : json(pr_mean);
    entry["pr_auc_sd"] = pr.empty() ? json(nullptr) : json(pr_sd);
    entry["roc_auc_mean"] = roc.empty() ? json(nullptr) : json(roc_mean);
    entry["roc_auc_sd"] = roc.empty() ? json(nullptr) : json(roc_sd);
    summary.push_back(std::move(entry));
  }
  doc["summary"] = std::move(summary);

  json tests = json::array();
  for (const auto& c : comparisons) {
    json t = {{"a", c.a}, {"b", c.b}, {"metric", c.metric}};
    if (c.result) {
      t["w_statistic"] = c.result->w_statistic;
      t["p_value"] = c.result->p_value;
      t["n_effective"] = c.result->n_effective;
      t["exact"] = c.result->exact;
    } else {
      t["error"] = c.error;
    }
    tests.push_back(std::move(t));
  }
  doc["wilcoxon"] = std::move(tests);
  doc["metadata"] = {{"row_seconds", seconds}};
  return doc;
}

std::string RunReport::to_markdown() const {
  std::ostringstream md;
  md << std::fixed << std::setprecision(3);
  md << "| Detection approach | Modification method | PR AUC | ROC AUC | Completed runs |\n"
     << "|---|---|---|---|---|\n";
  std::vector<std::string> seen;
  for (const auto& r : rows) {
    const auto name = r.variant.name();
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) continue;
    seen.push_back(name);
    std::vector<double> pr;
    std::vector<double> roc;
    std::size_t total = 0;
    for (const auto& s : rows) {
      if (s.variant.name() != name) continue;
      ++total;
      if (s.ok) {
        pr.push_back(s.metrics.pr_auc);
        roc.push_back(s.metrics.roc_auc);
      }
    }
    md << "| " << display_detector(r.variant.detector) << " | " << display_modifier(r.variant.modifier) << " | ";
    if (pr.empty()) {
      md << "n/a | n/a";
    } else {
      const auto [pm, ps] = mean_sd(pr);
      const auto [rm, rs] = mean_sd(roc);
      md << pm << " ± " << ps << " | " << rm << " ± " << rs;
    }
    md << " | " << pr.size() << "/" << total << " |\n";
  }
  if (!comparisons.empty()) {
    md << "\n| Wilcoxon pair | Metric | W | p | n |\n|---|---|---|---|---|\n";
    for (const auto& c : comparisons) {
      md << "| " << c.a << " vs " << c.b << " | " << c.metric << " | ";
      if (c.result) {
        md << c.result->w_statistic << " | " << std::setprecision(4) << c.result->p_value << std::setprecision(3)
           << " | " << c.result->n_effective << " |\n";
      } else {
        md << "- | " << c.error << " | - |\n";
      }
    }
  }
  return md.str();
}

RunReport cmd_run(const ExperimentConfig& cfg, const RunOptions& options, std::ostream& log) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();
  const Prepared prepared = load_prepared(cfg.prepared_dir());
  fs::create_directories(cfg.output_dir);

  struct Task {
    pipeline::VariantSpec spec;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto seed : cfg.seeds) {
    for (auto spec : cfg.variants) {
      spec.seed = seed;
      tasks.push_back({spec, seed});
    }
  }

  RunReport report;
  report.config = cfg.to_json();
  report.dataset_hash = prepared.content_hash;
  report.rows.resize(tasks.size());

  pipeline::ModelCache cache;
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& task = tasks[i];
      RunRow& row = report.rows[i];
      row.variant = task.spec;
      row.seed = task.seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        ae::TrainConfig tc = cfg.train;
        tc.seed = task.seed;
        const auto run = pipeline::run_variant(task.spec, prepared.data, tc, cfg.min_pts, &cache);
        const std::span<const double> scores(run.scores.data(), static_cast<std::size_t>(run.scores.size()));
        row.metrics = eval::evaluate(scores, run.labels);
        row.meta = run.meta;
        write_file_atomic(cfg.output_dir / run_file("scores", task.spec, task.seed), scores_csv(run));
        write_file_atomic(cfg.output_dir / run_file("curve", task.spec, task.seed),
                          curve_csv(eval::curve_points(scores, run.labels)));
        if (run.train_latents) {
          write_file_atomic(cfg.output_dir / run_file("latents", task.spec, task.seed), latents_csv(run));
        }
        if (run.history) {
          write_file_atomic(cfg.output_dir / run_file("history", task.spec, task.seed), history_csv(*run.history));
        }
        row.ok = true;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(log_mutex);
      log << "[" << (row.ok ? "ok" : "FAILED") << "] " << row.variant.name() << " seed=" << row.seed;
      if (row.ok) {
        log << " pr_auc=" << row.metrics.pr_auc << " roc_auc=" << row.metrics.roc_auc;
      } else {
        log << " error: " << row.error;
      }
      log << '\n';
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, tasks.size()));
  std::vector<std::thread> threads;
  for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (const auto& [a, b] : cfg.wilcoxon_pairs) {
    for (const std::string metric : {"pr_auc", "roc_auc"}) {
      WilcoxonComparison cmp{a, b, metric, std::nullopt, {}};
      std::vector<double> va;
      std::vector<double> vb;
      for (const auto seed : cfg.seeds) {
        const RunRow* ra = nullptr;
        const RunRow* rb = nullptr;
        for (const auto& r : report.rows) {
          if (r.seed != seed || !r.ok) continue;
          if (r.variant.name() == a) ra = &r;
          if (r.variant.name() == b) rb = &r;
        }
        if (!ra || !rb) continue;
        va.push_back(metric == "pr_auc" ? ra->metrics.pr_auc : ra->metrics.roc_auc);
        vb.push_back(metric == "pr_auc" ? rb->metrics.pr_auc : rb->metrics.roc_auc);
      }
      try {
        if (va.empty()) throw std::invalid_argument("no seeds where both variants completed");
        cmp.result = eval::wilcoxon_signed_rank(va, vb);
      } catch (const std::exception& e) {
        cmp.error = e.what();
      }
      report.comparisons.push_back(std::move(cmp));
    }
  }

  json doc = report.to_json();
  doc["metadata"]["started_at"] = started_at;
  doc["metadata"]["total_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  doc["metadata"]["jobs"] = jobs;
  write_file_atomic(cfg.output_dir / "report.json", doc.dump(2) + "\n");
  write_file_atomic(cfg.output_dir / "report.md", report.to_markdown());
  log << report.to_markdown();
  return report;
}

// ---------------------------------------------------------------------------
// plotdata

void cmd_plotdata(const ExperimentConfig& cfg, const pipeline::VariantSpec& variant, std::uint64_t seed,
                  std::ostream& log) {
  const fs::path source = cfg.output_dir / run_file("latents", variant, seed);
  if (!fs::exists(source)) {
    throw std::runtime_error("no stored latents at " + source.string() + " (run `run` with " + variant.name() +
                             " and seed " + std::to_string(seed) + " first)");
  }
  data::CsvSchema schema;
  const data::RawTable table = data::load_csv(source, schema);
  const std::size_t width = table.columns.size();
  if (width < 4) throw std::runtime_error(source.string() + ": need at least two latent columns");
  const std::size_t label_col = width - 2;
  const std::size_t pruned_col = width - 1;

  std::string scatter = "latent_dim_1,latent_dim_2,label,pruned_flag\n";
  std::vector<double> axis_values[2][2];  // [axis][class]
  for (const auto& row : table.rows) {
    const double z1 = std::get<double>(row[0]);
    const double z2 = std::get<double>(row[1]);
    const int label = static_cast<int>(std::get<double>(row[label_col]));
    const int pruned = static_cast<int>(std::get<double>(row[pruned_col]));
    scatter += format_double(z1) + ',' + format_double(z2) + ',' + std::to_string(label) + ',' +
               std::to_string(pruned) + '\n';
    if (label == 0 || label == 1) {
      axis_values[0][label].push_back(z1);
      axis_values[1][label].push_back(z2);
    }
  }

  std::string curves = "axis,class,x,density\n";
  const char* class_names[2] = {"normal", "anomaly"};
  for (int cls = 0; cls < 2; ++cls) {
    if (axis_values[0][cls].empty()) {
      log << "warning: no " << class_names[cls] << " points in " << source.filename().string()
          << "; skipping its KDE curves\n";
      continue;
    }
    for (int axis = 0; axis < 2; ++axis) {
      for (const auto& s : kde::gaussian_kde_curve(axis_values[axis][cls])) {
        curves += std::to_string(axis + 1) + ',' + class_names[cls] + ',' + format_double(s.x) + ',' +
                  format_double(s.density) + '\n';
      }
    }
  }

  write_file_atomic(cfg.output_dir / "latent_scatter.csv", scatter);
  write_file_atomic(cfg.output_dir / "kde_curves.csv", curves);
  log << "wrote " << (cfg.output_dir / "latent_scatter.csv").string() << " and "
      << (cfg.output_dir / "kde_curves.csv").string() << "\n";
}

}  // namespace aegr::experiment

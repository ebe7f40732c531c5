#include "aegr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace aegr::pipeline {

namespace {

std::string cache_key(const ae::TrainConfig& cfg) {
  std::ostringstream key;
  key.precision(17);
  key << cfg.max_epochs << '|' << cfg.batch_size << '|' << cfg.learning_rate << '|'
      << cfg.gr_start_epoch << '|' << cfg.patience << '|' << cfg.min_improvement << '|' << cfg.seed;
  return key.str();
}

Detector detector_from_string(const std::string& s) {
  if (s == "lof_raw") return Detector::lof_raw;
  if (s == "ae_re") return Detector::ae_re;
  if (s == "ae_lof") return Detector::ae_lof;
  if (s == "aegr_lof") return Detector::aegr_lof;
  throw std::invalid_argument("unknown detector '" + s + "' (lof_raw, ae_re, ae_lof, aegr_lof)");
}

Modifier modifier_from_string(const std::string& s) {
  if (s == "none") return Modifier::none;
  if (s == "prune") return Modifier::prune;
  if (s == "prune_da") return Modifier::prune_da;
  throw std::invalid_argument("unknown modifier '" + s + "' (none, prune, prune_da)");
}

}  // namespace

std::string to_string(Detector d) {
  switch (d) {
    case Detector::lof_raw: return "lof_raw";
    case Detector::ae_re: return "ae_re";
    case Detector::ae_lof: return "ae_lof";
    case Detector::aegr_lof: return "aegr_lof";
  }
  return "unknown";
}

std::string to_string(Modifier m) {
  switch (m) {
    case Modifier::none: return "none";
    case Modifier::prune: return "prune";
    case Modifier::prune_da: return "prune_da";
  }
  return "unknown";
}

void VariantSpec::validate() const {
  const bool latent_lof = detector == Detector::ae_lof || detector == Detector::aegr_lof;
  if (modifier != Modifier::none && !latent_lof) {
    throw std::invalid_argument("modifier " + to_string(modifier) + " is only defined for ae_lof and aegr_lof");
  }
  if (modifier == Modifier::prune_da) {
    if (!(aug_factor >= 1.0)) throw std::invalid_argument("aug_factor must be at least 1");
    if (!(aug_sigma >= 0.0)) throw std::invalid_argument("aug_sigma must be non-negative");
  }
}

std::string VariantSpec::name() const { return to_string(detector) + "/" + to_string(modifier); }

std::string VariantSpec::file_tag() const { return to_string(detector) + "-" + to_string(modifier); }

VariantSpec VariantSpec::parse(const std::string& text) {
  VariantSpec spec;
  const auto slash = text.find('/');
  spec.detector = detector_from_string(text.substr(0, slash));
  spec.modifier = slash == std::string::npos ? Modifier::none : modifier_from_string(text.substr(slash + 1));
  spec.validate();
  return spec;
}

std::vector<VariantSpec> comparison_matrix() {
  std::vector<VariantSpec> rows;
  rows.push_back({Detector::lof_raw, Modifier::none});
  rows.push_back({Detector::ae_re, Modifier::none});
  for (const auto d : {Detector::ae_lof, Detector::aegr_lof}) {
    for (const auto m : {Modifier::none, Modifier::prune, Modifier::prune_da}) rows.push_back({d, m});
  }
  return rows;
}

PruneResult prune(const Matrix& latents, const Vector& errors) {
  if (errors.size() != latents.rows()) {
    throw std::invalid_argument("prune: one reconstruction error per latent row required");
  }
  if (errors.size() == 0) throw std::invalid_argument("prune: empty input");

  PruneResult out;
  out.mean_error = errors.mean();
  // The computed mean can round below the minimum when all errors are equal.
  const double threshold = std::max(out.mean_error, errors.minCoeff());
  out.kept_mask.resize(static_cast<std::size_t>(errors.size()));
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < errors.size(); ++i) {
    const bool kept = errors(i) <= threshold;
    out.kept_mask[static_cast<std::size_t>(i)] = kept;
    if (kept) keep.push_back(i);
  }
  out.kept.resize(static_cast<Eigen::Index>(keep.size()), latents.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.kept.row(static_cast<Eigen::Index>(i)) = latents.row(keep[i]);
  return out;
}

void check_prune_contract(const Vector& errors, const PruneResult& pruned) {
  const auto n = static_cast<std::size_t>(errors.size());
  const auto kept = static_cast<std::size_t>(pruned.kept.rows());
  if (kept == 0) throw PruneContractViolation("pruning removed every training row");
  const bool all_equal = errors.maxCoeff() == errors.minCoeff();
  if (!all_equal && kept >= n) {
    throw PruneContractViolation("pruning kept all " + std::to_string(n) + " rows although errors differ");
  }
  double kept_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pruned.kept_mask[i]) kept_sum += errors(static_cast<Eigen::Index>(i));
  }
  const double kept_mean = kept_sum / static_cast<double>(kept);
  if (kept_mean > errors.mean() && !all_equal) {
    throw PruneContractViolation("mean error of pruned set exceeds the overall mean");
  }
}

Matrix augment(const Matrix& latents, double factor, double sigma, std::uint64_t seed) {
  if (!(factor >= 1.0)) throw std::invalid_argument("augment: factor must be at least 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("augment: sigma must be non-negative");
  const Eigen::Index n = latents.rows();
  const auto extra = static_cast<Eigen::Index>(std::floor((factor - 1.0) * static_cast<double>(n) + 1e-9));
  if (extra > 0 && n == 0) throw std::invalid_argument("augment: cannot cycle an empty set");

  Matrix out(n + extra, latents.cols());
  out.topRows(n) = latents;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index i = 0; i < extra; ++i) {
    for (Eigen::Index c = 0; c < latents.cols(); ++c) {
      out(n + i, c) = latents(i % n, c) + sigma * noise(rng);
    }
  }
  return out;
}

ae::TrainResult train_autoencoder(const ae::TrainConfig& cfg, const PreparedData& data) {
  auto net = ae::build_architecture(static_cast<Eigen::Index>(data.train.num_features()), cfg.seed);
  return ae::train(std::move(net), data.train.features, data.val.features, cfg);
}

std::shared_ptr<const ae::TrainResult> ModelCache::get(const ae::TrainConfig& cfg, const PreparedData& data) {
  std::promise<std::shared_ptr<const ae::TrainResult>> promise;
  std::shared_future<std::shared_ptr<const ae::TrainResult>> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    const auto key = cache_key(cfg);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      future = promise.get_future().share();
      entries_.emplace(key, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(std::make_shared<const ae::TrainResult>(train_autoencoder(cfg, data)));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

ScoredRun run_variant(const VariantSpec& spec, const PreparedData& data, const ae::TrainConfig& cfg,
                      std::size_t min_pts, ModelCache* cache) {
  spec.validate();
  if (!data.test.labels) throw std::invalid_argument("test split has no labels to evaluate against");

  ScoredRun run;
  run.variant = spec;
  run.labels = *data.test.labels;
  run.meta.train_rows = data.train.num_rows();

  if (spec.detector == Detector::lof_raw) {
    const auto model = lof::LofModel::fit(data.train.features, min_pts);
    run.meta.reference_rows = model.size();
    run.scores = model.score(data.test.features);
    return run;
  }

  const ae::TrainConfig effective = spec.detector == Detector::aegr_lof ? cfg : cfg.without_reversal();
  std::shared_ptr<const ae::TrainResult> trained;
  if (cache) {
    trained = cache->get(effective, data);
  } else {
    trained = std::make_shared<const ae::TrainResult>(train_autoencoder(effective, data));
  }
  const ae::Network& net = trained->network;
  const auto& history = trained->history;
  run.history = history;
  run.meta.epochs_run = history.epochs.size();
  run.meta.best_epoch = history.best_epoch;
  run.meta.batch_size = effective.effective_batch_size(data.train.num_rows());
  run.meta.reversal_epochs = static_cast<std::size_t>(std::count_if(
      history.epochs.begin(), history.epochs.end(), [](const ae::EpochRecord& e) { return e.reversal_applied; }));

  if (spec.detector == Detector::ae_re) {
    run.scores = ae::reconstruction_error(net, data.test.features);
    return run;
  }

  Matrix train_latents = ae::encode(net, data.train.features);
  Matrix reference = train_latents;
  std::vector<bool> kept_mask(static_cast<std::size_t>(train_latents.rows()), true);
  if (spec.modifier != Modifier::none) {
    const Vector errors = ae::reconstruction_error(net, data.train.features);
    PruneResult pruned = prune(train_latents, errors);
    check_prune_contract(errors, pruned);
    run.meta.pruned_rows = static_cast<std::size_t>(pruned.kept.rows());
    run.meta.mean_error_all = errors.mean();
    run.meta.errors_all_equal = errors.maxCoeff() == errors.minCoeff();
    double kept_sum = 0.0;
    for (Eigen::Index i = 0; i < errors.size(); ++i) {
      if (pruned.kept_mask[static_cast<std::size_t>(i)]) kept_sum += errors(i);
    }
    run.meta.mean_error_kept = kept_sum / static_cast<double>(pruned.kept.rows());
    kept_mask = pruned.kept_mask;
    reference = std::move(pruned.kept);
    if (spec.modifier == Modifier::prune_da) {
      reference = augment(reference, spec.aug_factor, spec.aug_sigma, spec.seed);
      run.meta.augmented_rows = static_cast<std::size_t>(reference.rows());
    }
  }

  const auto model = lof::LofModel::fit(std::move(reference), min_pts);
  run.meta.reference_rows = model.size();
  run.scores = model.score(ae::encode(net, data.test.features));
  run.train_latents = std::move(train_latents);
  run.train_labels = data.train.labels;
  run.kept_mask = std::move(kept_mask);
  return run;
}

}  // namespace aegr::pipeline

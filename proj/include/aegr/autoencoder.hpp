#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "aegr/data.hpp"
#include "aegr/types.hpp"

namespace aegr::ae {

enum class Activation { tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerParams {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::tanh;

  Eigen::Index fan_in() const { return weights.cols(); }
  Eigen::Index fan_out() const { return weights.rows(); }
};

/// Undercomplete autoencoder with node widths [n, h, m, h, n].
///
/// Weight layer 1 (zero-based) maps the first hidden layer onto the
/// bottleneck; its activations are the latent variables and its weight
/// gradient is what the gradient score is computed from.
struct Network {
  std::vector<LayerParams> layers;

  static constexpr std::size_t kBottleneckLayer = 1;

  /// Node widths, input first.
  std::vector<Eigen::Index> widths() const;
  Eigen::Index input_width() const { return layers.front().fan_in(); }
  Eigen::Index latent_width() const { return layers.at(kBottleneckLayer).fan_out(); }
  std::size_t num_parameters() const;
  bool all_finite() const;

  bool operator==(const Network& other) const;
};

/// Same shapes as the Network parameters.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;

  static Gradients zeros_like(const Network& net);
  Gradients& operator*=(double c);
  Gradients operator-() const;
  const Matrix& bottleneck_weights() const { return weights.at(Network::kBottleneckLayer); }
};

/// Inputs and post-activation outputs of every layer. activations[0] is the
/// input batch and activations.back() the reconstruction.
struct ForwardPass {
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
  const Matrix& latent() const { return activations.at(Network::kBottleneckLayer + 1); }
};

/// floor(1 + sqrt(n)).
Eigen::Index bottleneck_width(Eigen::Index n_features);
/// round(sqrt(n * m)), the geometric mean of the input and bottleneck widths.
Eigen::Index hidden_width(Eigen::Index n_features, Eigen::Index bottleneck);

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero; tanh on
/// every layer except the identity reconstruction head.
Network build_architecture(Eigen::Index n_features, std::uint64_t seed);

double activation_tanh(double x);

ForwardPass forward(const Network& net, const Matrix& batch);

/// Elementwise 0.5 e^2 for |e| < 1, |e| - 0.5 otherwise; mean over elements.
double smooth_l1_loss(const Matrix& output, const Matrix& target);

/// Gradients of smooth_l1_loss(forward(batch).output(), target) with respect to
/// every parameter. `pass` must come from forward() on the same network.
Gradients backward(const Network& net, const ForwardPass& pass, const Matrix& target);

/// theta <- theta - lr * g. Plain SGD.
void sgd_step(Network& net, const Gradients& grads, double lr);

/// Frobenius norm.
double gradient_score(const Matrix& bottleneck_grads);

/// Rows > 2000 train with minibatches of 64, smaller sets with 16.
std::size_t default_batch_size(std::size_t train_rows);

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 0;  // 0 selects default_batch_size()
  double learning_rate = 0.01;
  // Reversal runs in every epoch j (1-based) with j > gr_start_epoch.
  std::size_t gr_start_epoch = 5;
  std::size_t patience = 10;
  double min_improvement = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
  bool reversal_enabled() const { return gr_start_epoch < max_epochs; }
  /// Same config with reversal switched off.
  TrainConfig without_reversal() const;
  std::size_t effective_batch_size(std::size_t train_rows) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double max_gradient_score = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::size_t> max_gradient_batch;
  bool reversal_applied = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;

  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  Network network;
  TrainHistory history;
};

/// Minibatch SGD with end-of-epoch gradient reversal.
///
/// Each epoch reshuffles the training rows and walks them in minibatches.
/// Once the epoch index passes gr_start_epoch, every batch's bottleneck
/// weight gradient is scored and the full gradient set of the highest scoring
/// batch is retained (lowest batch index on ties). After the last batch that
/// stored gradient is added back, theta <- theta + lr * g, undoing the
/// largest update of the epoch against the current parameters.
///
/// Validation loss is measured after the reversal. Training stops once it has
/// failed to improve on the best value by min_improvement for `patience`
/// consecutive epochs; the parameters of the lowest validation loss epoch are
/// returned. Throws std::runtime_error on a non-finite loss.
TrainResult train(Network net, const Matrix& train_data, const Matrix& val_data,
                  const TrainConfig& cfg);

/// Bottleneck activations, one row per input row.
Matrix encode(const Network& net, const Matrix& data);

/// Per-row smooth L1 loss between reconstruction and input.
Vector reconstruction_error(const Network& net, const Matrix& data);

/// Versioned JSON model file: widths, activation tags, weights, biases and the
/// normalization that was applied to the inputs. Doubles round-trip exactly.
void save_model(const std::filesystem::path& path, const Network& net,
                const data::NormParams& norm);
std::pair<Network, data::NormParams> load_model(const std::filesystem::path& path);

}  // namespace aegr::ae

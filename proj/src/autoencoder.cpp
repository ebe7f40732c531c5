#include "aegr/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace aegr::ae {

namespace {

constexpr int kModelFormatVersion = 1;
constexpr const char* kModelFormatName = "aegr-autoencoder";

void check_width(const Network& net, const Matrix& batch) {
  if (batch.cols() != net.input_width()) {
    throw std::invalid_argument("batch has " + std::to_string(batch.cols()) +
                                " columns, network expects " + std::to_string(net.input_width()));
  }
}

Matrix gather_rows(const Matrix& data, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), data.cols());
  for (std::size_t i = begin; i < end; ++i) {
    out.row(static_cast<Eigen::Index>(i - begin)) = data.row(static_cast<Eigen::Index>(order[i]));
  }
  return out;
}

double batch_loss_checked(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss at epoch " << epoch << ", batch " << batch
        << " (try a smaller learning rate)";
    throw std::runtime_error(msg.str());
  }
  return loss;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::vector<Eigen::Index> Network::widths() const {
  std::vector<Eigen::Index> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().fan_in());
  for (const auto& layer : layers) w.push_back(layer.fan_out());
  return w;
}

std::size_t Network::num_parameters() const {
  std::size_t total = 0;
  for (const auto& layer : layers) {
    total += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  }
  return total;
}

bool Network::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const LayerParams& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

bool Network::operator==(const Network& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
        a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& layer : net.layers) {
    g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    g.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return g;
}

Gradients& Gradients::operator*=(double c) {
  for (auto& w : weights) w *= c;
  for (auto& b : bias) b *= c;
  return *this;
}

Gradients Gradients::operator-() const {
  Gradients g = *this;
  g *= -1.0;
  return g;
}

Eigen::Index bottleneck_width(Eigen::Index n_features) {
  if (n_features < 1) throw std::invalid_argument("n_features must be at least 1");
  return static_cast<Eigen::Index>(std::floor(1.0 + std::sqrt(static_cast<double>(n_features))));
}

Eigen::Index hidden_width(Eigen::Index n_features, Eigen::Index bottleneck) {
  return static_cast<Eigen::Index>(
      std::lround(std::sqrt(static_cast<double>(n_features) * static_cast<double>(bottleneck))));
}

Network build_architecture(Eigen::Index n_features, std::uint64_t seed) {
  const Eigen::Index m = bottleneck_width(n_features);
  const Eigen::Index h = hidden_width(n_features, m);
  const std::vector<Eigen::Index> widths{n_features, h, m, h, n_features};

  std::mt19937_64 rng(seed);
  Network net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LayerParams layer;
    const Eigen::Index fan_in = widths[i];
    const Eigen::Index fan_out = widths[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-bound, bound);
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = init(rng);
    }
    layer.bias = Vector::Zero(fan_out);
    layer.activation = i + 2 == widths.size() ? Activation::identity : Activation::tanh;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

double activation_tanh(double x) { return std::tanh(x); }

ForwardPass forward(const Network& net, const Matrix& batch) {
  check_width(net, batch);
  ForwardPass pass;
  pass.activations.reserve(net.layers.size() + 1);
  pass.activations.push_back(batch);
  for (const auto& layer : net.layers) {
    Matrix z = pass.activations.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (layer.activation == Activation::tanh) z = z.array().tanh().matrix();
    pass.activations.push_back(std::move(z));
  }
  return pass;
}

double smooth_l1_loss(const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw std::invalid_argument("smooth_l1_loss: shape mismatch");
  }
  if (output.size() == 0) return 0.0;
  const auto e = (output - target).array().abs();
  const double total = (e < 1.0).select(0.5 * e.square(), e - 0.5).sum();
  return total / static_cast<double>(output.size());
}

Gradients backward(const Network& net, const ForwardPass& pass, const Matrix& target) {
  if (pass.activations.size() != net.layers.size() + 1) {
    throw std::invalid_argument("backward: forward pass does not match network depth");
  }
  const Matrix& output = pass.output();
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw std::invalid_argument("backward: target shape mismatch");
  }

  Gradients grads = Gradients::zeros_like(net);
  // dL/d(output): derivative of the smooth L1 term is the error clipped to [-1, 1].
  Matrix delta = (output - target).array().max(-1.0).min(1.0).matrix() /
                 static_cast<double>(output.size());

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    if (layer.activation == Activation::tanh) {
      const Matrix& a = pass.activations[l + 1];
      delta = (delta.array() * (1.0 - a.array().square())).matrix();
    }
    const Matrix& input = pass.activations[l];
    grads.weights[l] = delta.transpose() * input;
    grads.bias[l] = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * layer.weights;
  }
  return grads;
}

void sgd_step(Network& net, const Gradients& grads, double lr) {
  if (grads.weights.size() != net.layers.size() || grads.bias.size() != net.layers.size()) {
    throw std::invalid_argument("sgd_step: gradient does not match network depth");
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    net.layers[l].weights -= lr * grads.weights[l];
    net.layers[l].bias -= lr * grads.bias[l];
  }
}

double gradient_score(const Matrix& bottleneck_grads) { return bottleneck_grads.norm(); }

std::size_t default_batch_size(std::size_t train_rows) { return train_rows > 2000 ? 64 : 16; }

void TrainConfig::validate() const {
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be a positive finite number");
  }
  if (patience == 0) throw std::invalid_argument("patience must be positive");
  if (min_improvement < 0.0) throw std::invalid_argument("min_improvement must be non-negative");
}

TrainConfig TrainConfig::without_reversal() const {
  TrainConfig cfg = *this;
  cfg.gr_start_epoch = std::max(cfg.gr_start_epoch, cfg.max_epochs);
  return cfg;
}

std::size_t TrainConfig::effective_batch_size(std::size_t train_rows) const {
  return batch_size == 0 ? default_batch_size(train_rows) : batch_size;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_loss,val_loss,max_GS,reversal_applied\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',';
    if (e.max_gradient_batch) out << e.max_gradient_score;
    out << ',' << (e.reversal_applied ? 1 : 0) << '\n';
  }
}

TrainResult train(Network net, const Matrix& train_data, const Matrix& val_data,
                  const TrainConfig& cfg) {
  cfg.validate();
  check_width(net, train_data);
  check_width(net, val_data);
  const auto n = static_cast<std::size_t>(train_data.rows());
  if (n == 0) throw std::invalid_argument("train: empty training set");
  if (val_data.rows() == 0) throw std::invalid_argument("train: empty validation set");

  const std::size_t batch_size = cfg.effective_batch_size(n);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.network = net;
  auto& history = result.history;
  std::size_t epochs_without_improvement = 0;
  double reference_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const bool score_batches = epoch > cfg.gr_start_epoch;

    EpochRecord record;
    record.epoch = epoch;
    double loss_sum = 0.0;
    std::optional<Gradients> max_grads;

    std::size_t batch_id = 0;
    for (std::size_t begin = 0; begin < n; begin += batch_size, ++batch_id) {
      const std::size_t end = std::min(n, begin + batch_size);
      const Matrix batch = gather_rows(train_data, order, begin, end);
      const ForwardPass pass = forward(net, batch);
      const double loss = batch_loss_checked(smooth_l1_loss(pass.output(), batch), epoch, batch_id);
      loss_sum += loss * static_cast<double>(end - begin);

      Gradients grads = backward(net, pass, batch);
      if (score_batches) {
        const double score = gradient_score(grads.bottleneck_weights());
        if (!record.max_gradient_batch || score > record.max_gradient_score) {
          record.max_gradient_score = score;
          record.max_gradient_batch = batch_id;
          max_grads = grads;
        }
      }
      sgd_step(net, grads, cfg.learning_rate);
    }

    if (max_grads) {
      sgd_step(net, -*max_grads, cfg.learning_rate);
      record.reversal_applied = true;
    }

    record.train_loss = loss_sum / static_cast<double>(n);
    record.val_loss = smooth_l1_loss(forward(net, val_data).output(), val_data);
    if (!std::isfinite(record.val_loss)) {
      throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(record);

    if (record.val_loss < history.best_val_loss) {
      history.best_val_loss = record.val_loss;
      history.best_epoch = epoch;
      result.network = net;
    }
    if (record.val_loss < reference_loss - cfg.min_improvement) {
      reference_loss = record.val_loss;
      epochs_without_improvement = 0;
    } else if (++epochs_without_improvement >= cfg.patience) {
      history.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return result;
}

Matrix encode(const Network& net, const Matrix& data) {
  check_width(net, data);
  Matrix a = data;
  for (std::size_t l = 0; l <= Network::kBottleneckLayer; ++l) {
    const auto& layer = net.layers[l];
    Matrix z = a * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (layer.activation == Activation::tanh) z = z.array().tanh().matrix();
    a = std::move(z);
  }
  return a;
}

Vector reconstruction_error(const Network& net, const Matrix& data) {
  const Matrix output = forward(net, data).output();
  const auto e = (output - data).array().abs();
  const Matrix elementwise = (e < 1.0).select(0.5 * e.square(), e - 0.5);
  return elementwise.rowwise().mean();
}

void save_model(const std::filesystem::path& path, const Network& net,
                const data::NormParams& norm) {
  using nlohmann::json;
  json doc;
  doc["format"] = kModelFormatName;
  doc["version"] = kModelFormatVersion;
  doc["widths"] = net.widths();
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json l;
    l["activation"] = to_string(layer.activation);
    json rows = json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      rows.push_back(std::vector<double>(layer.weights.row(r).begin(), layer.weights.row(r).end()));
    }
    l["weights"] = std::move(rows);
    l["bias"] = std::vector<double>(layer.bias.begin(), layer.bias.end());
    layers.push_back(std::move(l));
  }
  doc["layers"] = std::move(layers);
  doc["normalization"] = {{"min", norm.min}, {"max", norm.max}};

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out << doc.dump(1) << '\n';
}

std::pair<Network, data::NormParams> load_model(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  const json doc = json::parse(in);
  if (doc.value("format", "") != kModelFormatName) {
    throw std::runtime_error(path.string() + " is not an autoencoder model file");
  }
  if (doc.at("version").get<int>() != kModelFormatVersion) {
    throw std::runtime_error("unsupported model version " + doc.at("version").dump());
  }

  Network net;
  for (const auto& l : doc.at("layers")) {
    LayerParams layer;
    layer.activation = activation_from_string(l.at("activation").get<std::string>());
    const auto rows = l.at("weights").get<std::vector<std::vector<double>>>();
    const auto bias = l.at("bias").get<std::vector<double>>();
    const auto cols = rows.empty() ? std::size_t{0} : rows.front().size();
    layer.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw std::runtime_error("ragged weight matrix in model file");
      for (std::size_t c = 0; c < cols; ++c) {
        layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    if (bias.size() != rows.size()) throw std::runtime_error("bias/weight size mismatch in model");
    layer.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    net.layers.push_back(std::move(layer));
  }
  for (std::size_t l = 1; l < net.layers.size(); ++l) {
    if (net.layers[l].fan_in() != net.layers[l - 1].fan_out()) {
      throw std::runtime_error("model layers do not chain");
    }
  }
  if (doc.at("widths").get<std::vector<Eigen::Index>>() != net.widths()) {
    throw std::runtime_error("model widths disagree with layer shapes");
  }

  data::NormParams norm;
  norm.min = doc.at("normalization").at("min").get<std::vector<double>>();
  norm.max = doc.at("normalization").at("max").get<std::vector<double>>();
  return {std::move(net), std::move(norm)};
}

}  // namespace aegr::ae

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "aegr/autoencoder.hpp"
#include "oracles.hpp"

namespace aegr::ae {
namespace {

Network zero_network(Eigen::Index n) {
  Network net = build_architecture(n, 0);
  for (auto& layer : net.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  return net;
}

TEST(Architecture, BottleneckWidths) {
  EXPECT_EQ(bottleneck_width(16), 5);
  EXPECT_EQ(bottleneck_width(1558), 40);
  EXPECT_EQ(bottleneck_width(1), 2);
  EXPECT_EQ(bottleneck_width(122), 12);
}

TEST(Architecture, SymmetricFiveNodeLayers) {
  const auto net = build_architecture(16, 3);
  const std::vector<Eigen::Index> expected{16, 9, 5, 9, 16};
  EXPECT_EQ(net.widths(), expected);
  EXPECT_EQ(net.latent_width(), 5);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
    EXPECT_LE(layer.weights.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(layer.bias, Vector::Zero(layer.fan_out()));
    EXPECT_EQ(layer.activation, l + 1 == net.layers.size() ? Activation::identity : Activation::tanh);
  }
}

TEST(Architecture, SeededInitialization) {
  EXPECT_EQ(build_architecture(9, 4), build_architecture(9, 4));
  EXPECT_FALSE(build_architecture(9, 4) == build_architecture(9, 5));
  EXPECT_THROW(build_architecture(0, 0), std::invalid_argument);
}

TEST(Tanh, OddAndSaturating) {
  EXPECT_EQ(activation_tanh(0.0), 0.0);
  for (double x : {0.1, 0.7, 3.0, 19.0, 400.0}) EXPECT_EQ(activation_tanh(x), -activation_tanh(-x));
  EXPECT_NEAR(activation_tanh(50.0), 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(activation_tanh(1e308)));
}

TEST(Forward, ZeroNetworkOutputsZeros) {
  const auto net = zero_network(6);
  std::mt19937_64 rng(1);
  const auto pass = forward(net, oracle::random_matrix(4, 6, rng, -5, 5));
  EXPECT_EQ(pass.output(), Matrix::Zero(4, 6));
}

TEST(Forward, ShapesAndLatentRange) {
  const auto net = build_architecture(16, 2);
  std::mt19937_64 rng(2);
  const auto pass = forward(net, oracle::random_matrix(1, 16, rng, -50, 50));
  ASSERT_EQ(pass.activations.size(), 5u);
  EXPECT_EQ(pass.output().rows(), 1);
  EXPECT_EQ(pass.output().cols(), 16);
  EXPECT_EQ(pass.latent().cols(), 5);
  EXPECT_LE(pass.latent().cwiseAbs().maxCoeff(), 1.0);
  EXPECT_THROW(forward(net, Matrix::Zero(1, 15)), std::invalid_argument);
}

TEST(SmoothL1, PiecewiseValues) {
  EXPECT_EQ(smooth_l1_loss(Matrix::Ones(3, 2), Matrix::Ones(3, 2)), 0.0);
  EXPECT_EQ(smooth_l1_loss(Matrix::Constant(1, 1, 0.5), Matrix::Zero(1, 1)), 0.125);
  EXPECT_EQ(smooth_l1_loss(Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1)), 1.5);
  EXPECT_EQ(smooth_l1_loss((Matrix(1, 2) << 0.5, -2.0).finished(), Matrix::Zero(1, 2)), (0.125 + 1.5) / 2);
  EXPECT_THROW(smooth_l1_loss(Matrix::Zero(1, 2), Matrix::Zero(2, 1)), std::invalid_argument);
}

TEST(Backward, ZeroErrorGivesZeroGradients) {
  // An all-zero network reproduces an all-zero batch exactly.
  const auto net = zero_network(5);
  const Matrix batch = Matrix::Zero(3, 5);
  const auto g = backward(net, forward(net, batch), batch);
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    EXPECT_EQ(g.weights[l].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.bias[l].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::size_t checked = 0;
  while (checked < 20) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng() % 5);
    const auto net = oracle::random_network({n, 3, 2, 3, n}, rng);
    const Matrix batch = oracle::random_matrix(rows, n, rng, -1.5, 1.5);
    if (oracle::min_distance_to_kink(net, batch) < 1e-3) continue;
    const auto analytic = backward(net, forward(net, batch), batch);
    const auto numeric = oracle::finite_difference(net, batch, 1e-5);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      for (Eigen::Index i = 0; i < analytic.weights[l].size(); ++i) {
        EXPECT_LT(oracle::relative_error(analytic.weights[l].data()[i], numeric.weights[l].data()[i]), 1e-4);
      }
      for (Eigen::Index i = 0; i < analytic.bias[l].size(); ++i) {
        EXPECT_LT(oracle::relative_error(analytic.bias[l](i), numeric.bias[l](i)), 1e-4);
      }
    }
    ++checked;
  }
}

TEST(Backward, GradientsScaleWithLoss) {
  // c * loss differentiates to c * g; checked against central differences.
  std::mt19937_64 rng(9);
  const auto net = oracle::random_network({4, 3, 2, 3, 4}, rng);
  const Matrix batch = oracle::random_matrix(3, 4, rng, -0.5, 0.5);
  auto scaled = backward(net, forward(net, batch), batch);
  scaled *= 3.0;
  const auto fd = oracle::finite_difference(net, batch, 1e-5);
  for (std::size_t l = 0; l < scaled.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < scaled.weights[l].size(); ++i) {
      EXPECT_LT(oracle::relative_error(scaled.weights[l].data()[i], 3.0 * fd.weights[l].data()[i]), 1e-4);
    }
  }
}

TEST(SgdStep, ZeroLearningRateLeavesParameters) {
  std::mt19937_64 rng(4);
  auto net = oracle::random_network({3, 2, 2, 2, 3}, rng);
  const auto before = net;
  const Matrix batch = oracle::random_matrix(2, 3, rng);
  sgd_step(net, backward(net, forward(net, batch), batch), 0.0);
  EXPECT_EQ(net, before);
}

TEST(SgdStep, SingleWeightArithmetic) {
  Network net;
  net.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1), Activation::identity});
  Gradients g = Gradients::zeros_like(net);
  g.weights[0](0, 0) = 0.5;
  sgd_step(net, g, 0.1);
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 0), 0.95);
}

TEST(SgdStep, OppositeStepRestoresDyadicParameters) {
  // Exact whenever the products and sums are representable without rounding.
  Network net;
  net.layers.push_back({(Matrix(1, 3) << 1.0, -0.75, 4.0).finished(), Vector::Constant(1, 0.5),
                        Activation::identity});
  const auto before = net;
  Gradients g = Gradients::zeros_like(net);
  g.weights[0] << 0.5, 2.0, -1.25;
  g.bias[0] << 0.25;
  sgd_step(net, g, 0.125);
  sgd_step(net, -g, 0.125);
  EXPECT_EQ(net, before);
}

TEST(GradientScore, FrobeniusNorm) {
  EXPECT_EQ(gradient_score((Matrix(1, 2) << 3, 4).finished()), 5.0);
  EXPECT_EQ(gradient_score(Matrix::Zero(3, 3)), 0.0);
  EXPECT_EQ(gradient_score(Matrix::Ones(2, 2)), 2.0);
}

TEST(TrainConfig, BatchSizeDefaultsAndValidation) {
  EXPECT_EQ(default_batch_size(2001), 64u);
  EXPECT_EQ(default_batch_size(2000), 16u);
  TrainConfig cfg;
  EXPECT_EQ(cfg.effective_batch_size(5000), 64u);
  cfg.batch_size = 7;
  EXPECT_EQ(cfg.effective_batch_size(5000), 7u);
  EXPECT_TRUE(TrainConfig{}.reversal_enabled());
  EXPECT_FALSE(TrainConfig{}.without_reversal().reversal_enabled());
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

struct Toy {
  Matrix train;
  Matrix val;
};

Toy toy_data(std::uint64_t seed, Eigen::Index rows = 120, Eigen::Index dim = 6) {
  const auto s = oracle::embedded_blob(static_cast<std::size_t>(rows + rows / 4), 0, dim, seed);
  return {s.features.topRows(rows), s.features.bottomRows(rows / 4)};
}

TEST(Train, WithoutReversalMatchesPlainTrainer) {
  const auto data = toy_data(5);
  TrainConfig cfg;
  cfg.max_epochs = 25;
  cfg.gr_start_epoch = 25;
  cfg.learning_rate = 0.05;
  cfg.seed = 17;
  const auto init = build_architecture(6, 3);
  const auto ours = train(init, data.train, data.val, cfg);
  const auto ref = oracle::plain_sgd_train(init, data.train, data.val, cfg);
  EXPECT_EQ(ours.network, ref.network);
  ASSERT_EQ(ours.history.epochs.size(), ref.val_losses.size());
  for (std::size_t i = 0; i < ref.val_losses.size(); ++i) {
    EXPECT_EQ(ours.history.epochs[i].val_loss, ref.val_losses[i]);
    EXPECT_FALSE(ours.history.epochs[i].reversal_applied);
  }
}

TEST(Train, DeterministicPerSeed) {
  const auto data = toy_data(6);
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.gr_start_epoch = 2;
  cfg.seed = 3;
  const auto a = train(build_architecture(6, 1), data.train, data.val, cfg);
  const auto b = train(build_architecture(6, 1), data.train, data.val, cfg);
  EXPECT_EQ(a.network, b.network);
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    EXPECT_EQ(a.history.epochs[i].val_loss, b.history.epochs[i].val_loss);
    EXPECT_EQ(a.history.epochs[i].max_gradient_batch, b.history.epochs[i].max_gradient_batch);
  }
}

TEST(Train, ReversalStartsAfterConfiguredEpoch) {
  const auto data = toy_data(8);
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.gr_start_epoch = 3;
  cfg.patience = 100;
  const auto r = train(build_architecture(6, 1), data.train, data.val, cfg);
  ASSERT_EQ(r.history.epochs.size(), 8u);
  for (const auto& e : r.history.epochs) {
    EXPECT_EQ(e.reversal_applied, e.epoch > 3) << "epoch " << e.epoch;
    EXPECT_EQ(e.max_gradient_batch.has_value(), e.epoch > 3);
    if (e.epoch > 3) EXPECT_GE(e.max_gradient_score, 0.0);
  }
}

TEST(Train, SingleBatchReversalUndoesThatUpdate) {
  // With one batch per epoch and reversal from epoch 1, the epoch applies the
  // batch update and then adds it back: parameters return to where they began
  // up to rounding.
  const auto data = toy_data(10, 12, 4);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.gr_start_epoch = 0;
  cfg.batch_size = 12;
  cfg.learning_rate = 0.1;
  const auto init = build_architecture(4, 2);
  const auto r = train(init, data.train, data.val, cfg);
  ASSERT_TRUE(r.history.epochs[0].reversal_applied);
  EXPECT_EQ(*r.history.epochs[0].max_gradient_batch, 0u);
  for (std::size_t l = 0; l < init.layers.size(); ++l) {
    EXPECT_LT((r.network.layers[l].weights - init.layers[l].weights).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((r.network.layers[l].bias - init.layers[l].bias).cwiseAbs().maxCoeff(), 1e-15);
  }
  // The recorded score is the Frobenius norm of that batch's bottleneck gradient.
  const auto g = backward(init, forward(init, data.train), data.train);
  EXPECT_NEAR(r.history.epochs[0].max_gradient_score, gradient_score(g.bottleneck_weights()), 1e-9);
}

TEST(Train, ReturnsBestValidationNetwork) {
  const auto data = toy_data(12);
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.gr_start_epoch = 2;
  cfg.learning_rate = 0.2;
  cfg.patience = 4;
  const auto r = train(build_architecture(6, 9), data.train, data.val, cfg);
  const double returned = smooth_l1_loss(forward(r.network, data.val).output(), data.val);
  EXPECT_EQ(returned, r.history.best_val_loss);
  for (const auto& e : r.history.epochs) EXPECT_LE(returned, e.val_loss);
  EXPECT_EQ(r.history.epochs[r.history.best_epoch - 1].val_loss, returned);
}

TEST(Train, StopsEarlyWithoutImprovement) {
  const auto data = toy_data(13);
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.learning_rate = 1e-12;  // far below min_improvement after the first epoch
  cfg.patience = 3;
  const auto r = train(build_architecture(6, 9), data.train, data.val, cfg);
  EXPECT_TRUE(r.history.stopped_early);
  EXPECT_EQ(r.history.epochs.size(), 4u);
}

TEST(Train, NonFiniteLossAborts) {
  auto data = toy_data(14);
  data.train(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.max_epochs = 2;
  EXPECT_THROW(train(build_architecture(6, 9), data.train, data.val, cfg), std::runtime_error);
}

TEST(Encode, LatentShapeRangeAndDuplicates) {
  const auto net = build_architecture(16, 1);
  std::mt19937_64 rng(3);
  Matrix x = oracle::random_matrix(5, 16, rng, -3, 3);
  x.row(4) = x.row(1);
  const Matrix z = encode(net, x);
  EXPECT_EQ(z.cols(), 5);
  EXPECT_EQ(z.row(4), z.row(1));
  EXPECT_LT(z.cwiseAbs().maxCoeff(), 1.0);
}

TEST(ReconstructionError, ZeroAtFixedPoint) {
  EXPECT_EQ(reconstruction_error(zero_network(4), Matrix::Zero(3, 4)), Vector::Zero(3));
}

TEST(ReconstructionError, RowwiseLossAndPermutation) {
  const auto net = build_architecture(5, 4);
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(6, 5, rng, -2, 2);
  const Vector re = reconstruction_error(net, x);
  const Matrix out = forward(net, x).output();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    EXPECT_NEAR(re(r), smooth_l1_loss(out.row(r), x.row(r)), 1e-15);
    EXPECT_GE(re(r), 0.0);
  }
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  // Blocked matrix products may round a row differently depending on where it
  // sits in the batch, so equality is to within a few ulps.
  const Vector permuted = reconstruction_error(net, perm * x);
  const Vector expected = perm * re;
  for (Eigen::Index r = 0; r < x.rows(); ++r) EXPECT_NEAR(permuted(r), expected(r), 1e-14);
}

TEST(ModelFile, RoundTripsExactly) {
  const auto net = build_architecture(7, 11);
  data::NormParams norm{{0.1, -2, 3, 4, 5, 6, 7}, {1.0 / 3.0, 2, 8, 9, 10, 11, 12}};
  const auto path = std::filesystem::temp_directory_path() / "aegr_model_roundtrip.json";
  save_model(path, net, norm);
  const auto [loaded, loaded_norm] = load_model(path);
  EXPECT_EQ(loaded, net);
  EXPECT_EQ(loaded_norm.min, norm.min);
  EXPECT_EQ(loaded_norm.max, norm.max);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsForeignFiles) {
  const auto path = std::filesystem::temp_directory_path() / "aegr_model_bad.json";
  std::ofstream(path) << R"({"format":"something-else","version":1})";
  EXPECT_THROW(load_model(path), std::runtime_error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace aegr::ae

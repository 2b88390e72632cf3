#include "smaui/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "smaui/errors.hpp"
#include "test_util.hpp"

namespace smaui {
namespace {

using testing::finite_difference;
using testing::random_matrix;
using testing::relative_error;

NetworkParams zero_network(std::size_t d, std::size_t p, std::size_t k, EmbeddingMode mode) {
  NetworkParams net;
  net.encoder.push_back({Matrix(d, p), Matrix(1, p)});
  net.classifier.push_back({Matrix(p, k), Matrix(1, k)});
  net.embedding_mode = mode;
  return net;
}

NetworkParams random_network(std::mt19937_64& rng, EmbeddingMode mode = EmbeddingMode::PreSoftmax) {
  Architecture arch;
  arch.input_dim = 3;
  arch.encoder_hidden = {5};
  arch.embedding_dim = 4;
  arch.num_classes = 3;
  arch.embedding_mode = mode;
  Rng init(rng());
  NetworkParams net = init_network(arch, init);
  for (Matrix* t : net.tensors())
    for (double& v : t->data()) v += 0.1 * std::normal_distribution<double>()(rng);
  return net;
}

TEST(Encode, ZeroNetworkGivesZeroEmbedding) {
  const NetworkParams net = zero_network(3, 4, 2, EmbeddingMode::PreSoftmax);
  const Matrix z = encode(net, Matrix{{1, 2, 3}, {-1, 0, 5}});
  EXPECT_EQ(z, Matrix(2, 4));
}

TEST(Encode, ZeroNetworkInSimplexModeIsUniform) {
  const NetworkParams net = zero_network(3, 4, 2, EmbeddingMode::Simplex);
  const Matrix z = encode(net, Matrix{{1, 2, 3}});
  for (double v : z.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Encode, MatchesManualForwardPass) {
  std::mt19937_64 rng(5);
  const NetworkParams net = random_network(rng);
  const Matrix x = random_matrix(1, 3, rng);
  // Hand-rolled loops, independent of matmul/add_row_bias.
  const auto& l0 = net.encoder[0];
  const auto& l1 = net.encoder[1];
  std::vector<double> h(5), z(4);
  for (std::size_t j = 0; j < 5; ++j) {
    double s = l0.bias(0, j);
    for (std::size_t i = 0; i < 3; ++i) s += x(0, i) * l0.weight(i, j);
    h[j] = std::tanh(s);
  }
  for (std::size_t j = 0; j < 4; ++j) {
    double s = l1.bias(0, j);
    for (std::size_t i = 0; i < 5; ++i) s += h[i] * l1.weight(i, j);
    z[j] = s;
  }
  const Matrix got = encode(net, x);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got(0, j), z[j], 1e-14);
}

TEST(Encode, WrongInputWidthIsShapeError) {
  const NetworkParams net = zero_network(3, 4, 2, EmbeddingMode::PreSoftmax);
  EXPECT_THROW(encode(net, Matrix(2, 2)), ShapeError);
  EXPECT_THROW(classify(net, Matrix(2, 3)), ShapeError);
}

TEST(Classify, ZeroLogitsAreUniform) {
  const NetworkParams net = zero_network(2, 3, 2, EmbeddingMode::PreSoftmax);
  const Matrix p = classify(net, Matrix{{1, 2, 3}});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Classify, SaturatedLogits) {
  NetworkParams net = zero_network(1, 1, 2, EmbeddingMode::PreSoftmax);
  net.classifier[0].bias = Matrix{{10.0, -10.0}};
  const Matrix p = classify(net, Matrix{{0.0}});
  EXPECT_NEAR(p(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-8);
}

TEST(Classify, ComposedModelIsRowStochastic) {
  std::mt19937_64 rng(8);
  for (auto mode : {EmbeddingMode::PreSoftmax, EmbeddingMode::Simplex}) {
    const NetworkParams net = random_network(rng, mode);
    const Matrix x = random_matrix(100, 3, rng, 3.0);
    const Matrix p = predict_proba(net, x);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (double v : p.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Encode, SimplexModeEmbeddingsLieOnSimplex) {
  std::mt19937_64 rng(12);
  const NetworkParams net = random_network(rng, EmbeddingMode::Simplex);
  const Matrix z = encode(net, random_matrix(200, 3, rng, 4.0));
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double s = 0.0;
    for (double v : z.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CrossEntropyValue, PerfectPredictionIsZero) {
  const std::vector<int> y{0, 1};
  EXPECT_NEAR(cross_entropy(Matrix{{1, 0}, {0, 1}}, y), 0.0, 1e-10);
}

TEST(CrossEntropyValue, UniformOverTenClassesIsLogTen) {
  const std::vector<int> y{3};
  EXPECT_NEAR(cross_entropy(Matrix(1, 10, 0.1), y), 2.302585, 1e-6);
}

TEST(CrossEntropyValue, HandEvaluatedExample) {
  const std::vector<int> y{0};
  EXPECT_NEAR(cross_entropy(Matrix{{0.7, 0.3}}, y), 0.356675, 1e-6);
}

TEST(CrossEntropyValue, ClampsZeroProbability) {
  const std::vector<int> y{1};
  EXPECT_NEAR(cross_entropy(Matrix{{1.0, 0.0}}, y), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropyValue, LabelOutOfRange) {
  const std::vector<int> y{2};
  EXPECT_THROW(cross_entropy(Matrix{{0.5, 0.5}}, y), ContractError);
}

TEST(ComposedGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (auto mode : {EmbeddingMode::PreSoftmax, EmbeddingMode::Simplex}) {
    for (int trial = 0; trial < 5; ++trial) {
      const NetworkParams net = random_network(rng, mode);
      const Matrix x = random_matrix(7, 3, rng);
      const std::vector<int> y{0, 1, 2, 0, 1, 2, 0};
      Tape tape;
      const BoundNetwork bound = bind(tape, net);
      const Gradients g = tape.backward(ad::cross_entropy(classify(bound, encode(bound, tape.constant(x))), y));
      const auto grads = collect_gradients(bound, g);
      const auto tensors = net.tensors();
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto f = [&](const Matrix& m) {
          NetworkParams probe = net;
          *probe.tensors()[t] = m;
          return cross_entropy(predict_proba(probe, x), y);
        };
        EXPECT_LT(relative_error(grads[t], finite_difference(f, *tensors[t])), 1e-4) << "tensor " << t;
      }
    }
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Matrix p{{1.0, -2.0}};
  const Matrix before = p;
  std::vector<Matrix*> params{&p};
  std::vector<Matrix> grads{Matrix(1, 2)};
  AdamState state = AdamState::zeros_like(std::vector<const Matrix*>{&p});
  for (int i = 0; i < 3; ++i) adam_step(params, grads, state, 1e-2);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 3);
}

TEST(Adam, FirstStepWithConstantGradient) {
  // Step 1: m = (1-b1) g, v = (1-b2) g^2, bias correction restores g and g^2,
  // so the update is -lr * g / (|g| + eps).
  const double lr = 1e-4;
  Matrix p{{0.5, 0.5, 0.5}};
  const Matrix g{{3.0, -0.2, 1e-3}};
  std::vector<Matrix*> params{&p};
  std::vector<Matrix> grads{g};
  AdamState state = AdamState::zeros_like(std::vector<const Matrix*>{&p});
  adam_step(params, grads, state, lr);
  for (std::size_t i = 0; i < 3; ++i) {
    const double gi = g(0, i);
    EXPECT_NEAR(p(0, i), 0.5 - lr * gi / (std::abs(gi) + 1e-8), 1e-15);
    EXPECT_NEAR(p(0, i), 0.5 - lr * (gi > 0 ? 1.0 : -1.0), lr * 1e-4);
  }
}

TEST(Adam, ShapeMismatchIsError) {
  Matrix p(1, 2);
  std::vector<Matrix*> params{&p};
  AdamState state;
  EXPECT_THROW(adam_step(params, std::vector<Matrix>{Matrix(2, 1)}, state, 1e-3), ShapeError);
  EXPECT_THROW(adam_step(params, std::vector<Matrix>{}, state, 1e-3), ContractError);
}

TEST(TrainSource, SeparableBlobsReachHighAccuracy) {
  const Dataset ds = testing::separable_blobs(500, 0.5, 0.5, 17);
  Architecture arch;
  SourceTrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 3;
  const SourceTrainResult r = train_source(ds, arch, cfg);
  EXPECT_GE(accuracy(r.params, ds), 0.99);
  ASSERT_EQ(r.epoch_loss.size(), 200u);
  for (double l : r.epoch_loss) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LE(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(TrainSource, ZeroEpochsIsContractError) {
  const Dataset ds = testing::separable_blobs(20, 0.5, 0.5, 1);
  SourceTrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train_source(ds, Architecture{}, cfg), ContractError);
}

TEST(TrainSource, UnlabeledIsContractError) {
  Dataset ds = testing::separable_blobs(20, 0.5, 0.5, 1);
  ds.labels.reset();
  EXPECT_THROW(train_source(ds, Architecture{}, SourceTrainConfig{}), ContractError);
}

TEST(TrainSource, DeterministicGivenSeed) {
  const Dataset ds = testing::separable_blobs(120, 0.5, 0.5, 4);
  SourceTrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 9;
  const SourceTrainResult a = train_source(ds, Architecture{}, cfg);
  const SourceTrainResult b = train_source(ds, Architecture{}, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  testing::TempDir dir("nn");
  std::mt19937_64 rng(2);
  const NetworkParams net = random_network(rng, EmbeddingMode::Simplex);
  save_network(net, dir / "net.bin");
  EXPECT_EQ(load_network(dir / "net.bin"), net);
}

TEST(Checkpoint, PayloadIsLittleEndianInDeclarationOrder) {
  testing::TempDir dir("nn");
  NetworkParams net = zero_network(1, 1, 2, EmbeddingMode::PreSoftmax);
  net.encoder[0].weight(0, 0) = 1.0;  // 0x3FF0000000000000
  save_network(net, dir / "net.bin");
  std::ifstream in(dir / "net.bin", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  // 1 + 1 + 2 + 2 doubles of payload follow the two header lines.
  const std::size_t payload = 6 * 8;
  ASSERT_GT(bytes.size(), payload);
  const std::string first = bytes.substr(bytes.size() - payload, 8);
  EXPECT_EQ(first, std::string("\x00\x00\x00\x00\x00\x00\xF0\x3F", 8));
  EXPECT_EQ(bytes.substr(0, 10), "SMAUI-NET\n");
}

TEST(Checkpoint, TruncatedPayloadIsSchemaError) {
  testing::TempDir dir("nn");
  const NetworkParams net = zero_network(2, 2, 2, EmbeddingMode::PreSoftmax);
  save_network(net, dir / "net.bin");
  const auto size = std::filesystem::file_size(dir / "net.bin");
  std::filesystem::resize_file(dir / "net.bin", size - 8);
  EXPECT_THROW(load_network(dir / "net.bin"), SchemaError);
}

TEST(NetworkParams, ValidateRejectsBrokenChain) {
  NetworkParams net = zero_network(2, 3, 2, EmbeddingMode::PreSoftmax);
  net.classifier[0].weight = Matrix(4, 2);
  EXPECT_THROW(net.validate(), ContractError);
  NetworkParams one_class = zero_network(2, 3, 1, EmbeddingMode::PreSoftmax);
  EXPECT_THROW(one_class.validate(), ContractError);
}

}  // namespace
}  // namespace smaui

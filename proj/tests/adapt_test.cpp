#include "smaui/adapt.hpp"

#include <gtest/gtest.h>

#include "smaui/errors.hpp"
#include "test_util.hpp"

namespace smaui {
namespace {

using testing::random_matrix;

// Linear encoder with W = I, b = 0: the embedding of x is x itself.
NetworkParams identity_encoder_net(std::mt19937_64& rng) {
  NetworkParams net;
  net.encoder.push_back({Matrix::identity(2), Matrix(1, 2)});
  net.classifier.push_back({random_matrix(2, 2, rng), random_matrix(1, 2, rng)});
  return net;
}

TEST(AdaptationLoss, ZeroLambdaIsPureCrossEntropy) {
  std::mt19937_64 rng(1);
  Rng init(2);
  const NetworkParams params = init_network(Architecture{}, init);
  const Matrix xt = random_matrix(16, 2, rng);
  const Matrix zp = random_matrix(16, 8, rng);
  std::vector<int> labels(16);
  for (std::size_t i = 0; i < 16; ++i) labels[i] = static_cast<int>(i % 2);
  const SliceSet s = sample_unit_directions(32, 8, 3);

  Tape tape;
  const BoundNetwork net = bind(tape, params);
  const LossTerms terms = adaptation_loss(net, tape.constant(xt), tape.constant(zp), labels, 0.0, s);
  EXPECT_EQ(terms.total.value()(0, 0), terms.classification.value()(0, 0));
  EXPECT_NEAR(terms.classification.value()(0, 0), cross_entropy(classify(params, zp), labels), 1e-12);
  EXPECT_NEAR(terms.alignment.value()(0, 0), swd2(encode(params, xt), zp, s), 1e-12);
}

TEST(AdaptationLoss, TermsRecombine) {
  std::mt19937_64 rng(3);
  Rng init(4);
  const NetworkParams params = init_network(Architecture{}, init);
  const Matrix xt = random_matrix(10, 2, rng);
  const Matrix zp = random_matrix(10, 8, rng);
  const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0, 1, 1, 1};
  const SliceSet s = sample_unit_directions(20, 8, 5);
  Tape tape;
  const BoundNetwork net = bind(tape, params);
  const LossTerms terms = adaptation_loss(net, tape.constant(xt), tape.constant(zp), labels, 0.37, s);
  const double expected = cross_entropy(classify(params, zp), labels) + 0.37 * swd2(encode(params, xt), zp, s);
  EXPECT_NEAR(terms.total.value()(0, 0), expected, 1e-12);
}

TEST(AdaptationLoss, IdentityEncoderOnPseudoPointsHasNoAlignmentCost) {
  std::mt19937_64 rng(6);
  const NetworkParams params = identity_encoder_net(rng);
  const Matrix z = random_matrix(12, 2, rng);
  const std::vector<int> labels(12, 1);
  Tape tape;
  const BoundNetwork net = bind(tape, params);
  const LossTerms terms =
      adaptation_loss(net, tape.constant(z), tape.constant(z), labels, 5.0, sample_unit_directions(40, 2, 7));
  EXPECT_EQ(terms.alignment.value()(0, 0), 0.0);
}

TEST(AdaptationLoss, BatchSizeMismatchIsContractError) {
  std::mt19937_64 rng(8);
  const NetworkParams params = identity_encoder_net(rng);
  Tape tape;
  const BoundNetwork net = bind(tape, params);
  const std::vector<int> labels(3, 0);
  EXPECT_THROW(adaptation_loss(net, tape.constant(Matrix(4, 2)), tape.constant(Matrix(3, 2)), labels, 1.0,
                               sample_unit_directions(4, 2, 1)),
               ContractError);
}

struct Fixture {
  Dataset source;
  Dataset target;
  NetworkParams params;
  GmmModel gmm;
};

Fixture small_problem(std::uint64_t seed) {
  Fixture f;
  f.source = testing::separable_blobs(200, 0.5, 0.5, seed);
  f.target = testing::separable_blobs(200, 0.5, 0.5, seed + 100);
  for (std::size_t i = 0; i < f.target.size(); ++i) f.target.features(i, 1) += 0.5;
  SourceTrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = seed;
  f.params = train_source(f.source, Architecture{}, cfg).params;
  f.gmm = estimate_gmm(encode(f.params, f.source.features), *f.source.labels, 2);
  return f;
}

TEST(Adapt, ZeroLearningRateLeavesParamsUnchanged) {
  const Fixture f = small_problem(1);
  AdaptConfig cfg;
  cfg.iterations = 1;
  cfg.lambda = 0.0;
  cfg.lr = 0.0;
  cfg.tau = 0.5;
  const AdaptResult r = adapt(f.params, strip_labels(f.target), f.gmm, cfg);
  EXPECT_EQ(r.params, f.params);
  ASSERT_EQ(r.report.records.size(), 1u);
}

TEST(Adapt, DeterministicGivenSeed) {
  const Fixture f = small_problem(2);
  AdaptConfig cfg;
  cfg.iterations = 3;
  cfg.tau = 0.9;
  cfg.seed = 42;
  const UnlabeledDataset t = strip_labels(f.target);
  const AdaptResult a = adapt(f.params, t, f.gmm, cfg);
  const AdaptResult b = adapt(f.params, t, f.gmm, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_TRUE(a.report.same_results(b.report));
  cfg.seed = 43;
  EXPECT_NE(adapt(f.params, t, f.gmm, cfg).params, a.params);
}

TEST(Adapt, EvaluatorDoesNotInfluenceTraining) {
  const Fixture f = small_problem(3);
  AdaptConfig cfg;
  cfg.iterations = 3;
  cfg.tau = 0.9;
  const UnlabeledDataset t = strip_labels(f.target);
  int calls = 0;
  const AdaptResult with_eval = adapt(f.params, t, f.gmm, cfg, [&](const NetworkParams& p) {
    ++calls;
    return accuracy(p, f.target);
  });
  const AdaptResult without = adapt(f.params, t, f.gmm, cfg);
  EXPECT_EQ(with_eval.params, without.params);
  EXPECT_EQ(calls, 4);  // initial + every iteration
  EXPECT_TRUE(with_eval.report.initial_accuracy.has_value());
  EXPECT_EQ(with_eval.report.final_accuracy, with_eval.report.records.back().target_accuracy);
  EXPECT_FALSE(without.report.initial_accuracy.has_value());
}

TEST(Adapt, FrozenEncoderReducesCrossEntropy) {
  const Fixture f = small_problem(4);
  AdaptConfig cfg;
  cfg.iterations = 20;
  cfg.lambda = 0.0;
  cfg.lr = 1e-2;
  cfg.tau = 0.6;
  cfg.freeze_encoder = true;
  const AdaptResult r = adapt(f.params, strip_labels(f.target), f.gmm, cfg);
  for (std::size_t i = 0; i < r.params.encoder.size(); ++i) EXPECT_EQ(r.params.encoder[i], f.params.encoder[i]);
  EXPECT_LT(r.report.records.back().classification, r.report.records.front().classification);
}

TEST(Adapt, PseudoDatasetSummaryIsReported) {
  const Fixture f = small_problem(5);
  AdaptConfig cfg;
  cfg.iterations = 1;
  cfg.tau = 0.9;
  cfg.pseudo_size = 50;
  const AdaptResult r = adapt(f.params, strip_labels(f.target), f.gmm, cfg);
  EXPECT_EQ(r.report.pseudo_requested, 50u);
  EXPECT_EQ(r.report.pseudo_accepted, r.pseudo.accepted());
  EXPECT_GE(r.report.pseudo_attempts, r.report.pseudo_accepted);
  // Without an explicit size the source count stored in the GMM is used.
  cfg.pseudo_size.reset();
  EXPECT_EQ(adapt(f.params, strip_labels(f.target), f.gmm, cfg).report.pseudo_requested, 200u);
}

TEST(Adapt, DimensionMismatchesAreContractErrors) {
  const Fixture f = small_problem(6);
  AdaptConfig cfg;
  cfg.iterations = 1;
  UnlabeledDataset wide{Matrix(10, 3), "wide"};
  EXPECT_THROW(adapt(f.params, wide, f.gmm, cfg), ContractError);
  GmmModel small = f.gmm;
  small.means = Matrix(2, 3);
  EXPECT_THROW(adapt(f.params, strip_labels(f.target), small, cfg), ContractError);
  cfg.tau = 1.0;
  EXPECT_THROW(adapt(f.params, strip_labels(f.target), f.gmm, cfg), ContractError);
}

NetworkParams constant_class0_net() {
  NetworkParams net;
  net.encoder.push_back({Matrix(2, 2), Matrix(1, 2)});
  net.classifier.push_back({Matrix(2, 2), Matrix{{5.0, 0.0}}});
  return net;
}

TEST(Evaluate, ConstantPredictorOnBalancedSet) {
  const Dataset ds = testing::separable_blobs(40, 0.5, 0.5, 1);
  const Metrics m = evaluate(constant_class0_net(), ds);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.confusion, (std::vector<std::vector<std::size_t>>{{20, 0}, {20, 0}}));
  EXPECT_EQ(m.per_class_accuracy[0], 1.0);
  EXPECT_EQ(m.per_class_accuracy[1], 0.0);
}

TEST(Evaluate, PerfectClassifierAndAccuracyConsistency) {
  const Fixture f = small_problem(7);
  const Metrics m = evaluate(f.params, f.source);
  EXPECT_DOUBLE_EQ(m.accuracy, accuracy(f.params, f.source));
  std::size_t diag = 0, total = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      total += m.confusion[i][j];
      if (i == j) diag += m.confusion[i][j];
    }
  EXPECT_EQ(total, f.source.size());
  EXPECT_DOUBLE_EQ(m.accuracy, static_cast<double>(diag) / static_cast<double>(total));
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
}

TEST(Evaluate, EmptyClassHasNoPerClassAccuracy) {
  Dataset ds;
  ds.features = Matrix{{0, 0}, {1, 1}};
  ds.labels = std::vector<int>{0, 0};
  const Metrics m = evaluate(constant_class0_net(), ds);
  EXPECT_FALSE(m.per_class_accuracy[1].has_value());
  EXPECT_TRUE(m.to_json()["per_class_accuracy"][1].is_null());
}

TEST(Evaluate, UnlabeledIsContractError) {
  Dataset ds;
  ds.features = Matrix(2, 2);
  EXPECT_THROW(evaluate(constant_class0_net(), ds), ContractError);
}

TEST(Report, RoundTrip) {
  testing::TempDir dir("report");
  AdaptReport rep;
  rep.records.push_back({1, 0.5, 0.25, 0.50025, 0.75, std::nullopt});
  rep.records.push_back({2, 0.1 + 0.2, 1.0 / 3.0, 0.3, std::nullopt, 0.125});
  rep.initial_accuracy = 0.6;
  rep.final_accuracy = 0.75;
  rep.pseudo_requested = 10;
  rep.pseudo_accepted = 9;
  rep.pseudo_attempts = 12;
  rep.wall_seconds = 3.0;
  write_report(rep, dir / "r.jsonl");
  const AdaptReport back = read_report(dir / "r.jsonl");
  EXPECT_TRUE(back.same_results(rep));
  EXPECT_EQ(back.records, rep.records);
}

TEST(AdaptConfig, ValidateRejectsBadValues) {
  AdaptConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = AdaptConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ContractError);
  c = AdaptConfig{};
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

}  // namespace
}  // namespace smaui

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "satvl/fusion.hpp"
#include "test_util.hpp"

namespace satvl {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr Eigen::Index kD = 512;

VectorXd unit_vector(std::mt19937_64& rng) {
  VectorXd v = testing::random_matrix(kD, 1, rng);
  return v / v.norm();
}

FusionParams random_fusion(int d_out, std::mt19937_64& rng, double scale = 1.0) {
  FusionParams p;
  p.phi = testing::random_matrix(d_out, kD, rng, scale);
  p.ups = testing::random_matrix(1, d_out, rng, scale);
  return p;
}

TEST(AttentionWeights, ZeroPhiIsUniform) {
  std::mt19937_64 rng(1);
  FusionParams p = random_fusion(8, rng);
  p.phi.setZero();
  const auto w = attention_weights(unit_vector(rng), unit_vector(rng), p);
  EXPECT_DOUBLE_EQ(w.rho_sc, 0.5);
  EXPECT_DOUBLE_EQ(w.rho_llm, 0.5);
}

TEST(AttentionWeights, EqualInputsAreUniform) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto p = random_fusion(6, rng, 3.0);
    const auto e = unit_vector(rng);
    const auto w = attention_weights(e, e, p);
    EXPECT_DOUBLE_EQ(w.rho_sc, 0.5);
    EXPECT_DOUBLE_EQ(w.rho_llm, 0.5);
  }
}

// Rank-1 phi with every row atanh(0.5) e_1^T and ups = ones(4): on e_1 each
// tanh is 0.5, so the logit is 2; on the zero vector it is 0.
TEST(AttentionWeights, LogitsTwoAndZero) {
  FusionParams p;
  p.phi = MatrixXd::Zero(4, kD);
  p.phi.col(0).setConstant(std::atanh(0.5));
  p.ups = Eigen::RowVectorXd::Ones(4);
  VectorXd e_sc = VectorXd::Zero(kD);
  e_sc[0] = 1.0;
  const VectorXd e_llm = VectorXd::Zero(kD);
  EXPECT_NEAR(attention_logit(e_sc, p), 2.0, 1e-15);
  EXPECT_EQ(attention_logit(e_llm, p), 0.0);
  const auto w = attention_weights(e_sc, e_llm, p);
  EXPECT_NEAR(w.rho_sc, 0.8807970779778823, 1e-15);
  EXPECT_NEAR(w.rho_llm, 0.11920292202211755, 1e-15);
}

TEST(AttentionWeights, NonFiniteInputRejected) {
  std::mt19937_64 rng(3);
  const auto p = random_fusion(4, rng);
  VectorXd bad = unit_vector(rng);
  bad[7] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(attention_weights(bad, unit_vector(rng), p), std::invalid_argument);
  EXPECT_THROW(attention_weights(unit_vector(rng), VectorXd::Zero(10), p), std::invalid_argument);
}

TEST(AttentionWeights, SimplexAndPositivityUnderRandomDraws) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    const auto p = random_fusion(4, rng, 10.0 * uniform01(rng));
    const VectorXd a = testing::random_matrix(kD, 1, rng, 5.0);
    const VectorXd b = testing::random_matrix(kD, 1, rng, 5.0);
    const auto w = attention_weights(a, b, p);
    ASSERT_NEAR(w.rho_sc + w.rho_llm, 1.0, 1e-9);
    ASSERT_GT(w.rho_sc, 0.0);
    ASSERT_GT(w.rho_llm, 0.0);
  }
}

TEST(Softmax2, ShiftInvariantAndStableAtExtremes) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = 10.0 * standard_normal(rng), b = 10.0 * standard_normal(rng);
    const double c = 100.0 * standard_normal(rng);
    const auto w0 = softmax2(a, b);
    const auto w1 = softmax2(a + c, b + c);
    ASSERT_NEAR(w0.rho_sc, w1.rho_sc, 1e-12);
    ASSERT_NEAR(w0.rho_llm, w1.rho_llm, 1e-12);
  }
  const auto big = softmax2(800.0, 0.0);
  EXPECT_TRUE(std::isfinite(big.rho_sc));
  EXPECT_EQ(big.rho_sc + big.rho_llm, 1.0);
}

TEST(Fuse, EndpointWeights) {
  std::mt19937_64 rng(6);
  const auto a = unit_vector(rng), b = unit_vector(rng);
  EXPECT_EQ(fuse(a, b, {1.0, 0.0}).vector, a);
  EXPECT_EQ(fuse(a, b, {0.0, 1.0}).vector, b);
}

TEST(Fuse, EqualInputsGiveInput) {
  std::mt19937_64 rng(7);
  const auto a = unit_vector(rng);
  for (double r : {0.1, 0.37, 0.5, 0.99}) {
    EXPECT_LT((fuse(a, a, {r, 1.0 - r}).vector - a).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Fuse, ZerosAndOnesQuarterWeights) {
  const auto f = fuse(VectorXd::Zero(kD), VectorXd::Ones(kD), {0.25, 0.75});
  EXPECT_TRUE(f.vector.isConstant(0.75));
  EXPECT_EQ(f.weights.rho_sc, 0.25);
}

TEST(Fuse, OffSimplexRejected) {
  const VectorXd a = VectorXd::Zero(kD);
  EXPECT_THROW(fuse(a, a, {0.6, 0.6}), std::invalid_argument);
  EXPECT_THROW(fuse(a, a, {1.5, -0.5}), std::invalid_argument);
  EXPECT_NO_THROW(fuse(a, a, {0.5, 0.5 + 5e-10}));
}

TEST(Fuse, BoxBound) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const auto p = random_fusion(4, rng);
    const VectorXd a = testing::random_matrix(kD, 1, rng), b = testing::random_matrix(kD, 1, rng);
    const auto f = fuse(a, b, attention_weights(a, b, p));
    ASSERT_TRUE((f.vector.array() >= a.cwiseMin(b).array()).all());
    ASSERT_TRUE((f.vector.array() <= a.cwiseMax(b).array()).all());
  }
}

MlpParams identity_mlp(int h) {
  MlpParams p;
  p.w1 = MatrixXd::Zero(h, kD);
  for (int i = 0; i < h; ++i) p.w1(i, i) = 1.0;
  p.b1 = VectorXd::Zero(h);
  p.gamma = VectorXd::Ones(h);
  p.beta = VectorXd::Zero(h);
  p.running_mean = VectorXd::Zero(h);
  p.running_var = VectorXd::Ones(h);
  p.w2 = Eigen::RowVectorXd::Zero(h);
  p.w2[0] = 1.0;
  p.mode = BnMode::Inference;
  return p;
}

TEST(MlpForward, IdentityComposition) {
  const auto p = identity_mlp(8);
  VectorXd x = VectorXd::Zero(kD);
  x[0] = 1.0;
  EXPECT_NEAR(mlp_forward(x, p), 1.0 / std::sqrt(1.0 + MlpParams::kBnEpsilon), 1e-15);
  EXPECT_NEAR(mlp_forward(x, p), 1.0, 1e-5);
  x[0] = -1.0;
  EXPECT_EQ(mlp_forward(x, p), 0.0);
}

TEST(MlpForward, InferenceIsBatchIndependent) {
  std::mt19937_64 rng(9);
  auto p = identity_mlp(8);
  p.w1 = testing::random_matrix(8, kD, rng);
  p.running_mean = testing::random_matrix(8, 1, rng);
  p.running_var = testing::random_matrix(8, 1, rng).cwiseAbs();
  p.w2 = testing::random_matrix(1, 8, rng);
  const MatrixXd X = testing::random_matrix(5, kD, rng);
  const VectorXd batch = mlp_forward_batch(X, p);
  for (int r = 0; r < 5; ++r) {
    EXPECT_NEAR(batch[r], mlp_forward(X.row(r).transpose(), p), 1e-12);
    EXPECT_NEAR(mlp_forward_batch(X.row(r), p)[0], batch[r], 1e-12);
  }
}

TEST(MlpForward, TrainingModeNeedsTwoRows) {
  auto p = identity_mlp(4);
  p.mode = BnMode::Training;
  const VectorXd x = VectorXd::Ones(kD);
  EXPECT_THROW(mlp_forward(x, p), std::invalid_argument);
  const MatrixXd one = x.transpose();
  EXPECT_THROW(mlp_forward(x, p, &one), std::invalid_argument);
  EXPECT_THROW(mlp_forward_batch(one, p), std::invalid_argument);
  std::mt19937_64 rng(10);
  const MatrixXd X = testing::random_matrix(3, kD, rng);
  const VectorXd out = mlp_forward_batch(X, p);
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(mlp_forward(X.row(r).transpose(), p, &X), out[r], 1e-12);
}

HeadModel random_head(int h, int d_out, std::mt19937_64& rng) {
  HeadModel m = init_head(h, d_out, rng());
  m.fusion.phi *= 0.5;
  m.mlp.b1 = testing::random_matrix(h, 1, rng, 0.1);
  m.mlp.gamma = VectorXd::Ones(h) + testing::random_matrix(h, 1, rng, 0.2);
  m.mlp.beta = testing::random_matrix(h, 1, rng, 0.3);
  m.mlp.b2 = 0.1;
  return m;
}

FusionBatch random_batch(const std::vector<std::vector<Eigen::Index>>& groups, Eigen::Index tiles,
                         std::mt19937_64& rng) {
  FusionBatch b;
  b.e_sc.resize(tiles, kD);
  b.e_llm.resize(tiles, kD);
  for (Eigen::Index r = 0; r < tiles; ++r) {
    b.e_sc.row(r) = unit_vector(rng).transpose();
    b.e_llm.row(r) = unit_vector(rng).transpose();
  }
  b.groups = groups;
  b.targets = testing::random_matrix(static_cast<Eigen::Index>(groups.size()), 1, rng);
  return b;
}

// Relative error per entry as in testing::relative_error.
void check_head_gradients(HeadModel model, const FusionBatch& batch) {
  HeadGradients g;
  head_loss(model, batch, &g);
  auto loss = [&] { return head_loss(model, batch); };
  double worst = 0.0;
  worst = std::max(worst, testing::max_gradient_error(model.fusion.phi, g.phi, loss));
  worst = std::max(worst, testing::max_gradient_error(model.fusion.ups, g.ups, loss));
  worst = std::max(worst, testing::max_gradient_error(model.mlp.w1, g.w1, loss));
  worst = std::max(worst, testing::max_gradient_error(model.mlp.b1, g.b1, loss));
  worst = std::max(worst, testing::max_gradient_error(model.mlp.gamma, g.gamma, loss));
  worst = std::max(worst, testing::max_gradient_error(model.mlp.beta, g.beta, loss));
  worst = std::max(worst, testing::max_gradient_error(model.mlp.w2, g.w2, loss));
  Eigen::Matrix<double, 1, 1> b2{model.mlp.b2}, gb2{g.b2};
  worst = std::max(worst, testing::max_gradient_error(b2, gb2, [&] {
    model.mlp.b2 = b2(0, 0);
    return head_loss(model, batch);
  }));
  EXPECT_LT(worst, 1e-6);
}

TEST(HeadLoss, GradientCheckTileLevel) {
  std::mt19937_64 rng(11);
  const auto model = random_head(8, 8, rng);
  check_head_gradients(model, random_batch({{0}, {1}, {2}, {3}}, 4, rng));
}

TEST(HeadLoss, GradientCheckCountyGroups) {
  std::mt19937_64 rng(12);
  const auto model = random_head(8, 8, rng);
  check_head_gradients(model, random_batch({{0, 1}, {2, 3, 4}, {5}, {6, 7, 8, 9}}, 10, rng));
}

TEST(HeadLoss, NeedsTwoSamples) {
  std::mt19937_64 rng(13);
  const auto model = random_head(4, 4, rng);
  EXPECT_THROW(head_loss(model, random_batch({{0}}, 1, rng)), std::invalid_argument);
}

TEST(HeadLoss, ReportsBatchStatistics) {
  std::mt19937_64 rng(14);
  const auto model = random_head(6, 4, rng);
  const auto batch = random_batch({{0}, {1}, {2}}, 3, rng);
  BatchStatistics stats;
  head_loss(model, batch, nullptr, &stats);
  MatrixXd X(3, kD);
  for (int r = 0; r < 3; ++r) {
    const auto w = attention_weights(batch.e_sc.row(r).transpose(), batch.e_llm.row(r).transpose(), model.fusion);
    X.row(r) = fuse(batch.e_sc.row(r).transpose(), batch.e_llm.row(r).transpose(), w).vector.transpose();
  }
  MatrixXd z = X * model.mlp.w1.transpose();
  z.rowwise() += model.mlp.b1.transpose();
  const VectorXd mean = z.colwise().mean().transpose();
  EXPECT_LT((stats.mean - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(stats.var.size(), 6);
}

std::vector<LabeledPair> random_dataset(int counties, int tiles, std::mt19937_64& rng) {
  std::vector<LabeledPair> out;
  for (int c = 0; c < counties; ++c) {
    for (int t = 0; t < tiles; ++t) {
      LabeledPair p;
      p.county_fips = synthetic_fips(c);
      p.tile_id = p.county_fips + "_" + std::to_string(t);
      p.e_sc = unit_vector(rng);
      p.e_llm = unit_vector(rng);
      out.push_back(std::move(p));
    }
  }
  return out;
}

SviTable constant_svi(int counties, double value) {
  SviTable svi;
  for (int c = 0; c < counties; ++c) svi[synthetic_fips(c)] = {synthetic_fips(c), value, {}};
  return svi;
}

FusionTrainConfig small_train_config() {
  FusionTrainConfig cfg;
  cfg.epochs = 60;
  cfg.hidden = 16;
  cfg.d_out = 8;
  cfg.batch = 8;
  cfg.seed = 3;
  return cfg;
}

TEST(Train, ConstantTargetPredictsConstant) {
  std::mt19937_64 rng(15);
  const auto data = random_dataset(4, 10, rng);
  auto cfg = small_train_config();
  cfg.epochs = 200;
  const auto model = train(data, constant_svi(4, 0.5), cfg);
  for (const auto& p : data) EXPECT_NEAR(predict(model, p.e_sc, p.e_llm), 0.5, 0.02);
  for (int i = 0; i < 20; ++i) {
    EXPECT_NEAR(predict(model, unit_vector(rng), unit_vector(rng)), 0.5, 0.02);
  }
}

TEST(Train, DeterministicPerSeed) {
  std::mt19937_64 rng(16);
  const auto data = random_dataset(3, 6, rng);
  const auto svi = constant_svi(3, 0.3);
  const auto a = train(data, svi, small_train_config());
  const auto b = train(data, svi, small_train_config());
  EXPECT_EQ(save_model(a).dump(), save_model(b).dump());
  ASSERT_EQ(a.metrics.size(), 60u);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].loss, b.metrics[i].loss);
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  std::mt19937_64 rng(17);
  const auto data = random_dataset(2, 3, rng);
  auto cfg = small_train_config();
  cfg.epochs = 0;
  const auto m = train(data, constant_svi(2, 0.4), cfg);
  EXPECT_TRUE(m.metrics.empty());
  const auto init = init_head(cfg.hidden, cfg.d_out, cfg.seed);
  EXPECT_EQ(m.head.fusion.phi, init.fusion.phi);
  EXPECT_EQ(m.head.mlp.w1, init.mlp.w1);
  EXPECT_EQ(m.head.mlp.mode, BnMode::Inference);
}

TEST(Train, MissingSviListsCounties) {
  std::mt19937_64 rng(18);
  const auto data = random_dataset(4, 2, rng);
  auto svi = constant_svi(4, 0.5);
  svi.erase(synthetic_fips(1));
  svi.erase(synthetic_fips(3));
  try {
    train(data, svi, small_train_config());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(synthetic_fips(1)), std::string::npos) << msg;
    EXPECT_NE(msg.find(synthetic_fips(3)), std::string::npos) << msg;
    EXPECT_EQ(msg.find(synthetic_fips(0)), std::string::npos) << msg;
  }
}

TEST(Train, NonFiniteLossAborts) {
  std::mt19937_64 rng(19);
  const auto data = random_dataset(2, 4, rng);
  auto cfg = small_train_config();
  cfg.lr = 1e200;
  EXPECT_THROW(train(data, constant_svi(2, 0.5), cfg), TrainingError);
}

TEST(Train, CountyLevelFitsCountyTargets) {
  std::mt19937_64 rng(20);
  const auto data = random_dataset(6, 4, rng);
  SviTable svi;
  for (int c = 0; c < 6; ++c) svi[synthetic_fips(c)] = {synthetic_fips(c), 0.1 + 0.15 * c, {}};
  auto cfg = small_train_config();
  cfg.level = Level::County;
  cfg.batch = 3;
  cfg.epochs = 300;
  const auto model = train(data, svi, cfg);
  EXPECT_LT(model.metrics.back().loss, model.metrics.front().loss);
  EXPECT_EQ(model.head.mlp.mode, BnMode::Inference);
}

TEST(Train, RunningVarianceStaysNonNegative) {
  std::mt19937_64 rng(21);
  const auto model = train(random_dataset(3, 5, rng), constant_svi(3, 0.2), small_train_config());
  EXPECT_TRUE((model.head.mlp.running_var.array() >= 0.0).all());
}

TEST(AggregateCounty, MeanAndPermutationInvariance) {
  std::vector<std::pair<std::string, double>> preds{{"01001", 0.2}, {"01003", 0.9}, {"01001", 0.4},
                                                    {"01001", 0.6}};
  auto agg = aggregate_county(preds);
  EXPECT_NEAR(agg.at("01001"), 0.4, 1e-15);
  EXPECT_EQ(agg.at("01003"), 0.9);
  EXPECT_EQ(agg.count("01005"), 0u);
  std::reverse(preds.begin(), preds.end());
  EXPECT_EQ(aggregate_county(preds), agg);
  EXPECT_TRUE(aggregate_county({}).empty());
}

TEST(PredictGroup, SingleTileMatchesPredict) {
  std::mt19937_64 rng(22);
  const auto data = random_dataset(2, 4, rng);
  const auto model = train(data, constant_svi(2, 0.5), small_train_config());
  EXPECT_NEAR(predict_group(model, {&data[0]}), predict(model, data[0].e_sc, data[0].e_llm), 1e-12);
  EXPECT_THROW(predict_group(model, {}), std::invalid_argument);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  std::mt19937_64 rng(23);
  const auto data = random_dataset(3, 4, rng);
  const auto model = train(data, constant_svi(3, 0.6), small_train_config());
  const auto j = save_model(model);
  const auto back = load_model(nlohmann::json::parse(j.dump()));
  for (const auto& p : data) EXPECT_EQ(predict(back, p.e_sc, p.e_llm), predict(model, p.e_sc, p.e_llm));
  // The loss curve is written beside the checkpoint, not inside it.
  EXPECT_TRUE(back.metrics.empty());
  EXPECT_EQ(save_model(back).dump(), j.dump());
  auto bad = j;
  bad["format_version"] = 99;
  EXPECT_THROW(load_model(bad), ValidationError);
}

TEST(Ridge, RecoversLinearMap) {
  std::mt19937_64 rng(24);
  const MatrixXd X = testing::random_matrix(200, 5, rng);
  const VectorXd w = testing::random_matrix(5, 1, rng);
  const VectorXd y = (X * w).array() + 0.3;
  const auto m = fit_ridge(X, y, 1e-9);
  EXPECT_LT((m.weights - w).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(m.intercept, 0.3, 1e-6);
  EXPECT_NEAR(predict_ridge(m, X.row(3).transpose()), y[3], 1e-6);
  const auto shrunk = fit_ridge(X, y, 1e6);
  EXPECT_LT(shrunk.weights.norm(), 0.01);
}

TEST(TrainConfig, JsonRoundTripAndLevelNames) {
  auto cfg = small_train_config();
  cfg.level = Level::County;
  const nlohmann::json j = cfg;
  const auto back = j.get<FusionTrainConfig>();
  EXPECT_EQ(back.level, Level::County);
  EXPECT_EQ(back.hidden, 16);
  EXPECT_EQ(to_string(Level::Tile), "tile");
  EXPECT_THROW(level_from_string("state"), std::invalid_argument);
}

}  // namespace
}  // namespace satvl

#include "satvl/fusion.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "satvl/tensor_io.hpp"

namespace satvl {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

constexpr double kSimplexTolerance = 1e-9;

MatrixXd gaussian_matrix(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * standard_normal(rng);
  }
  return m;
}

void require_finite(const Eigen::Ref<const VectorXd>& v, const char* what) {
  if (!v.allFinite()) throw std::invalid_argument(std::string(what) + " has non-finite entries");
}

// Forward intermediates of one batch.
struct Forward {
  MatrixXd act_sc, act_llm;  // T x d_O, tanh(phi e)
  VectorXd rho_sc, rho_llm;  // T
  MatrixXd x;                // N x 512, group-mean fused embeddings
  MatrixXd zhat;             // N x h
  VectorXd inv_std;          // h
  MatrixXd y;                // N x h, post-BN pre-ReLU
  MatrixXd a;                // N x h
  VectorXd out;              // N
  BatchStatistics stats;
};

Forward forward(const HeadModel& model, const FusionBatch& batch) {
  const auto& fp = model.fusion;
  const auto& mp = model.mlp;
  const Index n = static_cast<Index>(batch.groups.size());
  Forward f;
  f.act_sc = (batch.e_sc * fp.phi.transpose()).array().tanh();
  f.act_llm = (batch.e_llm * fp.phi.transpose()).array().tanh();
  const VectorXd l_sc = f.act_sc * fp.ups.transpose();
  const VectorXd l_llm = f.act_llm * fp.ups.transpose();
  const Index t = batch.e_sc.rows();
  f.rho_sc.resize(t);
  f.rho_llm.resize(t);
  for (Index r = 0; r < t; ++r) {
    const auto w = softmax2(l_sc[r], l_llm[r]);
    f.rho_sc[r] = w.rho_sc;
    f.rho_llm[r] = w.rho_llm;
  }

  f.x = MatrixXd::Zero(n, batch.e_sc.cols());
  for (Index s = 0; s < n; ++s) {
    const auto& g = batch.groups[static_cast<std::size_t>(s)];
    for (Index r : g) {
      f.x.row(s) += f.rho_sc[r] * batch.e_sc.row(r) + f.rho_llm[r] * batch.e_llm.row(r);
    }
    f.x.row(s) /= static_cast<double>(g.size());
  }

  MatrixXd z = f.x * mp.w1.transpose();
  z.rowwise() += mp.b1.transpose();
  f.stats.mean = z.colwise().mean().transpose();
  MatrixXd centered = z.rowwise() - f.stats.mean.transpose();
  f.stats.var = centered.array().square().colwise().mean().transpose();
  f.inv_std = (f.stats.var.array() + MlpParams::kBnEpsilon).rsqrt();
  f.zhat = centered.array().rowwise() * f.inv_std.transpose().array();
  f.y = (f.zhat.array().rowwise() * mp.gamma.transpose().array()).rowwise() + mp.beta.transpose().array();
  f.a = f.y.cwiseMax(0.0);
  f.out = (f.a * mp.w2.transpose()).array() + mp.b2;
  return f;
}

}  // namespace

void FusionParams::validate() const {
  if (phi.cols() != static_cast<Index>(kEmbeddingDim) || ups.cols() != phi.rows() || phi.rows() < 1) {
    throw std::invalid_argument("fusion params have inconsistent shapes");
  }
  if (!phi.allFinite() || !ups.allFinite()) throw std::invalid_argument("fusion params not finite");
}

void MlpParams::validate() const {
  const Index h = w1.rows();
  if (h < 1 || w1.cols() != static_cast<Index>(kEmbeddingDim) || b1.size() != h || gamma.size() != h ||
      beta.size() != h || running_mean.size() != h || running_var.size() != h || w2.cols() != h) {
    throw std::invalid_argument("mlp params have inconsistent shapes");
  }
  if ((running_var.array() < 0.0).any()) throw std::invalid_argument("running variance is negative");
}

double attention_logit(const Eigen::Ref<const VectorXd>& e, const FusionParams& p) {
  return p.ups.dot((p.phi * e).array().tanh().matrix().transpose());
}

FusionWeights softmax2(double l_sc, double l_llm) {
  const double m = std::max(l_sc, l_llm);
  const double a = std::exp(l_sc - m);
  const double b = std::exp(l_llm - m);
  return {a / (a + b), b / (a + b)};
}

FusionWeights attention_weights(const Eigen::Ref<const VectorXd>& e_sc,
                                const Eigen::Ref<const VectorXd>& e_llm, const FusionParams& p) {
  if (e_sc.size() != p.phi.cols() || e_llm.size() != p.phi.cols()) {
    throw std::invalid_argument("embedding size does not match fusion params");
  }
  require_finite(e_sc, "e_sc");
  require_finite(e_llm, "e_llm");
  return softmax2(attention_logit(e_sc, p), attention_logit(e_llm, p));
}

FusionWeights attention_weights(const Embedding& e_sc, const Embedding& e_llm, const FusionParams& p) {
  return attention_weights(e_sc.values(), e_llm.values(), p);
}

FusedEmbedding fuse(const Eigen::Ref<const VectorXd>& e_sc, const Eigen::Ref<const VectorXd>& e_llm,
                    const FusionWeights& w) {
  if (!(w.rho_sc >= 0.0 && w.rho_llm >= 0.0 && w.rho_sc <= 1.0 && w.rho_llm <= 1.0) ||
      std::abs(w.rho_sc + w.rho_llm - 1.0) > kSimplexTolerance) {
    throw std::invalid_argument(fmt::format("fusion weights ({}, {}) are not on the simplex", w.rho_sc,
                                            w.rho_llm));
  }
  if (e_sc.size() != e_llm.size()) throw std::invalid_argument("embedding sizes differ");
  return {w.rho_sc * e_sc + w.rho_llm * e_llm, w};
}

FusedEmbedding fuse(const Embedding& e_sc, const Embedding& e_llm, const FusionWeights& w) {
  return fuse(e_sc.values(), e_llm.values(), w);
}

double mlp_forward(const Eigen::Ref<const VectorXd>& x, const MlpParams& p, const MatrixXd* batch_context) {
  const VectorXd z = p.w1 * x + p.b1;
  VectorXd mean, var;
  if (p.mode == BnMode::Inference) {
    mean = p.running_mean;
    var = p.running_var;
  } else {
    if (!batch_context || batch_context->rows() < 2) {
      throw std::invalid_argument("training-mode batch norm needs a batch of at least 2 rows");
    }
    MatrixXd zb = (*batch_context) * p.w1.transpose();
    zb.rowwise() += p.b1.transpose();
    mean = zb.colwise().mean().transpose();
    var = (zb.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  }
  const VectorXd zhat = (z - mean).array() / (var.array() + MlpParams::kBnEpsilon).sqrt();
  const VectorXd a = (p.gamma.array() * zhat.array() + p.beta.array()).cwiseMax(0.0);
  return p.w2.dot(a.transpose()) + p.b2;
}

VectorXd mlp_forward_batch(const MatrixXd& X, const MlpParams& p) {
  if (p.mode == BnMode::Training && X.rows() < 2) {
    throw std::invalid_argument("training-mode batch norm needs a batch of at least 2 rows");
  }
  MatrixXd z = X * p.w1.transpose();
  z.rowwise() += p.b1.transpose();
  VectorXd mean, var;
  if (p.mode == BnMode::Inference) {
    mean = p.running_mean;
    var = p.running_var;
  } else {
    mean = z.colwise().mean().transpose();
    var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  }
  const Eigen::RowVectorXd sd = (var.array() + MlpParams::kBnEpsilon).sqrt().transpose();
  const Eigen::ArrayXXd zhat = (z.rowwise() - mean.transpose()).array().rowwise() / sd.array();
  const MatrixXd a = ((zhat.rowwise() * p.gamma.transpose().array()).rowwise() + p.beta.transpose().array())
                         .cwiseMax(0.0)
                         .matrix();
  return (a * p.w2.transpose()).array() + p.b2;
}

double head_loss(const HeadModel& model, const FusionBatch& batch, HeadGradients* grad,
                 BatchStatistics* stats) {
  const Index n = static_cast<Index>(batch.groups.size());
  if (n < 2) throw std::invalid_argument("training-mode batch norm needs at least 2 samples");
  const auto& fp = model.fusion;
  const auto& mp = model.mlp;
  const Forward f = forward(model, batch);
  const VectorXd resid = f.out - batch.targets;
  const double loss = resid.squaredNorm() / static_cast<double>(n);
  if (stats) *stats = f.stats;
  if (!grad) return loss;

  const VectorXd d_out = 2.0 * resid / static_cast<double>(n);
  grad->b2 = d_out.sum();
  grad->w2 = d_out.transpose() * f.a;
  MatrixXd d_y = d_out * mp.w2;
  d_y = d_y.cwiseProduct((f.y.array() > 0.0).cast<double>().matrix());
  grad->gamma = (d_y.cwiseProduct(f.zhat)).colwise().sum().transpose();
  grad->beta = d_y.colwise().sum().transpose();
  const MatrixXd d_zhat = d_y.array().rowwise() * mp.gamma.transpose().array();
  const Eigen::RowVectorXd sum_dzhat = d_zhat.colwise().sum();
  const Eigen::RowVectorXd sum_dzhat_zhat = d_zhat.cwiseProduct(f.zhat).colwise().sum();
  MatrixXd d_z = (static_cast<double>(n) * d_zhat).rowwise() - sum_dzhat;
  d_z -= (f.zhat.array().rowwise() * sum_dzhat_zhat.array()).matrix();
  d_z = (d_z.array().rowwise() * (f.inv_std.transpose().array() / static_cast<double>(n))).matrix();
  grad->w1 = d_z.transpose() * f.x;
  grad->b1 = d_z.colwise().sum().transpose();
  const MatrixXd d_x = d_z * mp.w1;

  // Back through group means, the convex combination, and the attention.
  const Index t = batch.e_sc.rows();
  VectorXd d_l_sc = VectorXd::Zero(t);
  VectorXd d_l_llm = VectorXd::Zero(t);
  for (Index s = 0; s < n; ++s) {
    const auto& g = batch.groups[static_cast<std::size_t>(s)];
    const double inv = 1.0 / static_cast<double>(g.size());
    for (Index r : g) {
      const double d_rho_sc = inv * d_x.row(s).dot(batch.e_sc.row(r));
      const double d_rho_llm = inv * d_x.row(s).dot(batch.e_llm.row(r));
      const double avg = f.rho_sc[r] * d_rho_sc + f.rho_llm[r] * d_rho_llm;
      d_l_sc[r] += f.rho_sc[r] * (d_rho_sc - avg);
      d_l_llm[r] += f.rho_llm[r] * (d_rho_llm - avg);
    }
  }
  grad->ups = d_l_sc.transpose() * f.act_sc + d_l_llm.transpose() * f.act_llm;
  const MatrixXd d_pre_sc =
      ((d_l_sc * fp.ups).array() * (1.0 - f.act_sc.array().square())).matrix();
  const MatrixXd d_pre_llm =
      ((d_l_llm * fp.ups).array() * (1.0 - f.act_llm.array().square())).matrix();
  grad->phi = d_pre_sc.transpose() * batch.e_sc + d_pre_llm.transpose() * batch.e_llm;
  return loss;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Level level) { return level == Level::Tile ? "tile" : "county"; }

Level level_from_string(std::string_view name) {
  if (name == "tile") return Level::Tile;
  if (name == "county") return Level::County;
  throw std::invalid_argument("level must be tile or county, got " + std::string(name));
}

void to_json(json& j, const FusionTrainConfig& c) {
  j = json{{"epochs", c.epochs}, {"lr", c.lr},         {"batch", c.batch},
           {"seed", c.seed},     {"hidden", c.hidden}, {"d_out", c.d_out},
           {"level", to_string(c.level)}, {"bn_momentum", c.bn_momentum}};
}

void from_json(const json& j, FusionTrainConfig& c) {
  c = FusionTrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.hidden = j.value("hidden", c.hidden);
  c.d_out = j.value("d_out", c.d_out);
  c.level = level_from_string(j.value("level", std::string("tile")));
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
}

HeadModel init_head(int hidden, int d_out, std::uint64_t seed) {
  if (hidden < 1 || d_out < 1) throw std::invalid_argument("hidden and d_out must be >= 1");
  std::mt19937_64 rng(mix_seed(seed, 0x66757369));
  const auto d = static_cast<Index>(kEmbeddingDim);
  HeadModel m;
  m.fusion.phi = gaussian_matrix(d_out, d, 1.0, rng);
  m.fusion.ups = gaussian_matrix(1, d_out, 1.0 / std::sqrt(static_cast<double>(d_out)), rng);
  m.mlp.w1 = gaussian_matrix(hidden, d, 1.0, rng);
  m.mlp.b1 = VectorXd::Zero(hidden);
  m.mlp.gamma = VectorXd::Ones(hidden);
  m.mlp.beta = VectorXd::Zero(hidden);
  m.mlp.running_mean = VectorXd::Zero(hidden);
  m.mlp.running_var = VectorXd::Ones(hidden);
  m.mlp.w2 = gaussian_matrix(1, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  m.mlp.b2 = 0.0;
  m.mlp.mode = BnMode::Training;
  return m;
}

namespace {

struct Prepared {
  MatrixXd e_sc, e_llm;
  std::vector<std::vector<Index>> groups;
  VectorXd targets;
};

Prepared prepare(const std::vector<LabeledPair>& dataset, const SviTable& svi, Level level) {
  std::set<std::string> missing;
  for (const auto& p : dataset) {
    if (!svi.count(p.county_fips)) missing.insert(p.county_fips);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError("counties without an SVI record: " + list);
  }
  Prepared out;
  const auto d = static_cast<Index>(kEmbeddingDim);
  out.e_sc.resize(static_cast<Index>(dataset.size()), d);
  out.e_llm.resize(static_cast<Index>(dataset.size()), d);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto r = static_cast<Index>(i);
    if (dataset[i].e_sc.size() != d || dataset[i].e_llm.size() != d) {
      throw DimensionError("training embeddings must be 512-dimensional");
    }
    out.e_sc.row(r) = dataset[i].e_sc.transpose();
    out.e_llm.row(r) = dataset[i].e_llm.transpose();
  }
  std::vector<double> targets;
  if (level == Level::Tile) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      out.groups.push_back({static_cast<Index>(i)});
      targets.push_back(svi.at(dataset[i].county_fips).svi_overall);
    }
  } else {
    std::map<std::string, std::vector<Index>> by_county;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      by_county[dataset[i].county_fips].push_back(static_cast<Index>(i));
    }
    for (auto& [fips, rows] : by_county) {
      out.groups.push_back(std::move(rows));
      targets.push_back(svi.at(fips).svi_overall);
    }
  }
  out.targets = Eigen::Map<VectorXd>(targets.data(), static_cast<Index>(targets.size()));
  return out;
}

FusionBatch slice(const Prepared& data, std::span<const std::size_t> samples) {
  FusionBatch b;
  Index tiles = 0;
  for (auto s : samples) tiles += static_cast<Index>(data.groups[s].size());
  b.e_sc.resize(tiles, data.e_sc.cols());
  b.e_llm.resize(tiles, data.e_llm.cols());
  b.targets.resize(static_cast<Index>(samples.size()));
  Index row = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    std::vector<Index> g;
    for (Index src : data.groups[samples[k]]) {
      b.e_sc.row(row) = data.e_sc.row(src);
      b.e_llm.row(row) = data.e_llm.row(src);
      g.push_back(row++);
    }
    b.groups.push_back(std::move(g));
    b.targets[static_cast<Index>(k)] = data.targets[static_cast<Index>(samples[k])];
  }
  return b;
}

}  // namespace

TrainedModel train(const std::vector<LabeledPair>& dataset, const SviTable& svi,
                   const FusionTrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 2 || !(cfg.lr > 0.0)) {
    throw std::invalid_argument("train config needs epochs >= 0, batch >= 2, lr > 0");
  }
  const Prepared data = prepare(dataset, svi, cfg.level);
  if (data.groups.size() < 2) throw std::invalid_argument("training needs at least 2 samples");

  TrainedModel model;
  model.config = cfg;
  model.head = init_head(cfg.hidden, cfg.d_out, cfg.seed);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x73686666));

  std::vector<std::size_t> order(data.groups.size());
  const auto batch = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double loss_sum = 0.0;
    std::size_t start = 0;
    while (start < order.size()) {
      auto end = std::min(order.size(), start + batch);
      // A trailing single sample joins the previous batch (BN needs >= 2).
      if (order.size() - end == 1) end = order.size();
      const auto b = slice(data, std::span(order).subspan(start, end - start));
      HeadGradients g;
      BatchStatistics stats;
      const double loss = head_loss(model.head, b, &g, &stats);
      if (!std::isfinite(loss)) {
        throw TrainingError(fmt::format("non-finite loss at epoch {} (batch starting at {})", epoch, start));
      }
      loss_sum += loss * static_cast<double>(end - start);

      auto& h = model.head;
      h.fusion.phi -= cfg.lr * g.phi;
      h.fusion.ups -= cfg.lr * g.ups;
      h.mlp.w1 -= cfg.lr * g.w1;
      h.mlp.b1 -= cfg.lr * g.b1;
      h.mlp.gamma -= cfg.lr * g.gamma;
      h.mlp.beta -= cfg.lr * g.beta;
      h.mlp.w2 -= cfg.lr * g.w2;
      h.mlp.b2 -= cfg.lr * g.b2;

      const double n = static_cast<double>(end - start);
      const double m = cfg.bn_momentum;
      h.mlp.running_mean = (1.0 - m) * h.mlp.running_mean + m * stats.mean;
      h.mlp.running_var = (1.0 - m) * h.mlp.running_var + m * stats.var * (n / (n - 1.0));
      start = end;
    }
    model.metrics.push_back({epoch, loss_sum / static_cast<double>(order.size()), "train"});
  }
  model.head.mlp.mode = BnMode::Inference;
  return model;
}

double predict(const TrainedModel& model, const Eigen::Ref<const VectorXd>& e_sc,
               const Eigen::Ref<const VectorXd>& e_llm) {
  const auto w = attention_weights(e_sc, e_llm, model.head.fusion);
  const auto fused = fuse(e_sc, e_llm, w);
  MlpParams p = model.head.mlp;
  p.mode = BnMode::Inference;
  return mlp_forward(fused.vector, p);
}

double predict_group(const TrainedModel& model, const std::vector<const LabeledPair*>& tiles) {
  if (tiles.empty()) throw std::invalid_argument("predict_group needs at least one tile");
  VectorXd mean = VectorXd::Zero(static_cast<Index>(kEmbeddingDim));
  for (const auto* t : tiles) {
    const auto w = attention_weights(t->e_sc, t->e_llm, model.head.fusion);
    mean += fuse(t->e_sc, t->e_llm, w).vector;
  }
  mean /= static_cast<double>(tiles.size());
  MlpParams p = model.head.mlp;
  p.mode = BnMode::Inference;
  return mlp_forward(mean, p);
}

std::map<std::string, double> aggregate_county(
    const std::vector<std::pair<std::string, double>>& tile_predictions) {
  // Sorted before summing so the result does not depend on input order.
  std::map<std::string, std::vector<double>> by_county;
  for (const auto& [fips, y] : tile_predictions) by_county[fips].push_back(y);
  std::map<std::string, double> out;
  for (auto& [fips, ys] : by_county) {
    std::sort(ys.begin(), ys.end());
    out[fips] = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  }
  return out;
}

RidgeModel fit_ridge(const MatrixXd& X, const VectorXd& y, double lambda) {
  if (X.rows() != y.size() || X.rows() < 1) throw std::invalid_argument("ridge: bad shapes");
  const Eigen::RowVectorXd mean_x = X.colwise().mean();
  const double mean_y = y.mean();
  const MatrixXd xc = X.rowwise() - mean_x;
  const VectorXd yc = y.array() - mean_y;
  // Dual form: the sample count is far below the 512 features.
  MatrixXd gram = xc * xc.transpose();
  gram.diagonal().array() += lambda;
  const VectorXd alpha = gram.ldlt().solve(yc);
  RidgeModel m;
  m.weights = xc.transpose() * alpha;
  m.intercept = mean_y - mean_x.dot(m.weights.transpose());
  m.lambda = lambda;
  return m;
}

double predict_ridge(const RidgeModel& m, const Eigen::Ref<const VectorXd>& x) {
  return m.weights.dot(x) + m.intercept;
}

json save_model(const TrainedModel& model) {
  const auto& h = model.head;
  json tensors{{"phi", tensor_to_json(h.fusion.phi)},
               {"ups", tensor_to_json(h.fusion.ups)},
               {"w1", tensor_to_json(h.mlp.w1)},
               {"b1", tensor_to_json(h.mlp.b1)},
               {"gamma", tensor_to_json(h.mlp.gamma)},
               {"beta", tensor_to_json(h.mlp.beta)},
               {"running_mean", tensor_to_json(h.mlp.running_mean)},
               {"running_var", tensor_to_json(h.mlp.running_var)},
               {"w2", tensor_to_json(h.mlp.w2)},
               {"b2", tensor_to_json(Eigen::Matrix<double, 1, 1>::Constant(h.mlp.b2))}};
  return json{{"format_version", kCheckpointFormatVersion},
              {"kind", "fusion_regressor"},
              {"config", model.config},
              {"mode", h.mlp.mode == BnMode::Inference ? "inference" : "training"},
              {"tensors", std::move(tensors)}};
}

TrainedModel load_model(const json& j) {
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion ||
      j.at("kind").get<std::string>() != "fusion_regressor") {
    throw ValidationError("not a fusion_regressor checkpoint of a supported version");
  }
  TrainedModel m;
  m.config = j.at("config").get<FusionTrainConfig>();
  const auto& t = j.at("tensors");
  auto& h = m.head;
  h.fusion.phi = tensor_from_json(t.at("phi"), "phi");
  h.fusion.ups = tensor_from_json(t.at("ups"), "ups");
  h.mlp.w1 = tensor_from_json(t.at("w1"), "w1");
  h.mlp.b1 = tensor_from_json(t.at("b1"), "b1");
  h.mlp.gamma = tensor_from_json(t.at("gamma"), "gamma");
  h.mlp.beta = tensor_from_json(t.at("beta"), "beta");
  h.mlp.running_mean = tensor_from_json(t.at("running_mean"), "running_mean");
  h.mlp.running_var = tensor_from_json(t.at("running_var"), "running_var");
  h.mlp.w2 = tensor_from_json(t.at("w2"), "w2");
  h.mlp.b2 = tensor_from_json(t.at("b2"), "b2")(0, 0);
  h.mlp.mode = j.value("mode", "inference") == "inference" ? BnMode::Inference : BnMode::Training;
  h.fusion.validate();
  h.mlp.validate();
  return m;
}

}  // namespace satvl

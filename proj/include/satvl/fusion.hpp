#pragma once

// Attention-weighted fusion of the satellite-caption embedding and the
// LLM-caption embedding, feeding a two-layer batch-norm MLP that regresses
// county SVI. Gradients are hand-written and checked against central
// differences in the tests.

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "satvl/corpus.hpp"
#include "satvl/encode.hpp"

namespace satvl {

/// Phi projects a 512-vector to d_O; ups scores the tanh of that projection.
struct FusionParams {
  Eigen::MatrixXd phi;     // d_O x 512
  Eigen::RowVectorXd ups;  // 1 x d_O

  Eigen::Index d_out() const { return phi.rows(); }
  void validate() const;
};

struct FusionWeights {
  double rho_sc = 0.5;
  double rho_llm = 0.5;
};

struct FusedEmbedding {
  Eigen::VectorXd vector;  // 512
  FusionWeights weights;
};

enum class BnMode { Training, Inference };

struct MlpParams {
  static constexpr double kBnEpsilon = 1e-5;

  Eigen::MatrixXd w1;  // h x 512
  Eigen::VectorXd b1;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  Eigen::RowVectorXd w2;  // 1 x h
  double b2 = 0.0;
  BnMode mode = BnMode::Training;

  Eigen::Index hidden() const { return w1.rows(); }
  void validate() const;
};

struct HeadModel {
  FusionParams fusion;
  MlpParams mlp;
};

/// Scalar attention logit of one modality: ups . tanh(phi * e).
double attention_logit(const Eigen::Ref<const Eigen::VectorXd>& e, const FusionParams& p);
/// Two-way softmax with max subtraction.
FusionWeights softmax2(double logit_sc, double logit_llm);

FusionWeights attention_weights(const Eigen::Ref<const Eigen::VectorXd>& e_sc,
                                const Eigen::Ref<const Eigen::VectorXd>& e_llm, const FusionParams& p);
FusionWeights attention_weights(const Embedding& e_sc, const Embedding& e_llm, const FusionParams& p);

/// Convex combination. Throws std::invalid_argument when the weights are
/// off the simplex by more than 1e-9.
FusedEmbedding fuse(const Eigen::Ref<const Eigen::VectorXd>& e_sc,
                    const Eigen::Ref<const Eigen::VectorXd>& e_llm, const FusionWeights& w);
FusedEmbedding fuse(const Embedding& e_sc, const Embedding& e_llm, const FusionWeights& w);

/// Head output for one input. Inference mode uses running statistics;
/// training mode takes batch statistics from batch_context (rows are
/// inputs, at least two).
double mlp_forward(const Eigen::Ref<const Eigen::VectorXd>& x, const MlpParams& p,
                   const Eigen::MatrixXd* batch_context = nullptr);
/// Row-wise head output; training mode uses the statistics of X itself.
Eigen::VectorXd mlp_forward_batch(const Eigen::MatrixXd& X, const MlpParams& p);

// ---------------------------------------------------------------------------
// Loss and gradients of attention -> fuse -> (group mean) -> MLP-BN -> MSE.

/// Tiles are rows of e_sc / e_llm. Each sample averages the fused
/// embeddings of its group of tiles (size 1 at tile level).
struct FusionBatch {
  Eigen::MatrixXd e_sc;   // T x 512
  Eigen::MatrixXd e_llm;  // T x 512
  std::vector<std::vector<Eigen::Index>> groups;
  Eigen::VectorXd targets;  // one per group
};

struct HeadGradients {
  Eigen::MatrixXd phi;
  Eigen::RowVectorXd ups;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::RowVectorXd w2;
  double b2 = 0.0;
};

struct BatchStatistics {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // biased
};

/// Training-mode MSE over the batch. Fills grad and stats when non-null.
/// Throws std::invalid_argument for fewer than two samples.
double head_loss(const HeadModel& model, const FusionBatch& batch, HeadGradients* grad = nullptr,
                 BatchStatistics* stats = nullptr);

// ---------------------------------------------------------------------------
// Training and prediction.

enum class Level { Tile, County };
std::string_view to_string(Level level);
Level level_from_string(std::string_view name);

struct FusionTrainConfig {
  int epochs = 300;
  double lr = 0.05;
  int batch = 16;
  std::uint64_t seed = 7;
  int hidden = 64;
  int d_out = 64;
  Level level = Level::Tile;
  double bn_momentum = 0.1;
};

void to_json(nlohmann::json& j, const FusionTrainConfig& c);
void from_json(const nlohmann::json& j, FusionTrainConfig& c);

struct LabeledPair {
  std::string tile_id;
  std::string county_fips;
  Eigen::VectorXd e_sc;
  Eigen::VectorXd e_llm;
};

struct EpochMetric {
  int epoch = 0;
  double loss = 0.0;
  std::string split;
};

struct TrainedModel {
  HeadModel head;
  FusionTrainConfig config;
  std::vector<EpochMetric> metrics;
};

HeadModel init_head(int hidden, int d_out, std::uint64_t seed);

/// SGD on MSE against county SVI. Throws ValidationError listing counties
/// without an SviRecord and TrainingError on a non-finite loss. The result
/// is frozen to inference mode.
TrainedModel train(const std::vector<LabeledPair>& dataset, const SviTable& svi,
                   const FusionTrainConfig& cfg);

/// Inference-mode prediction for one tile.
double predict(const TrainedModel& model, const Eigen::Ref<const Eigen::VectorXd>& e_sc,
               const Eigen::Ref<const Eigen::VectorXd>& e_llm);
/// Head applied to the mean fused embedding of a group of tiles.
double predict_group(const TrainedModel& model, const std::vector<const LabeledPair*>& tiles);

/// Arithmetic mean per county; counties without tiles are absent.
std::map<std::string, double> aggregate_county(
    const std::vector<std::pair<std::string, double>>& tile_predictions);

// Ridge-regression baseline on the equal-weight fused embedding.
struct RidgeModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double lambda = 1.0;
};
RidgeModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);
double predict_ridge(const RidgeModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);

nlohmann::json save_model(const TrainedModel& model);
TrainedModel load_model(const nlohmann::json& j);

}  // namespace satvl

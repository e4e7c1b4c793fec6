#pragma once

// Stage orchestration for the command-line tool, plus the evaluation helpers
// shared by the predict stage and the seeded experiments.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "satvl/captioner.hpp"
#include "satvl/corpus.hpp"
#include "satvl/explain.hpp"
#include "satvl/fusion.hpp"
#include "satvl/provider.hpp"

namespace satvl {

// ---------------------------------------------------------------------------
// Configuration.

enum class Mode { Synthetic, Real };

struct ExplainConfig {
  int k = 10;
  int m = 5;
  int n_samples = 1100;
  int background = 100;
  std::string input = "caption";  // "caption" or "fused"
  int max_instances = 40;
  int max_parallel = 4;
};

struct PipelineConfig {
  Mode mode = Mode::Synthetic;
  std::filesystem::path corpus_dir;  // real mode input; synthetic mode writes <out>/corpus
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> fixture_dir;
  std::optional<std::filesystem::path> cache_dir;
  /// Propagated to the synthetic world, captioner, trainer and explainer.
  std::uint64_t seed = 7;

  SyntheticWorldConfig synthetic;
  std::vector<int> caption_tiers{2};
  ProviderConfig caption_provider;

  std::string encoder = "reference";  // "reference" or "remote"
  bool normalize_embeddings = true;
  ProviderConfig encoder_provider;

  bool captioner_enabled = true;
  CaptionerConfig captioner;
  int max_caption_len = 96;

  FusionTrainConfig train;
  double holdout_fraction = 0.25;
  double ridge_lambda = 1.0;

  ExplainConfig explain;

  void validate() const;
  /// Copies seed into every per-stage seed.
  void apply_seed();
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Hash of the configuration with output-location fields removed, so the
/// same run written to two directories records the same value.
std::string config_hash(const PipelineConfig& c);

// ---------------------------------------------------------------------------
// Stages.

enum class Stage { Synth, Caption, Parse, Encode, TrainCaptioner, Train, Predict, Explain, Report };

inline constexpr std::array<Stage, 9> kAllStages = {Stage::Synth,          Stage::Caption, Stage::Parse,
                                                    Stage::TrainCaptioner, Stage::Encode,  Stage::Train,
                                                    Stage::Predict,        Stage::Explain, Stage::Report};

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view name);

/// A stage could not run; the message names the missing input and the
/// subcommand that produces it where applicable.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what) : Error(what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

/// Structured JSON-lines logger; writes to stderr unless redirected.
using LogSink = std::function<void(const nlohmann::json&)>;
LogSink stderr_log_sink();

void run_stage(Stage stage, const PipelineConfig& cfg, const LogSink& log = stderr_log_sink());
void run_all(const PipelineConfig& cfg, const LogSink& log = stderr_log_sink());

/// Answers caption requests for synthetic tiles (image_uri
/// "synthetic://<tile_id>") by rendering their latent attributes with the
/// grammar. Tier 3 renders only its target fields; other tiers render all.
class SyntheticCaptionTransport : public JsonTransport {
 public:
  SyntheticCaptionTransport(const std::vector<SatTile>& tiles, std::uint64_t render_seed);
  nlohmann::json post(const nlohmann::json& body) override;

 private:
  std::map<std::string, const SatTile*> by_uri_;
  std::map<std::string, int> tier_by_template_;
  std::uint64_t render_seed_;
};

// ---------------------------------------------------------------------------
// Evaluation helpers.

struct CountySplit {
  std::vector<std::string> train;
  std::vector<std::string> holdout;
};

/// Seeded partition of the distinct FIPS codes; at least one county on each
/// side when there are two or more.
CountySplit split_counties(std::vector<std::string> fips, double holdout_fraction, std::uint64_t seed);

using TextEncoder = std::function<Eigen::VectorXd(const std::string&)>;

/// Pairs the satellite-caption and LLM-caption embeddings of each tile.
/// Tiles without both captions are skipped.
std::vector<LabeledPair> build_pairs(const std::vector<SatTile>& tiles,
                                     const std::map<std::string, std::string>& sc_captions,
                                     const std::map<std::string, std::string>& llm_captions,
                                     const TextEncoder& encode);

struct HoldoutMetrics {
  double tile_mse = 0.0;
  double county_mse = 0.0;
  std::size_t n_tiles = 0;
  std::size_t n_counties = 0;
};

/// Tile MSE against the county SVI, and county MSE of the mean tile
/// prediction, over tiles of the given counties.
HoldoutMetrics evaluate_counties(const TrainedModel& model, const std::vector<LabeledPair>& pairs,
                                 const SviTable& svi, const std::set<std::string>& counties);

/// Pooled within-county variance of the mean prediction over groups of
/// m_large tiles, divided by the same for single tiles. Each county's tiles
/// are cut into consecutive groups; both estimates are unbiased.
double noise_variance_ratio(const TrainedModel& model, const std::vector<LabeledPair>& pairs, int m_large);

/// The trained head as a function of one input: the caption embedding with
/// the instance's LLM embedding held fixed, or the fused embedding.
BatchModel explain_function(const TrainedModel& model, const LabeledPair& instance, const std::string& input);

}  // namespace satvl

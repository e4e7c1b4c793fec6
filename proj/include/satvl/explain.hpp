#pragma once

// Shapley attribution over embedding dimensions: a brute-force enumerator
// for small d and KernelSHAP for the 512-dim model, plus the per-dimension
// interpretation report.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "satvl/attributes.hpp"

namespace satvl {

/// Evaluates the model on each row. Must be pure.
using BatchModel = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

BatchModel pointwise(std::function<double(const Eigen::VectorXd&)> f);

inline constexpr int kMaxExactFeatures = 15;

/// Coalition enumeration with absent features set to background. Throws
/// std::invalid_argument for d > kMaxExactFeatures or mismatched sizes.
Eigen::VectorXd exact_shapley(const BatchModel& f, const Eigen::VectorXd& background,
                              const Eigen::VectorXd& x);

struct Attribution {
  std::string instance_id;
  Eigen::VectorXd phi;
  double base_value = 0.0;  // mean of f over the background rows
  double fx = 0.0;
};

/// KernelSHAP with the efficiency constraint solved exactly. Coalition sizes
/// whose full enumeration fits the budget are enumerated; the rest are
/// sampled in complementary pairs. When n_samples >= 2^d - 2 every
/// coalition is enumerated and the result equals exact Shapley values over
/// the background distribution. Requires n_samples >= 2d + 4 and at least
/// one background row; a rank-deficient system raises ValidationError.
Attribution sampled_shap(const BatchModel& f, const Eigen::MatrixXd& background, const Eigen::VectorXd& x,
                         int n_samples, std::uint64_t seed, std::string instance_id = {});

struct DimImportance {
  int dim = 0;
  double mean_abs_phi = 0.0;
};

struct Exemplar {
  std::string instance_id;
  std::string caption;
  double phi = 0.0;
};

struct PhraseCount {
  std::string phrase;
  int count = 0;
};

struct ShapReport {
  int k = 0;
  int m = 0;
  std::vector<DimImportance> top_dims;
  std::map<int, std::vector<Exemplar>> exemplars;
  std::map<int, std::vector<PhraseCount>> phrase_freq;
  std::vector<std::string> warnings;
};

/// Ranks dims by mean |phi| (ties by dim index). Exemplars for a dim are
/// the m instances with largest |phi_dim|, ties by instance_id. Phrase
/// counts are phrase-inventory matches over the exemplar captions, sorted
/// by count then phrase. m shrinks to the instance count with a warning.
ShapReport build_report(const std::vector<Attribution>& attributions,
                        const std::map<std::string, std::string>& captions, int k = 10, int m = 5,
                        const PhraseTable& table = phrase_inventory());

nlohmann::json report_to_json(const ShapReport& r);
std::string report_to_markdown(const ShapReport& r);
/// Horizontal bar chart of top_dims.
std::string report_to_svg(const ShapReport& r);

nlohmann::json attribution_to_json(const Attribution& a);
Attribution attribution_from_json(const nlohmann::json& j);

}  // namespace satvl

#pragma once

// Toy satellite captioner: an image-text contrastive aligner plus a
// single-layer recurrent decoder over the attribute-grammar vocabulary.
// The token embedding table is shared by the text encoder and the decoder.

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "satvl/attributes.hpp"
#include "satvl/caption_record.hpp"
#include "satvl/corpus.hpp"

namespace satvl {

/// Lowercase words plus "." and "," as separate tokens.
std::vector<std::string> caption_tokens(std::string_view text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  /// Specials, then every token of the phrase table, templates and the empty
  /// caption, sorted.
  static Vocab from_phrase_table(const PhraseTable& table = phrase_inventory());
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Joins tokens into sentence-cased text; specials are skipped.
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct ImageFeatureConfig {
  double jitter = 0.05;  // std of seeded per-tile Gaussian jitter (synthetic mode)
  int patch_grid = 6;    // image mode: grid x grid patch means
};

/// Width of the synthetic one-hot layout: enum fields take values+1 slots
/// (unknown included), set fields one slot per member.
std::size_t synthetic_feature_dim();

/// Synthetic mode (latent attributes present) or image mode (image_uri
/// decodes to a raster). Throws ValidationError when neither is available.
Eigen::VectorXd image_features(const SatTile& tile, const ImageFeatureConfig& cfg = {});

struct ItcResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_image;
  Eigen::MatrixXd grad_text;
};

/// Symmetric InfoNCE over softmax(I T^T / tau) with matched pairs on the
/// diagonal: the mean of the image->text and text->image cross-entropies.
/// Rows are expected to be L2-normalized. Throws std::invalid_argument for
/// N < 2, tau <= 0, or mismatched shapes.
ItcResult itc_loss(const Eigen::MatrixXd& image_embs, const Eigen::MatrixXd& text_embs, double tau);

struct CaptionerConfig {
  int epochs = 50;
  double lr = 0.5;
  int batch = 16;
  std::uint64_t seed = 7;
  double temperature = 0.07;
  int d_emb = 48;
  double decoder_weight = 1.0;
  double clip_norm = 5.0;
  ImageFeatureConfig features;
};

void to_json(nlohmann::json& j, const CaptionerConfig& c);
void from_json(const nlohmann::json& j, CaptionerConfig& c);

struct CaptionerModel {
  Vocab vocab;
  ImageFeatureConfig features;
  double temperature = 0.07;

  Eigen::MatrixXd image_proj;      // d_emb x d_img
  Eigen::MatrixXd text_embedding;  // |V| x d_emb, shared with the decoder
  Eigen::MatrixXd text_proj;       // d_emb x d_emb
  Eigen::MatrixXd w_hh;            // d_emb x d_emb
  Eigen::MatrixXd w_xh;            // d_emb x d_emb
  Eigen::MatrixXd w_ch;            // d_emb x d_emb, image conditioning
  Eigen::VectorXd b_h;
  Eigen::MatrixXd w_out;           // |V| x d_emb
  Eigen::VectorXd b_out;

  Eigen::Index d_img() const { return image_proj.cols(); }
  Eigen::Index d_emb() const { return image_proj.rows(); }
};

/// Same shapes as CaptionerModel's trainable tensors.
struct CaptionerGradients {
  Eigen::MatrixXd image_proj, text_embedding, text_proj, w_hh, w_xh, w_ch, w_out;
  Eigen::VectorXd b_h, b_out;
};

struct CaptionerLoss {
  double itc = 0.0;
  double decoder = 0.0;
  double total = 0.0;
};

CaptionerModel init_captioner(const Vocab& vocab, Eigen::Index d_img, const CaptionerConfig& cfg);

/// L2-normalized image / text embeddings, one row per input.
Eigen::MatrixXd embed_images(const CaptionerModel& m, const Eigen::MatrixXd& features);
Eigen::MatrixXd embed_texts(const CaptionerModel& m, const std::vector<std::vector<int>>& token_seqs);

/// itc + decoder_weight * teacher-forced token cross-entropy (mean per
/// token). features has one row per caption.
CaptionerLoss captioner_loss(const CaptionerModel& m, const Eigen::MatrixXd& features,
                             const std::vector<std::vector<int>>& token_seqs, double decoder_weight,
                             CaptionerGradients* grad = nullptr);

struct CaptionerTraining {
  CaptionerModel model;
  std::vector<CaptionerLoss> epoch_losses;
};

/// Mini-batch SGD with global-norm clipping. Deterministic per seed.
/// Throws std::invalid_argument with fewer than two pairs and
/// TrainingError on a non-finite loss.
CaptionerTraining train_captioner(const std::vector<std::pair<SatTile, CaptionRecord>>& pairs,
                                  const CaptionerConfig& cfg);

/// Greedy decode from BOS until EOS or max_len caption tokens. The first
/// step never emits EOS.
CaptionRecord generate_caption(const CaptionerModel& m, const SatTile& tile, int max_len);

/// In-batch top-1 image->text retrieval over consecutive chunks of
/// `batch` pairs. A hit is a retrieved caption identical to the true one.
double itc_retrieval_accuracy(const CaptionerModel& m, const Eigen::MatrixXd& features,
                              const std::vector<std::vector<int>>& token_seqs, int batch);

nlohmann::json save_captioner(const CaptionerModel& m);
CaptionerModel load_captioner(const nlohmann::json& j);

}  // namespace satvl

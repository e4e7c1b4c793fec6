#include "satvl/captioner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "satvl/common.hpp"
#include "satvl/raster.hpp"
#include "satvl/tensor_io.hpp"

namespace satvl {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

const std::array<std::string, 4> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};

MatrixXd gaussian(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * standard_normal(rng);
  }
  return m;
}

// Backward of y = v / |v| given dL/dy.
VectorXd normalize_backward(const VectorXd& y, double norm, const VectorXd& dy) {
  return (dy - y * y.dot(dy)) / norm;
}

VectorXd log_softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

// Caption tokens between BOS and EOS must be non-special content.
void check_sequence(const std::vector<int>& seq, int vocab_size) {
  if (seq.empty()) throw std::invalid_argument("caption has no tokens");
  for (int t : seq) {
    if (t < 0 || t >= vocab_size) throw std::invalid_argument("token id out of range");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> caption_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (c == '.' || c == ',') tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

Vocab Vocab::from_phrase_table(const PhraseTable& table) {
  std::set<std::string> words;
  auto add = [&](std::string_view text) {
    for (auto& t : caption_tokens(text)) words.insert(std::move(t));
  };
  add(table.empty_caption());
  for (Field f : kAllFields) {
    for (const auto& e : table.entries(f)) add(e.phrase);
    for (const auto& t : table.templates(f)) add(t);
  }
  words.insert(",");
  words.insert(".");
  words.insert("and");
  return from_tokens(std::vector<std::string>(words.begin(), words.end()));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  for (const auto& s : kSpecials) v.tokens_.push_back(s);
  for (auto& t : tokens) {
    if (std::find(kSpecials.begin(), kSpecials.end(), t) != kSpecials.end()) continue;
    v.tokens_.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary token " + v.tokens_[i]);
    }
  }
  return v;
}

int Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : caption_tokens(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  bool capitalize = true;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    const auto& t = token(id);
    if (t == "." || t == ",") {
      out += t;
      capitalize = t == ".";
      continue;
    }
    if (!out.empty()) out += ' ';
    std::string w = t;
    if (capitalize && !w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    capitalize = false;
    out += w;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t synthetic_feature_dim() {
  std::size_t d = 0;
  for (Field f : kAllFields) {
    const auto& info = field_info(f);
    d += info.values.size() + (info.is_set ? 0 : 1);
  }
  return d;
}

VectorXd image_features(const SatTile& tile, const ImageFeatureConfig& cfg) {
  if (tile.latent_attributes) {
    VectorXd x = VectorXd::Zero(static_cast<Index>(synthetic_feature_dim()));
    Index offset = 0;
    for (Field f : kAllFields) {
      const auto& info = field_info(f);
      const auto code = field_code(*tile.latent_attributes, f);
      const auto slots = static_cast<Index>(info.values.size() + (info.is_set ? 0 : 1));
      if (info.is_set) {
        for (Index v = 0; v < slots; ++v) x[offset + v] = (code >> v) & 1u;
      } else {
        x[offset + static_cast<Index>(code)] = 1.0;
      }
      offset += slots;
    }
    if (cfg.jitter > 0.0) {
      std::mt19937_64 rng(fnv1a64(tile.tile_id));
      for (Index i = 0; i < x.size(); ++i) x[i] += cfg.jitter * standard_normal(rng);
    }
    return x;
  }
  if (tile.image_uri && !tile.image_uri->empty()) {
    return patch_means(load_raster(*tile.image_uri), cfg.patch_grid);
  }
  throw ValidationError("tile " + tile.tile_id + " has neither latent attributes nor a raster");
}

// ---------------------------------------------------------------------------

ItcResult itc_loss(const MatrixXd& image_embs, const MatrixXd& text_embs, double tau) {
  const Index n = image_embs.rows();
  if (n < 2) throw std::invalid_argument("ITC needs at least 2 pairs");
  if (!(tau > 0.0)) throw std::invalid_argument("ITC temperature must be positive");
  if (text_embs.rows() != n || text_embs.cols() != image_embs.cols()) {
    throw std::invalid_argument("ITC inputs have mismatched shapes");
  }
  const MatrixXd s = image_embs * text_embs.transpose() / tau;
  MatrixXd p_row(n, n), p_col(n, n);
  double loss_i2t = 0.0, loss_t2i = 0.0;
  for (Index i = 0; i < n; ++i) {
    const VectorXd lr = log_softmax(s.row(i).transpose());
    loss_i2t -= lr[i];
    p_row.row(i) = lr.array().exp().transpose();
    const VectorXd lc = log_softmax(s.col(i));
    loss_t2i -= lc[i];
    p_col.col(i) = lc.array().exp();
  }
  const double nd = static_cast<double>(n);
  ItcResult r;
  r.loss = 0.5 * (loss_i2t + loss_t2i) / nd;
  const MatrixXd eye = MatrixXd::Identity(n, n);
  const MatrixXd d_s = ((p_row - eye) + (p_col - eye)) / (2.0 * nd);
  r.grad_image = d_s * text_embs / tau;
  r.grad_text = d_s.transpose() * image_embs / tau;
  return r;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const CaptionerConfig& c) {
  j = json{{"epochs", c.epochs},
           {"lr", c.lr},
           {"batch", c.batch},
           {"seed", c.seed},
           {"temperature", c.temperature},
           {"d_emb", c.d_emb},
           {"decoder_weight", c.decoder_weight},
           {"clip_norm", c.clip_norm},
           {"jitter", c.features.jitter},
           {"patch_grid", c.features.patch_grid}};
}

void from_json(const json& j, CaptionerConfig& c) {
  c = CaptionerConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.temperature = j.value("temperature", c.temperature);
  c.d_emb = j.value("d_emb", c.d_emb);
  c.decoder_weight = j.value("decoder_weight", c.decoder_weight);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.features.jitter = j.value("jitter", c.features.jitter);
  c.features.patch_grid = j.value("patch_grid", c.features.patch_grid);
}

CaptionerModel init_captioner(const Vocab& vocab, Index d_img, const CaptionerConfig& cfg) {
  if (cfg.d_emb < 1 || d_img < 1) throw std::invalid_argument("captioner dimensions must be >= 1");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x63617074));
  const Index d = cfg.d_emb;
  const Index v = vocab.size();
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  CaptionerModel m;
  m.vocab = vocab;
  m.features = cfg.features;
  m.temperature = cfg.temperature;
  m.image_proj = gaussian(d, d_img, 1.0 / std::sqrt(static_cast<double>(d_img)), rng);
  m.text_embedding = gaussian(v, d, 1.0, rng);
  m.text_proj = gaussian(d, d, s, rng);
  m.w_hh = gaussian(d, d, 0.5 * s, rng);
  m.w_xh = gaussian(d, d, s, rng);
  m.w_ch = gaussian(d, d, s, rng);
  m.b_h = VectorXd::Zero(d);
  m.w_out = gaussian(v, d, s, rng);
  m.b_out = VectorXd::Zero(v);
  return m;
}

MatrixXd embed_images(const CaptionerModel& m, const MatrixXd& features) {
  MatrixXd u = features * m.image_proj.transpose();
  u.rowwise().normalize();
  return u;
}

MatrixXd embed_texts(const CaptionerModel& m, const std::vector<std::vector<int>>& seqs) {
  MatrixXd t(static_cast<Index>(seqs.size()), m.d_emb());
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    check_sequence(seqs[n], m.vocab.size());
    VectorXd mean = VectorXd::Zero(m.d_emb());
    for (int tok : seqs[n]) mean += m.text_embedding.row(tok).transpose();
    mean /= static_cast<double>(seqs[n].size());
    t.row(static_cast<Index>(n)) = (m.text_proj * mean).normalized().transpose();
  }
  return t;
}

CaptionerLoss captioner_loss(const CaptionerModel& m, const MatrixXd& features,
                             const std::vector<std::vector<int>>& seqs, double decoder_weight,
                             CaptionerGradients* grad) {
  const Index n = features.rows();
  if (n != static_cast<Index>(seqs.size())) throw std::invalid_argument("features and captions differ in count");
  const Index d = m.d_emb();
  const Index v = m.vocab.size();

  // Text and image towers.
  MatrixXd u = features * m.image_proj.transpose();  // n x d
  VectorXd u_norm(n);
  MatrixXd img(n, d), txt(n, d), means(n, d);
  VectorXd t_norm(n);
  for (Index i = 0; i < n; ++i) {
    const auto& seq = seqs[static_cast<std::size_t>(i)];
    check_sequence(seq, static_cast<int>(v));
    u_norm[i] = u.row(i).norm();
    img.row(i) = u.row(i) / u_norm[i];
    VectorXd mean = VectorXd::Zero(d);
    for (int tok : seq) mean += m.text_embedding.row(tok).transpose();
    mean /= static_cast<double>(seq.size());
    means.row(i) = mean.transpose();
    const VectorXd raw = m.text_proj * mean;
    t_norm[i] = raw.norm();
    txt.row(i) = raw.transpose() / t_norm[i];
  }
  const ItcResult itc = itc_loss(img, txt, m.temperature);

  if (grad) {
    grad->image_proj = MatrixXd::Zero(m.image_proj.rows(), m.image_proj.cols());
    grad->text_embedding = MatrixXd::Zero(v, d);
    grad->text_proj = MatrixXd::Zero(d, d);
    grad->w_hh = MatrixXd::Zero(d, d);
    grad->w_xh = MatrixXd::Zero(d, d);
    grad->w_ch = MatrixXd::Zero(d, d);
    grad->b_h = VectorXd::Zero(d);
    grad->w_out = MatrixXd::Zero(v, d);
    grad->b_out = VectorXd::Zero(v);
  }

  std::size_t total_steps = 0;
  for (const auto& s : seqs) total_steps += s.size() + 1;
  const double step_scale = decoder_weight / static_cast<double>(total_steps);

  double ce_sum = 0.0;
  MatrixXd d_u = MatrixXd::Zero(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto& seq = seqs[static_cast<std::size_t>(i)];
    const std::size_t steps = seq.size() + 1;
    const VectorXd cond = m.w_ch * u.row(i).transpose() + m.b_h;
    std::vector<VectorXd> hs(steps + 1, VectorXd::Zero(d));
    std::vector<VectorXd> probs(steps);
    std::vector<int> inputs(steps), targets(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      inputs[s] = s == 0 ? Vocab::kBos : seq[s - 1];
      targets[s] = s < seq.size() ? seq[s] : Vocab::kEos;
      const VectorXd pre = m.w_hh * hs[s] + m.w_xh * m.text_embedding.row(inputs[s]).transpose() + cond;
      hs[s + 1] = pre.array().tanh();
      const VectorXd ls = log_softmax(m.w_out * hs[s + 1] + m.b_out);
      ce_sum -= ls[targets[s]];
      if (grad) probs[s] = ls.array().exp();
    }
    if (!grad) continue;

    VectorXd d_h_next = VectorXd::Zero(d);
    VectorXd d_cond = VectorXd::Zero(d);
    for (std::size_t s = steps; s-- > 0;) {
      VectorXd d_logits = probs[s];
      d_logits[targets[s]] -= 1.0;
      d_logits *= step_scale;
      grad->w_out.noalias() += d_logits * hs[s + 1].transpose();
      grad->b_out += d_logits;
      const VectorXd d_h = m.w_out.transpose() * d_logits + d_h_next;
      const VectorXd d_pre = d_h.array() * (1.0 - hs[s + 1].array().square());
      grad->w_hh.noalias() += d_pre * hs[s].transpose();
      grad->w_xh.noalias() += d_pre * m.text_embedding.row(inputs[s]);
      grad->text_embedding.row(inputs[s]) += (m.w_xh.transpose() * d_pre).transpose();
      d_cond += d_pre;
      d_h_next = m.w_hh.transpose() * d_pre;
    }
    grad->w_ch.noalias() += d_cond * u.row(i);
    grad->b_h += d_cond;
    d_u.row(i) += (m.w_ch.transpose() * d_cond).transpose();
  }

  CaptionerLoss loss;
  loss.itc = itc.loss;
  loss.decoder = ce_sum / static_cast<double>(total_steps);
  loss.total = loss.itc + decoder_weight * loss.decoder;
  if (!grad) return loss;

  for (Index i = 0; i < n; ++i) {
    d_u.row(i) += normalize_backward(img.row(i).transpose(), u_norm[i], itc.grad_image.row(i).transpose()).transpose();
    const VectorXd d_raw = normalize_backward(txt.row(i).transpose(), t_norm[i], itc.grad_text.row(i).transpose());
    grad->text_proj.noalias() += d_raw * means.row(i);
    const auto& seq = seqs[static_cast<std::size_t>(i)];
    const VectorXd d_mean = m.text_proj.transpose() * d_raw / static_cast<double>(seq.size());
    for (int tok : seq) grad->text_embedding.row(tok) += d_mean.transpose();
  }
  grad->image_proj = d_u.transpose() * features;
  return loss;
}

// ---------------------------------------------------------------------------

namespace {

double global_norm(const CaptionerGradients& g) {
  return std::sqrt(g.image_proj.squaredNorm() + g.text_embedding.squaredNorm() + g.text_proj.squaredNorm() +
                   g.w_hh.squaredNorm() + g.w_xh.squaredNorm() + g.w_ch.squaredNorm() +
                   g.w_out.squaredNorm() + g.b_h.squaredNorm() + g.b_out.squaredNorm());
}

void sgd_step(CaptionerModel& m, const CaptionerGradients& g, double lr) {
  m.image_proj -= lr * g.image_proj;
  m.text_embedding -= lr * g.text_embedding;
  m.text_proj -= lr * g.text_proj;
  m.w_hh -= lr * g.w_hh;
  m.w_xh -= lr * g.w_xh;
  m.w_ch -= lr * g.w_ch;
  m.b_h -= lr * g.b_h;
  m.w_out -= lr * g.w_out;
  m.b_out -= lr * g.b_out;
}

}  // namespace

CaptionerTraining train_captioner(const std::vector<std::pair<SatTile, CaptionRecord>>& pairs,
                                  const CaptionerConfig& cfg) {
  if (pairs.size() < 2) throw std::invalid_argument("captioner training needs at least 2 pairs");
  if (cfg.batch < 2 || cfg.epochs < 0 || !(cfg.lr > 0.0)) {
    throw std::invalid_argument("captioner config needs batch >= 2, epochs >= 0, lr > 0");
  }
  const Vocab vocab = Vocab::from_phrase_table();
  std::vector<std::vector<int>> seqs;
  std::vector<VectorXd> feats;
  for (const auto& [tile, caption] : pairs) {
    seqs.push_back(vocab.encode(caption.text));
    if (seqs.back().empty()) throw std::invalid_argument("caption for " + tile.tile_id + " has no tokens");
    feats.push_back(image_features(tile, cfg.features));
  }
  const Index d_img = feats.front().size();
  MatrixXd features(static_cast<Index>(feats.size()), d_img);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].size() != d_img) throw std::invalid_argument("image features differ in width");
    features.row(static_cast<Index>(i)) = feats[i].transpose();
  }

  CaptionerTraining out;
  out.model = init_captioner(vocab, d_img, cfg);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x73687566));
  std::vector<std::size_t> order(pairs.size());
  const auto batch = static_cast<std::size_t>(cfg.batch);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    CaptionerLoss sum;
    std::size_t start = 0;
    while (start < order.size()) {
      auto end = std::min(order.size(), start + batch);
      if (order.size() - end == 1) end = order.size();
      MatrixXd bf(static_cast<Index>(end - start), d_img);
      std::vector<std::vector<int>> bs;
      for (auto k = start; k < end; ++k) {
        bf.row(static_cast<Index>(k - start)) = features.row(static_cast<Index>(order[k]));
        bs.push_back(seqs[order[k]]);
      }
      CaptionerGradients g;
      const auto loss = captioner_loss(out.model, bf, bs, cfg.decoder_weight, &g);
      if (!std::isfinite(loss.total)) {
        throw TrainingError(fmt::format("non-finite captioner loss at epoch {}: itc={} decoder={}", epoch,
                                        loss.itc, loss.decoder));
      }
      double lr = cfg.lr;
      if (cfg.clip_norm > 0.0) {
        const double norm = global_norm(g);
        if (norm > cfg.clip_norm) lr *= cfg.clip_norm / norm;
      }
      sgd_step(out.model, g, lr);
      const double w = static_cast<double>(end - start);
      sum.itc += w * loss.itc;
      sum.decoder += w * loss.decoder;
      sum.total += w * loss.total;
      start = end;
    }
    const double n = static_cast<double>(order.size());
    out.epoch_losses.push_back({sum.itc / n, sum.decoder / n, sum.total / n});
  }
  return out;
}

CaptionRecord generate_caption(const CaptionerModel& m, const SatTile& tile, int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be positive");
  const VectorXd x = image_features(tile, m.features);
  if (x.size() != m.d_img()) throw std::invalid_argument("tile features do not match the model");
  const VectorXd cond = m.w_ch * (m.image_proj * x) + m.b_h;
  VectorXd h = VectorXd::Zero(m.d_emb());
  int input = Vocab::kBos;
  std::vector<int> out;
  bool truncated = true;
  for (int step = 0; step <= max_len; ++step) {
    h = (m.w_hh * h + m.w_xh * m.text_embedding.row(input).transpose() + cond).array().tanh();
    VectorXd logits = m.w_out * h + m.b_out;
    logits[Vocab::kPad] = logits[Vocab::kBos] = logits[Vocab::kUnk] = -INFINITY;
    if (step == 0) logits[Vocab::kEos] = -INFINITY;
    Index best = 0;
    logits.maxCoeff(&best);
    if (best == Vocab::kEos) {
      truncated = false;
      break;
    }
    if (step == max_len) break;
    out.push_back(static_cast<int>(best));
    input = static_cast<int>(best);
  }
  CaptionRecord r;
  r.tile_id = tile.tile_id;
  r.tier = 2;
  r.source = CaptionSource::ToyCaptioner;
  r.text = m.vocab.decode(out);
  if (r.text.empty()) r.text = phrase_inventory().empty_caption();
  r.attributes = parse_attributes(r.text);
  r.truncated = truncated;
  return r;
}

double itc_retrieval_accuracy(const CaptionerModel& m, const MatrixXd& features,
                              const std::vector<std::vector<int>>& seqs, int batch) {
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  const MatrixXd img = embed_images(m, features);
  const MatrixXd txt = embed_texts(m, seqs);
  const Index n = img.rows();
  std::size_t hits = 0;
  for (Index start = 0; start < n; start += batch) {
    const Index len = std::min<Index>(batch, n - start);
    const MatrixXd sim = img.middleRows(start, len) * txt.middleRows(start, len).transpose();
    for (Index i = 0; i < len; ++i) {
      Index best = 0;
      sim.row(i).maxCoeff(&best);
      if (seqs[static_cast<std::size_t>(start + best)] == seqs[static_cast<std::size_t>(start + i)]) ++hits;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

json save_captioner(const CaptionerModel& m) {
  return json{{"format_version", kCheckpointFormatVersion},
              {"kind", "captioner"},
              {"vocab", m.vocab.tokens()},
              {"temperature", m.temperature},
              {"features", {{"jitter", m.features.jitter}, {"patch_grid", m.features.patch_grid}}},
              {"tensors",
               {{"image_proj", tensor_to_json(m.image_proj)},
                {"text_embedding", tensor_to_json(m.text_embedding)},
                {"text_proj", tensor_to_json(m.text_proj)},
                {"w_hh", tensor_to_json(m.w_hh)},
                {"w_xh", tensor_to_json(m.w_xh)},
                {"w_ch", tensor_to_json(m.w_ch)},
                {"b_h", tensor_to_json(m.b_h)},
                {"w_out", tensor_to_json(m.w_out)},
                {"b_out", tensor_to_json(m.b_out)}}}};
}

CaptionerModel load_captioner(const json& j) {
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion ||
      j.at("kind").get<std::string>() != "captioner") {
    throw ValidationError("not a captioner checkpoint of a supported version");
  }
  CaptionerModel m;
  auto tokens = j.at("vocab").get<std::vector<std::string>>();
  if (tokens.size() < kSpecials.size() || !std::equal(kSpecials.begin(), kSpecials.end(), tokens.begin())) {
    throw ValidationError("captioner vocab lacks the special tokens");
  }
  m.vocab = Vocab::from_tokens(std::vector<std::string>(tokens.begin() + kSpecials.size(), tokens.end()));
  m.temperature = j.at("temperature").get<double>();
  m.features.jitter = j.at("features").at("jitter").get<double>();
  m.features.patch_grid = j.at("features").at("patch_grid").get<int>();
  const auto& t = j.at("tensors");
  m.image_proj = tensor_from_json(t.at("image_proj"), "image_proj");
  m.text_embedding = tensor_from_json(t.at("text_embedding"), "text_embedding");
  m.text_proj = tensor_from_json(t.at("text_proj"), "text_proj");
  m.w_hh = tensor_from_json(t.at("w_hh"), "w_hh");
  m.w_xh = tensor_from_json(t.at("w_xh"), "w_xh");
  m.w_ch = tensor_from_json(t.at("w_ch"), "w_ch");
  m.b_h = tensor_from_json(t.at("b_h"), "b_h");
  m.w_out = tensor_from_json(t.at("w_out"), "w_out");
  m.b_out = tensor_from_json(t.at("b_out"), "b_out");
  if (m.text_embedding.rows() != m.vocab.size() || m.w_out.rows() != m.vocab.size()) {
    throw ValidationError("captioner tensors do not match the vocabulary");
  }
  if (!(m.temperature > 0.0)) throw ValidationError("captioner temperature must be positive");
  return m;
}

}  // namespace satvl

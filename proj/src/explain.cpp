#include "satvl/explain.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "satvl/common.hpp"

namespace satvl {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;
using Mask = std::vector<char>;

// Rows evaluated per model call when expanding coalitions over the background.
constexpr Index kEvalChunkRows = 8192;

double binomial(int n, int k) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

struct Coalitions {
  std::vector<Mask> masks;
  std::vector<double> weights;
  std::unordered_map<std::string, std::size_t> index;

  // Returns false when the mask was already present (its weight grows).
  bool add(const Mask& mask, double w) {
    std::string key(mask.begin(), mask.end());
    auto [it, inserted] = index.emplace(std::move(key), masks.size());
    if (!inserted) {
      weights[it->second] += w;
      return false;
    }
    masks.push_back(mask);
    weights.push_back(w);
    return true;
  }
};

Mask complement(const Mask& m) {
  Mask c(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) c[i] = !m[i];
  return c;
}

// Calls fn(mask) for every subset of {0..d-1} with exactly s members.
template <typename Fn>
void for_each_subset(int d, int s, Fn&& fn) {
  std::vector<int> idx(static_cast<std::size_t>(s));
  std::iota(idx.begin(), idx.end(), 0);
  Mask mask(static_cast<std::size_t>(d), 0);
  while (true) {
    std::fill(mask.begin(), mask.end(), 0);
    for (int i : idx) mask[static_cast<std::size_t>(i)] = 1;
    fn(mask);
    int pos = s - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == d - s + pos) --pos;
    if (pos < 0) return;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < s; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

Coalitions choose_coalitions(int d, int n_samples, std::uint64_t seed) {
  Coalitions c;
  if (d <= 30 && static_cast<double>(n_samples) >= std::ldexp(1.0, d) - 2.0) {
    for (int s = 1; s < d; ++s) {
      const double w = (d - 1.0) / (binomial(d, s) * s * (d - s));
      for_each_subset(d, s, [&](const Mask& m) { c.add(m, w); });
    }
    return c;
  }

  const int n_size_slots = d / 2;    // sizes 1..ceil((d-1)/2)
  const int n_paired = (d - 1) / 2;  // sizes whose complement has a different size
  std::vector<double> size_weight(static_cast<std::size_t>(n_size_slots));
  for (int s = 1; s <= n_size_slots; ++s) {
    size_weight[static_cast<std::size_t>(s - 1)] = (d - 1.0) / (s * static_cast<double>(d - s));
    if (s <= n_paired) size_weight[static_cast<std::size_t>(s - 1)] *= 2.0;
  }
  const double total = std::accumulate(size_weight.begin(), size_weight.end(), 0.0);
  for (auto& w : size_weight) w /= total;

  // Enumerate whole sizes, smallest first, while the budget covers them.
  std::vector<double> remaining = size_weight;
  double samples_left = n_samples;
  int full_sizes = 0;
  for (int s = 1; s <= n_size_slots; ++s) {
    const bool paired = s <= n_paired;
    const double n_subsets = binomial(d, s) * (paired ? 2.0 : 1.0);
    const double share = remaining[static_cast<std::size_t>(s - 1)];
    if (samples_left * share / n_subsets < 1.0 - 1e-8) break;
    ++full_sizes;
    samples_left -= n_subsets;
    if (share < 1.0) {
      for (auto& w : remaining) w /= (1.0 - share);
    }
    double w = size_weight[static_cast<std::size_t>(s - 1)] / binomial(d, s);
    if (paired) w /= 2.0;
    for_each_subset(d, s, [&](const Mask& m) {
      c.add(m, w);
      if (paired) c.add(complement(m), w);
    });
  }
  if (full_sizes == n_size_slots) return c;

  // Sample the remaining sizes in complementary pairs.
  const std::size_t n_fixed = c.masks.size();
  std::vector<double> dist(size_weight.begin() + full_sizes, size_weight.end());
  for (int s = full_sizes + 1; s <= n_paired; ++s) dist[static_cast<std::size_t>(s - 1 - full_sizes)] /= 2.0;
  const double dist_total = std::accumulate(dist.begin(), dist.end(), 0.0);
  for (auto& w : dist) w /= dist_total;
  std::vector<double> cumulative(dist.size());
  std::partial_sum(dist.begin(), dist.end(), cumulative.begin());

  std::mt19937_64 rng(mix_seed(seed, 0x6b65726e));
  std::vector<int> perm(static_cast<std::size_t>(d));
  auto left = static_cast<long long>(std::floor(samples_left));
  long long attempts = 4 * left + 16;
  while (left > 0 && attempts-- > 0) {
    const double u = uniform01(rng);
    const auto slot = static_cast<int>(std::min<std::ptrdiff_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin(),
        static_cast<std::ptrdiff_t>(dist.size()) - 1));
    const int s = full_sizes + 1 + slot;
    std::iota(perm.begin(), perm.end(), 0);
    Mask mask(static_cast<std::size_t>(d), 0);
    for (int i = 0; i < s; ++i) {
      const auto j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(d - i));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      mask[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 1;
    }
    if (c.add(mask, 1.0)) --left;
    if (left > 0 && s <= n_paired) {
      if (c.add(complement(mask), 1.0)) --left;
    }
  }
  const double weight_left =
      std::accumulate(size_weight.begin() + full_sizes, size_weight.end(), 0.0);
  const double sampled = std::accumulate(c.weights.begin() + static_cast<std::ptrdiff_t>(n_fixed), c.weights.end(), 0.0);
  if (sampled > 0.0) {
    for (std::size_t k = n_fixed; k < c.weights.size(); ++k) c.weights[k] *= weight_left / sampled;
  }
  return c;
}

// Mean of f over the background with the masked coordinates taken from x.
VectorXd coalition_values(const BatchModel& f, const MatrixXd& background, const VectorXd& x,
                          const std::vector<Mask>& masks) {
  const Index b = background.rows();
  const Index per_chunk = std::max<Index>(1, kEvalChunkRows / b);
  VectorXd values(static_cast<Index>(masks.size()));
  for (Index start = 0; start < values.size(); start += per_chunk) {
    const Index len = std::min(per_chunk, values.size() - start);
    MatrixXd rows(len * b, x.size());
    for (Index k = 0; k < len; ++k) {
      const Mask& mask = masks[static_cast<std::size_t>(start + k)];
      rows.middleRows(k * b, b) = background;
      for (Index i = 0; i < x.size(); ++i) {
        if (mask[static_cast<std::size_t>(i)]) rows.col(i).segment(k * b, b).setConstant(x[i]);
      }
    }
    const VectorXd out = f(rows);
    if (out.size() != rows.rows()) throw std::invalid_argument("model returned the wrong number of outputs");
    for (Index k = 0; k < len; ++k) values[start + k] = out.segment(k * b, b).mean();
  }
  return values;
}

std::string format_num(double v) { return fmt::format("{:.6g}", v); }

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

BatchModel pointwise(std::function<double(const VectorXd&)> f) {
  return [f = std::move(f)](const MatrixXd& rows) {
    VectorXd out(rows.rows());
    for (Index r = 0; r < rows.rows(); ++r) out[r] = f(rows.row(r).transpose());
    return out;
  };
}

VectorXd exact_shapley(const BatchModel& f, const VectorXd& background, const VectorXd& x) {
  const Index d = x.size();
  if (background.size() != d) throw std::invalid_argument("background and x differ in length");
  if (d > kMaxExactFeatures) {
    throw std::invalid_argument(fmt::format("exact Shapley enumeration supports d <= {}, got {}; use sampled_shap",
                                            kMaxExactFeatures, d));
  }
  if (d == 0) return VectorXd();
  const std::size_t n_masks = std::size_t{1} << d;
  MatrixXd rows(static_cast<Index>(n_masks), d);
  for (std::size_t m = 0; m < n_masks; ++m) {
    for (Index i = 0; i < d; ++i) rows(static_cast<Index>(m), i) = (m >> i) & 1u ? x[i] : background[i];
  }
  const VectorXd v = f(rows);
  if (v.size() != static_cast<Index>(n_masks)) throw std::invalid_argument("model returned the wrong number of outputs");

  // weight[s] = s! (d-s-1)! / d!
  std::vector<double> weight(static_cast<std::size_t>(d));
  for (Index s = 0; s < d; ++s) {
    weight[static_cast<std::size_t>(s)] = 1.0 / (static_cast<double>(d) * binomial(static_cast<int>(d - 1), static_cast<int>(s)));
  }
  VectorXd phi = VectorXd::Zero(d);
  for (std::size_t m = 0; m < n_masks; ++m) {
    const auto size = static_cast<std::size_t>(std::popcount(m));
    for (Index i = 0; i < d; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      if (m & bit) continue;
      phi[i] += weight[size] * (v[static_cast<Index>(m | bit)] - v[static_cast<Index>(m)]);
    }
  }
  return phi;
}

Attribution sampled_shap(const BatchModel& f, const MatrixXd& background, const VectorXd& x, int n_samples,
                         std::uint64_t seed, std::string instance_id) {
  const Index d = x.size();
  if (background.rows() < 1) throw std::invalid_argument("sampled_shap needs at least one background row");
  if (background.cols() != d) throw std::invalid_argument("background and x differ in width");
  if (d < 2) throw std::invalid_argument("sampled_shap needs at least two features");
  if (n_samples < 2 * d + 4) {
    throw std::invalid_argument(fmt::format("n_samples must be >= 2d + 4 = {}, got {}", 2 * d + 4, n_samples));
  }

  Attribution a;
  a.instance_id = std::move(instance_id);
  {
    const VectorXd base = f(background);
    MatrixXd one(1, d);
    one.row(0) = x.transpose();
    const VectorXd out = f(one);
    if (base.size() != background.rows() || out.size() != 1) {
      throw std::invalid_argument("model returned the wrong number of outputs");
    }
    a.base_value = base.mean();
    a.fx = out[0];
  }
  const double delta = a.fx - a.base_value;

  const Coalitions c = choose_coalitions(static_cast<int>(d), n_samples, seed);
  const VectorXd values = coalition_values(f, background, x, c.masks);

  // Eliminate the last feature through the efficiency constraint.
  const auto n = static_cast<Index>(c.masks.size());
  MatrixXd X(n, d - 1);
  VectorXd y(n), w(n);
  for (Index k = 0; k < n; ++k) {
    const Mask& mask = c.masks[static_cast<std::size_t>(k)];
    const double last = mask[static_cast<std::size_t>(d - 1)];
    for (Index i = 0; i < d - 1; ++i) X(k, i) = mask[static_cast<std::size_t>(i)] - last;
    y[k] = values[k] - a.base_value - last * delta;
    w[k] = c.weights[static_cast<std::size_t>(k)];
  }
  const MatrixXd xtw = X.transpose() * w.asDiagonal();
  const MatrixXd normal = xtw * X;
  const Eigen::LLT<MatrixXd> llt(normal);
  const VectorXd diag = llt.matrixLLT().diagonal();
  const double max_diag = normal.diagonal().cwiseAbs().maxCoeff();
  if (llt.info() != Eigen::Success || !diag.allFinite() ||
      diag.cwiseAbs2().minCoeff() <= 1e-12 * std::max(max_diag, 1e-300)) {
    throw ValidationError(fmt::format(
        "KernelSHAP regression is singular with {} coalitions over {} features; increase n_samples", n, d));
  }
  const VectorXd beta = llt.solve(xtw * y);
  a.phi.resize(d);
  a.phi.head(d - 1) = beta;
  a.phi[d - 1] = delta - beta.sum();
  return a;
}

// ---------------------------------------------------------------------------

ShapReport build_report(const std::vector<Attribution>& attributions,
                        const std::map<std::string, std::string>& captions, int k, int m,
                        const PhraseTable& table) {
  if (attributions.empty()) throw std::invalid_argument("build_report needs at least one attribution");
  if (k < 1 || m < 1) throw std::invalid_argument("k and m must be positive");
  const Index d = attributions.front().phi.size();
  for (const auto& a : attributions) {
    if (a.phi.size() != d) throw std::invalid_argument("attributions differ in dimension");
  }
  ShapReport r;
  if (k > d) {
    r.warnings.push_back(fmt::format("k={} exceeds the {} available dimensions; using {}", k, d, d));
    k = static_cast<int>(d);
  }
  if (static_cast<std::size_t>(m) > attributions.size()) {
    r.warnings.push_back(fmt::format("m={} exceeds the {} instances; using {}", m, attributions.size(),
                                     attributions.size()));
    m = static_cast<int>(attributions.size());
  }
  r.k = k;
  r.m = m;

  VectorXd importance = VectorXd::Zero(d);
  for (const auto& a : attributions) importance += a.phi.cwiseAbs();
  importance /= static_cast<double>(attributions.size());
  std::vector<int> dims(static_cast<std::size_t>(d));
  std::iota(dims.begin(), dims.end(), 0);
  std::stable_sort(dims.begin(), dims.end(), [&](int a, int b) { return importance[a] > importance[b]; });

  std::vector<std::size_t> order(attributions.size());
  for (int t = 0; t < k; ++t) {
    const int dim = dims[static_cast<std::size_t>(t)];
    r.top_dims.push_back({dim, importance[dim]});

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double pa = std::abs(attributions[a].phi[dim]);
      const double pb = std::abs(attributions[b].phi[dim]);
      if (pa != pb) return pa > pb;
      return attributions[a].instance_id < attributions[b].instance_id;
    });
    auto& ex = r.exemplars[dim];
    std::map<std::string, int> counts;
    for (int e = 0; e < m; ++e) {
      const auto& a = attributions[order[static_cast<std::size_t>(e)]];
      const auto it = captions.find(a.instance_id);
      if (it == captions.end()) throw ValidationError("no caption for instance " + a.instance_id);
      ex.push_back({a.instance_id, it->second, a.phi[dim]});
      for (const auto& match : match_phrases(it->second, table)) ++counts[match.entry->phrase];
    }
    auto& freq = r.phrase_freq[dim];
    for (const auto& [phrase, count] : counts) freq.push_back({phrase, count});
    std::stable_sort(freq.begin(), freq.end(), [](const PhraseCount& a, const PhraseCount& b) {
      return a.count > b.count;
    });
  }
  return r;
}

json report_to_json(const ShapReport& r) {
  json dims = json::array();
  for (const auto& td : r.top_dims) {
    json ex = json::array();
    for (const auto& e : r.exemplars.at(td.dim)) {
      ex.push_back({{"instance_id", e.instance_id}, {"caption", e.caption}, {"phi", e.phi}});
    }
    json freq = json::array();
    for (const auto& p : r.phrase_freq.at(td.dim)) freq.push_back({{"phrase", p.phrase}, {"count", p.count}});
    dims.push_back({{"dim", td.dim}, {"mean_abs_phi", td.mean_abs_phi}, {"exemplars", ex}, {"phrase_freq", freq}});
  }
  return json{{"k", r.k}, {"m", r.m}, {"top_dims", dims}, {"warnings", r.warnings}};
}

std::string report_to_markdown(const ShapReport& r) {
  std::string md = "# Embedding dimension report\n\n";
  md += fmt::format("Top {} dimensions by mean |SHAP|, {} exemplar captions each.\n\n", r.k, r.m);
  for (const auto& w : r.warnings) md += "> warning: " + w + "\n\n";
  md += "| rank | dim | mean abs SHAP |\n|---:|---:|---:|\n";
  for (std::size_t i = 0; i < r.top_dims.size(); ++i) {
    md += fmt::format("| {} | {} | {} |\n", i + 1, r.top_dims[i].dim, format_num(r.top_dims[i].mean_abs_phi));
  }
  for (const auto& td : r.top_dims) {
    md += fmt::format("\n## Dimension {}\n\n", td.dim);
    md += "| instance | SHAP | caption |\n|---|---:|---|\n";
    for (const auto& e : r.exemplars.at(td.dim)) {
      md += fmt::format("| {} | {} | {} |\n", e.instance_id, format_num(e.phi), e.caption);
    }
    md += "\nPhrases: ";
    const auto& freq = r.phrase_freq.at(td.dim);
    if (freq.empty()) md += "none";
    for (std::size_t i = 0; i < freq.size(); ++i) {
      md += fmt::format("{}{} ({})", i ? ", " : "", freq[i].phrase, freq[i].count);
    }
    md += "\n";
  }
  return md;
}

std::string report_to_svg(const ShapReport& r) {
  constexpr int kBarHeight = 22, kLabelWidth = 80, kChartWidth = 420, kTop = 30;
  const int height = kTop + static_cast<int>(r.top_dims.size()) * kBarHeight + 10;
  double max_v = 0.0;
  for (const auto& td : r.top_dims) max_v = std::max(max_v, td.mean_abs_phi);
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n",
      kLabelWidth + kChartWidth + 100, height);
  svg += fmt::format("<text x=\"{}\" y=\"18\">{}</text>\n", kLabelWidth,
                     xml_escape("mean |SHAP| per embedding dimension"));
  for (std::size_t i = 0; i < r.top_dims.size(); ++i) {
    const auto& td = r.top_dims[i];
    const int y = kTop + static_cast<int>(i) * kBarHeight;
    const double len = max_v > 0.0 ? td.mean_abs_phi / max_v * kChartWidth : 0.0;
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">dim {}</text>\n", kLabelWidth - 6,
                       y + 15, td.dim);
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" fill=\"#3b75af\"/>\n", kLabelWidth,
                       y + 3, len, kBarHeight - 6);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{}\">{}</text>\n", kLabelWidth + len + 4, y + 15,
                       format_num(td.mean_abs_phi));
  }
  svg += "</svg>\n";
  return svg;
}

json attribution_to_json(const Attribution& a) {
  return json{{"instance_id", a.instance_id},
              {"base_value", a.base_value},
              {"fx", a.fx},
              {"phi", std::vector<double>(a.phi.data(), a.phi.data() + a.phi.size())}};
}

Attribution attribution_from_json(const json& j) {
  Attribution a;
  a.instance_id = j.at("instance_id").get<std::string>();
  a.base_value = j.at("base_value").get<double>();
  a.fx = j.at("fx").get<double>();
  const auto phi = j.at("phi").get<std::vector<double>>();
  a.phi = Eigen::Map<const VectorXd>(phi.data(), static_cast<Index>(phi.size()));
  return a;
}

}  // namespace satvl

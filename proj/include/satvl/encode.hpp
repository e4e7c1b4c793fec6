#pragma once

// 512-dimensional caption embeddings: a deterministic feature-hashing
// reference encoder and a client for remote CLIP-style text encoders.

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "satvl/common.hpp"
#include "satvl/provider.hpp"

namespace satvl {

enum class EmbeddingSource { Reference, Remote };

class Embedding {
 public:
  /// Throws DimensionError unless values has exactly 512 entries and
  /// std::invalid_argument on non-finite entries.
  Embedding(Eigen::VectorXd values, EmbeddingSource source, bool normalized = false);

  const Eigen::VectorXd& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double norm() const { return norm_; }
  EmbeddingSource source() const { return source_; }
  bool normalized() const { return normalized_; }

 private:
  Eigen::VectorXd values_;
  double norm_ = 0.0;
  EmbeddingSource source_;
  bool normalized_;
};

double cosine(const Embedding& a, const Embedding& b);

inline constexpr std::string_view kReferenceEncoderId = "reference-hash-v1";

/// Signed unigram+bigram feature hashing into 512 buckets (FNV-1a 64) over
/// lowercase alphanumeric tokens. Texts without tokens map to bucket 0 = 1.
Embedding encode_reference(std::string_view text, bool normalize = true);

/// Remote protocol: POST {texts:[...]} -> {embeddings:[[512 floats],...]}.
/// Fixture files are keyed by hash(model + text). Wrong dimensionality is a
/// hard DimensionError; transport failures after retries propagate.
std::vector<Embedding> encode_remote(const std::vector<std::string>& texts,
                                     const ProviderConfig& cfg, JsonTransport* transport,
                                     const Sleeper& sleep = default_sleeper());

/// On-disk cache: one JSON record per hash(encoder_id + text).
class EmbeddingCache {
 public:
  EmbeddingCache(std::filesystem::path dir, std::string encoder_id);

  std::optional<Embedding> get(std::string_view text) const;
  void put(std::string_view text, const Embedding& e) const;

 private:
  FixtureStore store_;
  std::string encoder_id_;
};

nlohmann::json embedding_to_json(const Embedding& e);
Embedding embedding_from_json(const nlohmann::json& j, EmbeddingSource source);

}  // namespace satvl

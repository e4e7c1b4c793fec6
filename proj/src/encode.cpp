#include "satvl/encode.hpp"

#include <fmt/format.h>

#include <cmath>

namespace satvl {
namespace {

using nlohmann::json;

constexpr char kBigramSeparator = '\x1f';

void add_feature(Eigen::VectorXd& v, std::string_view feature) {
  const auto h = fnv1a64(feature);
  const auto bucket = static_cast<Eigen::Index>(h % kEmbeddingDim);
  const double sign = ((h >> 63) & 1u) ? -1.0 : 1.0;
  v[bucket] += sign;
}

std::string remote_fixture_key(const ProviderConfig& cfg, const std::string& text) {
  return FixtureStore::key("embed\n" + cfg.model + "\n" + text);
}

}  // namespace

Embedding::Embedding(Eigen::VectorXd values, EmbeddingSource source, bool normalized)
    : values_(std::move(values)), source_(source), normalized_(normalized) {
  if (static_cast<std::size_t>(values_.size()) != kEmbeddingDim) {
    throw DimensionError(fmt::format("expected {}-dimensional embedding, got {}", kEmbeddingDim,
                                     values_.size()));
  }
  if (!values_.allFinite()) throw std::invalid_argument("embedding has non-finite entries");
  norm_ = values_.norm();
}

double cosine(const Embedding& a, const Embedding& b) {
  const double denom = a.norm() * b.norm();
  return denom == 0.0 ? 0.0 : a.values().dot(b.values()) / denom;
}

Embedding encode_reference(std::string_view text, bool normalize) {
  const auto tokens = tokenize_words(text);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kEmbeddingDim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add_feature(v, tokens[i]);
    if (i + 1 < tokens.size()) add_feature(v, tokens[i] + kBigramSeparator + tokens[i + 1]);
  }
  // Also covers the rare case where signed collisions cancel everything.
  if (v.squaredNorm() == 0.0) v[0] = 1.0;
  if (normalize) v /= v.norm();
  return Embedding(std::move(v), EmbeddingSource::Reference, normalize);
}

std::vector<Embedding> encode_remote(const std::vector<std::string>& texts,
                                     const ProviderConfig& cfg, JsonTransport* transport,
                                     const Sleeper& sleep) {
  cfg.validate();
  if (texts.empty()) return {};

  std::optional<FixtureStore> fixtures;
  if (cfg.fixture_dir) {
    std::filesystem::create_directories(*cfg.fixture_dir);
    fixtures.emplace(*cfg.fixture_dir);
  }

  std::vector<std::optional<Eigen::VectorXd>> out(texts.size());
  auto to_vector = [](const json& arr) {
    if (!arr.is_array()) throw ResponseError("embedding is not an array");
    if (arr.size() != kEmbeddingDim) {
      throw DimensionError(fmt::format("provider returned a {}-dimensional embedding; expected {}",
                                       arr.size(), kEmbeddingDim));
    }
    Eigen::VectorXd v(kEmbeddingDim);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
  };

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (fixtures) {
      if (auto fx = fixtures->load(remote_fixture_key(cfg, texts[i]))) {
        out[i] = to_vector(fx->at("embedding"));
        continue;
      }
    }
    pending.push_back(i);
  }
  if (!pending.empty() && !transport) {
    throw TransportError(fmt::format("{} texts have no fixture and no provider is configured",
                                     pending.size()));
  }

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto n_batches = (pending.size() + batch - 1) / batch;
  std::vector<std::exception_ptr> errors(n_batches);
  bounded_parallel_for(n_batches, cfg.max_parallel, [&](std::size_t b) {
    try {
      const auto lo = b * batch;
      const auto hi = std::min(pending.size(), lo + batch);
      json body{{"texts", json::array()}};
      if (!cfg.model.empty()) body["model"] = cfg.model;
      for (auto k = lo; k < hi; ++k) body["texts"].push_back(texts[pending[k]]);
      const auto response = with_retry(cfg.retry, sleep, [&] { return transport->post(body); });
      if (!response.is_object() || !response.contains("embeddings") ||
          !response.at("embeddings").is_array()) {
        throw ResponseError("response lacks an embeddings array");
      }
      const auto& embs = response.at("embeddings");
      if (embs.size() != hi - lo) {
        throw ResponseError(fmt::format("expected {} embeddings, got {}", hi - lo, embs.size()));
      }
      for (auto k = lo; k < hi; ++k) {
        auto v = to_vector(embs[k - lo]);
        if (fixtures) {
          fixtures->store(remote_fixture_key(cfg, texts[pending[k]]),
                          json{{"text", texts[pending[k]]}, {"embedding", embs[k - lo]}});
        }
        out[pending[k]] = std::move(v);
      }
    } catch (...) {
      errors[b] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<Embedding> result;
  result.reserve(texts.size());
  for (auto& v : out) result.emplace_back(std::move(*v), EmbeddingSource::Remote);
  return result;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path dir, std::string encoder_id)
    : store_(std::move(dir)), encoder_id_(std::move(encoder_id)) {}

std::optional<Embedding> EmbeddingCache::get(std::string_view text) const {
  const auto key = FixtureStore::key(std::string(text) + "\n" + encoder_id_);
  auto j = store_.load(key);
  if (!j) return std::nullopt;
  const auto source = j->value("source", "reference") == "remote" ? EmbeddingSource::Remote
                                                                   : EmbeddingSource::Reference;
  return embedding_from_json(*j, source);
}

void EmbeddingCache::put(std::string_view text, const Embedding& e) const {
  const auto key = FixtureStore::key(std::string(text) + "\n" + encoder_id_);
  auto j = embedding_to_json(e);
  j["encoder"] = encoder_id_;
  store_.store(key, j);
}

json embedding_to_json(const Embedding& e) {
  std::vector<double> v(e.values().data(), e.values().data() + e.values().size());
  return json{{"vector", v},
              {"source", e.source() == EmbeddingSource::Remote ? "remote" : "reference"},
              {"normalized", e.normalized()}};
}

Embedding embedding_from_json(const json& j, EmbeddingSource source) {
  const auto v = j.at("vector").get<std::vector<double>>();
  Eigen::VectorXd values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return Embedding(std::move(values), source, j.value("normalized", false));
}

}  // namespace satvl

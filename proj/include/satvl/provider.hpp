#pragma once

// Shared plumbing for remote providers: configuration, JSON-over-HTTP
// transport, retry with exponential backoff, bounded parallelism, and the
// content-addressed fixture store used for recorded playback.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "satvl/common.hpp"

namespace satvl {

/// Network-level failure (connection refused, timeout, HTTP 5xx/429).
/// Retried by with_retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The provider answered but the payload does not match the schema.
class ResponseError : public Error {
 public:
  using Error::Error;
};

/// Provider returned vectors of the wrong length.
class DimensionError : public Error {
 public:
  using Error::Error;
};

struct RetryPolicy {
  int max_attempts = 3;
  double base_backoff_s = 1.0;
};

struct ProviderConfig {
  std::string endpoint;
  std::string model;
  std::string auth_env;  // name of the env var holding the bearer token
  int max_parallel = 4;
  int batch_size = 32;  // texts per request for embedding providers
  double timeout_s = 60.0;
  RetryPolicy retry;
  std::optional<std::filesystem::path> fixture_dir;

  void validate() const;
};

void to_json(nlohmann::json& j, const ProviderConfig& c);
void from_json(const nlohmann::json& j, ProviderConfig& c);

/// POSTs a JSON body and returns the decoded JSON response.
class JsonTransport {
 public:
  virtual ~JsonTransport() = default;
  virtual nlohmann::json post(const nlohmann::json& body) = 0;
};

/// cpp-httplib backed transport. The bearer token is read from the
/// environment at construction; a missing variable sends no auth header.
std::unique_ptr<JsonTransport> make_http_transport(const ProviderConfig& cfg);

using Sleeper = std::function<void(std::chrono::duration<double>)>;
Sleeper default_sleeper();

/// Calls fn until it succeeds, retrying TransportError up to
/// policy.max_attempts with backoff base * 2^(attempt-1).
template <typename Fn>
auto with_retry(const RetryPolicy& policy, const Sleeper& sleep, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (attempt >= policy.max_attempts) throw;
      sleep(std::chrono::duration<double>(policy.base_backoff_s * static_cast<double>(1 << (attempt - 1))));
    }
  }
}

/// Runs body(i) for i in [0, n) on at most max_parallel threads. body must
/// not throw; results are expected to be written by index.
template <typename Body>
void bounded_parallel_for(std::size_t n, int max_parallel, Body&& body) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, max_parallel)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
}

/// One JSON file per content hash: <dir>/<sha256(material)>.json.
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string key(std::string_view material) { return sha256_hex(material); }
  std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }
  std::optional<nlohmann::json> load(const std::string& key) const;
  void store(const std::string& key, const nlohmann::json& value) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace satvl

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>
#include <regex>

#include "satvl/provider.hpp"

namespace satvl {
namespace {

using nlohmann::json;

class HttpJsonTransport final : public JsonTransport {
 public:
  explicit HttpJsonTransport(const ProviderConfig& cfg) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg.endpoint, m, kUrl)) {
      throw std::invalid_argument("endpoint is not an http(s) URL: " + cfg.endpoint);
    }
    base_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (!cfg.auth_env.empty()) {
      if (const char* token = std::getenv(cfg.auth_env.c_str()); token && *token) {
        headers_.emplace("Authorization", std::string("Bearer ") + token);
      }
    }
    timeout_s_ = cfg.timeout_s;
  }

  json post(const json& body) override {
    // httplib clients are not thread-safe; one per call.
    httplib::Client client(base_);
    const auto secs = static_cast<time_t>(timeout_s_);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    auto res = client.Post(path_, headers_, body.dump(), "application/json");
    if (!res) {
      throw TransportError("POST " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransportError("POST " + base_ + path_ + " returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      throw ResponseError("POST " + base_ + path_ + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ResponseError(std::string("response is not JSON: ") + e.what());
    }
  }

 private:
  std::string base_;
  std::string path_;
  httplib::Headers headers_;
  double timeout_s_ = 60.0;
};

}  // namespace

std::unique_ptr<JsonTransport> make_http_transport(const ProviderConfig& cfg) {
  return std::make_unique<HttpJsonTransport>(cfg);
}

void ProviderConfig::validate() const {
  if (max_parallel < 1) throw std::invalid_argument("max_parallel must be >= 1");
  if (retry.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (retry.base_backoff_s < 0.0) throw std::invalid_argument("base_backoff must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

void to_json(json& j, const ProviderConfig& c) {
  j = json{{"endpoint", c.endpoint},
           {"model", c.model},
           {"auth_env", c.auth_env},
           {"max_parallel", c.max_parallel},
           {"batch_size", c.batch_size},
           {"timeout_s", c.timeout_s},
           {"retry", {{"max_attempts", c.retry.max_attempts}, {"base_backoff_s", c.retry.base_backoff_s}}}};
  if (c.fixture_dir) j["fixture_dir"] = c.fixture_dir->string();
}

void from_json(const json& j, ProviderConfig& c) {
  c = ProviderConfig{};
  c.endpoint = j.value("endpoint", "");
  c.model = j.value("model", "");
  c.auth_env = j.value("auth_env", "");
  c.max_parallel = j.value("max_parallel", c.max_parallel);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  if (j.contains("retry")) {
    c.retry.max_attempts = j.at("retry").value("max_attempts", c.retry.max_attempts);
    c.retry.base_backoff_s = j.at("retry").value("base_backoff_s", c.retry.base_backoff_s);
  }
  if (j.contains("fixture_dir") && !j.at("fixture_dir").is_null()) {
    c.fixture_dir = j.at("fixture_dir").get<std::string>();
  }
}

Sleeper default_sleeper() {
  return [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

std::optional<json> FixtureStore::load(const std::string& key) const {
  const auto p = path_for(key);
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw ResponseError("corrupt fixture " + p.string() + ": " + e.what());
  }
}

void FixtureStore::store(const std::string& key, const json& value) const {
  write_file(path_for(key), value.dump(2) + "\n");
}

}  // namespace satvl

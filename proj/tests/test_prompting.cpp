#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "satvl/prompting.hpp"
#include "test_util.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a macro named _res.
#include "httplib.h"

namespace satvl {
namespace {

using nlohmann::json;

std::vector<SatTile> make_tiles(int n) {
  std::vector<SatTile> tiles;
  for (int i = 0; i < n; ++i) {
    SatTile t;
    t.tile_id = "t" + std::to_string(i);
    t.county_fips = "01001";
    t.image_uri = "img/" + t.tile_id + ".png";
    tiles.push_back(t);
  }
  return tiles;
}

std::string uri_tile(const json& body) {
  const auto uri = body.at("image_uri").get<std::string>();
  return uri.substr(4, uri.size() - 8);
}

/// Answers every request with a caption naming the tile; counts calls and
/// the peak number of concurrent calls.
class CountingTransport : public JsonTransport {
 public:
  explicit CountingTransport(std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : delay_(delay) {}

  json post(const json& body) override {
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    ++calls_;
    std::this_thread::sleep_for(delay_);
    const auto id = uri_tile(body);
    --in_flight_;
    if (id == empty_for) return json{{"tile_id", id}, {"caption", ""}};
    return json{{"tile_id", id}, {"caption", "A small house with a flat roof near " + id + "."}};
  }

  int calls() const { return calls_; }
  int peak() const { return peak_; }
  std::string empty_for;

 private:
  std::chrono::milliseconds delay_;
  std::atomic<int> in_flight_{0}, peak_{0}, calls_{0};
};

/// Fails with TransportError a fixed number of times before answering.
class FlakyTransport : public JsonTransport {
 public:
  explicit FlakyTransport(int failures) : failures_(failures) {}
  json post(const json& body) override {
    ++calls;
    if (calls <= failures_) throw TransportError("connection reset");
    return json{{"caption", "It has a hip roof."}, {"tile_id", uri_tile(body)}};
  }
  int calls = 0;

 private:
  int failures_;
};

ProviderConfig fast_config() {
  ProviderConfig cfg;
  cfg.model = "test-model";
  cfg.max_parallel = 4;
  cfg.retry = {3, 0.5};
  return cfg;
}

TEST(BuildPrompt, TierTwoEmbedsStructuredPrompt) {
  const auto p = build_prompt(2);
  EXPECT_EQ(p.tier, 2);
  EXPECT_EQ(p.template_text.rfind("Analyze the satellite image and provide a detailed description", 0), 0u);
  EXPECT_NE(p.template_text.find("House roof type and condition"), std::string::npos);
  EXPECT_FALSE(p.attribute_targets.empty());
}

TEST(BuildPrompt, TierFiveAsksForInterpretiveSummaries) {
  EXPECT_NE(build_prompt(5).template_text.find("concise interpretive summaries"), std::string::npos);
}

TEST(BuildPrompt, OutOfRangeTiersThrow) {
  EXPECT_THROW(build_prompt(0), std::invalid_argument);
  EXPECT_THROW(build_prompt(6), std::invalid_argument);
}

TEST(BuildPrompt, AllTiersNonEmptyAndTargetsOnlyOnTwoAndThree) {
  for (int tier = 1; tier <= 5; ++tier) {
    const auto p = build_prompt(tier);
    EXPECT_EQ(p.tier, tier);
    EXPECT_FALSE(p.template_text.empty());
    EXPECT_GE(p.version, 1);
    EXPECT_EQ(!p.attribute_targets.empty(), tier == 2 || tier == 3) << tier;
  }
}

TEST(RequestCaptions, CompleteFixturesMakeNoCalls) {
  testing::TempDir dir("fixtures");
  const auto tiles = make_tiles(3);
  const auto prompt = build_prompt(2);
  FixtureStore store(dir.path());
  for (const auto& t : tiles) {
    store.store(caption_fixture_key(t.tile_id, prompt.template_text),
                json{{"tile_id", t.tile_id}, {"caption", "A large house near " + t.tile_id + "."}});
  }
  auto cfg = fast_config();
  cfg.fixture_dir = dir.path();
  CountingTransport transport;
  const auto batch = request_captions(tiles, prompt, cfg, &transport);
  EXPECT_EQ(transport.calls(), 0);
  ASSERT_EQ(batch.records.size(), 3u);
  EXPECT_TRUE(batch.failures.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(batch.records[i].tile_id, tiles[i].tile_id);
    EXPECT_EQ(batch.records[i].source, CaptionSource::Fixture);
    EXPECT_EQ(batch.records[i].attributes.house_size, HouseSize::Large);
  }
  // Playback without any transport is a pure function of (tiles, prompt).
  const auto again = request_captions(tiles, prompt, cfg, nullptr);
  EXPECT_EQ(again.records, batch.records);
}

TEST(RequestCaptions, LiveRunWritesFixturesForPlayback) {
  testing::TempDir dir("fixtures");
  const auto tiles = make_tiles(4);
  auto cfg = fast_config();
  cfg.fixture_dir = dir.path();
  CountingTransport transport;
  const auto live = request_captions(tiles, build_prompt(1), cfg, &transport);
  EXPECT_EQ(transport.calls(), 4);
  ASSERT_EQ(live.records.size(), 4u);
  EXPECT_EQ(live.records[0].source, CaptionSource::RemoteLlm);

  CountingTransport second;
  const auto replay = request_captions(tiles, build_prompt(1), cfg, &second);
  EXPECT_EQ(second.calls(), 0);
  ASSERT_EQ(replay.records.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(replay.records[i].text, live.records[i].text);

  // A different template is a different fixture key.
  CountingTransport third;
  request_captions(tiles, build_prompt(5), cfg, &third);
  EXPECT_EQ(third.calls(), 4);
}

TEST(RequestCaptions, EmptyCaptionIsolatedToOneTile) {
  const auto tiles = make_tiles(3);
  CountingTransport transport;
  transport.empty_for = "t1";
  const auto batch = request_captions(tiles, build_prompt(2), fast_config(), &transport);
  ASSERT_EQ(batch.records.size(), 2u);
  EXPECT_EQ(batch.records[0].tile_id, "t0");
  EXPECT_EQ(batch.records[1].tile_id, "t2");
  ASSERT_EQ(batch.failures.size(), 1u);
  EXPECT_EQ(batch.failures[0].tile_id, "t1");
  EXPECT_EQ(batch.failures[0].index, 1u);
  EXPECT_EQ(batch.failures[0].kind, "parse");
}

TEST(RequestCaptions, AtMostMaxParallelInFlight) {
  const auto tiles = make_tiles(10);
  auto cfg = fast_config();
  cfg.max_parallel = 2;
  CountingTransport transport(std::chrono::milliseconds(20));
  const auto batch = request_captions(tiles, build_prompt(2), cfg, &transport);
  EXPECT_EQ(batch.records.size(), 10u);
  EXPECT_EQ(transport.calls(), 10);
  EXPECT_LE(transport.peak(), 2);
  EXPECT_GE(transport.peak(), 1);
}

/// Finishes requests in reverse order of arrival.
class ReverseTransport : public JsonTransport {
 public:
  json post(const json& body) override {
    const auto id = uri_tile(body);
    const int n = std::stoi(id.substr(1));
    std::this_thread::sleep_for(std::chrono::milliseconds(5 * (8 - n)));
    return json{{"tile_id", id}, {"caption", "Caption for " + id + "."}};
  }
};

TEST(RequestCaptions, OutputPreservesInputOrder) {
  const auto tiles = make_tiles(8);
  auto cfg = fast_config();
  cfg.max_parallel = 8;
  ReverseTransport transport;
  const auto batch = request_captions(tiles, build_prompt(2), cfg, &transport);
  ASSERT_EQ(batch.records.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(batch.records[i].tile_id, tiles[i].tile_id);
}

TEST(RequestCaptions, RetriesWithExponentialBackoff) {
  const auto tiles = make_tiles(1);
  auto cfg = fast_config();
  cfg.max_parallel = 1;
  FlakyTransport transport(2);
  std::vector<double> sleeps;
  const auto batch = request_captions(tiles, build_prompt(2), cfg, &transport,
                                      [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); });
  ASSERT_EQ(batch.records.size(), 1u);
  EXPECT_EQ(transport.calls, 3);
  EXPECT_EQ(sleeps, (std::vector<double>{0.5, 1.0}));
}

TEST(RequestCaptions, TransportFailureAfterRetriesIsPerTile) {
  const auto tiles = make_tiles(2);
  auto cfg = fast_config();
  cfg.max_parallel = 1;
  FlakyTransport transport(3);  // first tile exhausts its three attempts
  const auto batch = request_captions(tiles, build_prompt(2), cfg, &transport,
                                      [](std::chrono::duration<double>) {});
  ASSERT_EQ(batch.failures.size(), 1u);
  EXPECT_EQ(batch.failures[0].tile_id, "t0");
  EXPECT_EQ(batch.failures[0].kind, "transport");
  ASSERT_EQ(batch.records.size(), 1u);
  EXPECT_EQ(batch.records[0].tile_id, "t1");
}

TEST(RequestCaptions, MalformedResponseIsParseFailure) {
  class Bad : public JsonTransport {
   public:
    json post(const json&) override { return json{{"text", "no caption key"}}; }
  } transport;
  const auto batch = request_captions(make_tiles(2), build_prompt(2), fast_config(), &transport);
  EXPECT_TRUE(batch.records.empty());
  ASSERT_EQ(batch.failures.size(), 2u);
  EXPECT_EQ(batch.failures[1].kind, "parse");
}

TEST(RequestCaptions, NoFixtureAndNoTransportIsUnavailable) {
  const auto batch = request_captions(make_tiles(2), build_prompt(2), fast_config(), nullptr);
  ASSERT_EQ(batch.failures.size(), 2u);
  EXPECT_EQ(batch.failures[0].kind, "unavailable");
}

TEST(RequestCaptions, InvalidConfigRejected) {
  auto cfg = fast_config();
  cfg.max_parallel = 0;
  EXPECT_THROW(request_captions(make_tiles(1), build_prompt(2), cfg, nullptr), std::invalid_argument);
  cfg = fast_config();
  cfg.retry.max_attempts = 0;
  EXPECT_THROW(request_captions(make_tiles(1), build_prompt(2), cfg, nullptr), std::invalid_argument);
}

TEST(RequestCaptions, RequestBodyShape) {
  const auto tiles = make_tiles(1);
  const auto body = caption_request_body(tiles[0], build_prompt(3), fast_config());
  EXPECT_EQ(body.at("model"), "test-model");
  EXPECT_EQ(body.at("prompt"), build_prompt(3).template_text);
  EXPECT_EQ(body.at("image_uri"), "img/t0.png");
}

// Local HTTP server exercising the real transport.
class LocalServer {
 public:
  LocalServer() {
    server_.Post("/caption", [this](const httplib::Request& req, httplib::Response& res) {
      auth_seen = req.get_header_value("Authorization");
      const auto body = json::parse(req.body);
      const auto id = uri_tile(body);
      if (id == "t1") {
        res.status = 500;
        return;
      }
      if (id == "t2") {
        res.status = 400;
        return;
      }
      res.set_content(json{{"tile_id", id}, {"caption", "A medium-size house on a highway."}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/caption"; }
  std::string auth_seen;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(HttpTransport, LocalServerRoundTripWithAuthAndErrors) {
  LocalServer server;
  ::setenv("SATVL_TEST_TOKEN", "secret", 1);
  auto cfg = fast_config();
  cfg.endpoint = server.endpoint();
  cfg.auth_env = "SATVL_TEST_TOKEN";
  cfg.max_parallel = 1;
  cfg.retry = {2, 0.0};
  cfg.timeout_s = 5;
  auto transport = make_http_transport(cfg);
  const auto batch = request_captions(make_tiles(3), build_prompt(2), cfg, transport.get(),
                                      [](std::chrono::duration<double>) {});
  EXPECT_EQ(server.auth_seen, "Bearer secret");
  ASSERT_EQ(batch.records.size(), 1u);
  EXPECT_EQ(batch.records[0].attributes.road, RoadType::Highway);
  ASSERT_EQ(batch.failures.size(), 2u);
  EXPECT_EQ(batch.failures[0].kind, "transport");  // HTTP 500
  EXPECT_EQ(batch.failures[1].kind, "parse");      // HTTP 400
}

TEST(HttpTransport, RejectsNonHttpEndpoint) {
  auto cfg = fast_config();
  cfg.endpoint = "ftp://example.com/x";
  EXPECT_THROW(make_http_transport(cfg), std::invalid_argument);
}

TEST(HttpTransport, ConnectionRefusedIsTransportError) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = fast_config();
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/";
  cfg.timeout_s = 2;
  auto transport = make_http_transport(cfg);
  EXPECT_THROW(transport->post(json::object()), TransportError);
}

TEST(ProviderConfig, JsonRoundTrip) {
  auto cfg = fast_config();
  cfg.endpoint = "https://example.com/v1";
  cfg.fixture_dir = "fx";
  const json j = cfg;
  const auto back = j.get<ProviderConfig>();
  EXPECT_EQ(back.endpoint, cfg.endpoint);
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.retry.base_backoff_s, 0.5);
  EXPECT_EQ(back.fixture_dir, std::filesystem::path("fx"));
}

TEST(BoundedParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  bounded_parallel_for(100, 7, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

}  // namespace
}  // namespace satvl

#include <gtest/gtest.h>

#include <algorithm>
#include <mutex>
#include <random>
#include <set>

#include "satvl/attributes.hpp"
#include "satvl/encode.hpp"
#include "test_util.hpp"

namespace satvl {
namespace {

using nlohmann::json;

/// Returns a deterministic vector per text; records every request body.
class FakeEncoder : public JsonTransport {
 public:
  explicit FakeEncoder(std::size_t dim = kEmbeddingDim) : dim_(dim) {}

  json post(const json& body) override {
    std::lock_guard lock(mu_);
    requests.push_back(body);
    json embs = json::array();
    for (const auto& t : body.at("texts")) {
      json v = json::array();
      const auto h = fnv1a64(t.get<std::string>());
      for (std::size_t i = 0; i < dim_; ++i) v.push_back(static_cast<double>((h >> (i % 64)) & 1u) - 0.25);
      embs.push_back(v);
    }
    return json{{"embeddings", embs}};
  }

  std::vector<json> requests;

 private:
  std::size_t dim_;
  std::mutex mu_;
};

std::set<std::string> bigrams(const std::string& text) {
  const auto t = tokenize_words(text);
  std::set<std::string> out;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) out.insert(t[i] + " " + t[i + 1]);
  return out;
}

TEST(EncodeReference, PureAndUnitNorm) {
  for (const char* text : {"gable roof", "A small house with a pool.", "x", "snow snow snow"}) {
    const auto a = encode_reference(text);
    const auto b = encode_reference(text);
    EXPECT_EQ(a.values(), b.values());
    EXPECT_EQ(a.values().size(), 512);
    EXPECT_NEAR(a.norm(), 1.0, 1e-6);
    EXPECT_TRUE(a.normalized());
    EXPECT_EQ(a.source(), EmbeddingSource::Reference);
  }
}

TEST(EncodeReference, CaseWhitespacePunctuationInvariant) {
  EXPECT_EQ(encode_reference("gable roof").values(), encode_reference("gable  ROOF.").values());
}

TEST(EncodeReference, EmptyTextConvention) {
  for (const char* text : {"", "  ", "...!"}) {
    const auto e = encode_reference(text);
    EXPECT_EQ(e[0], 1.0);
    EXPECT_EQ(e.values().tail(511).squaredNorm(), 0.0);
  }
}

// Values computed ahead of time by a separate implementation of the same
// hashing scheme.
TEST(EncodeReference, FrozenCosines) {
  const auto base = encode_reference("gable roof good condition");
  const double far = cosine(base, encode_reference("flat roof damaged"));
  const double near = cosine(base, encode_reference("gable roof new condition"));
  EXPECT_NEAR(far, 0.1690308509457033, 1e-12);
  EXPECT_NEAR(near, 0.5714285714285713, 1e-12);
  EXPECT_LT(far, near);
}

TEST(EncodeReference, UnnormalizedKeepsCounts) {
  const auto e = encode_reference("roof", false);
  EXPECT_FALSE(e.normalized());
  EXPECT_DOUBLE_EQ(e.norm(), 1.0);
  const auto h = fnv1a64("roof");
  EXPECT_EQ(e[h % 512], (h >> 63) ? -1.0 : 1.0);
}

// Over grammar captions, the quarter of pairs sharing the most bigrams is
// clearly more similar than the quarter sharing the fewest. Every pair
// shares some template bigrams, so quartiles stand in for a no-overlap bucket.
TEST(EncodeReference, LocalityOnGrammarCorpus) {
  std::mt19937_64 rng(17);
  auto random_caption = [&] {
    StructuredAttributes a;
    for (Field f : kAllFields) {
      const auto& info = field_info(f);
      const std::uint32_t n = info.is_set ? (1u << info.values.size()) : info.values.size() + 1;
      set_field_code(a, f, static_cast<std::uint32_t>(rng() % n));
    }
    return render_caption(a, rng());
  };
  struct PairStat {
    std::size_t shared;
    double cos;
  };
  std::vector<PairStat> stats;
  for (int i = 0; i < 3000; ++i) {
    const auto a = random_caption(), b = random_caption();
    const auto ba = bigrams(a), bb = bigrams(b);
    std::size_t shared = 0;
    for (const auto& g : ba) shared += bb.count(g);
    stats.push_back({shared, cosine(encode_reference(a), encode_reference(b))});
  }
  std::sort(stats.begin(), stats.end(), [](auto& x, auto& y) { return x.shared < y.shared; });
  const std::size_t q = stats.size() / 4;
  double low = 0, high = 0;
  for (std::size_t i = 0; i < q; ++i) {
    low += stats[i].cos;
    high += stats[stats.size() - 1 - i].cos;
  }
  low /= static_cast<double>(q);
  high /= static_cast<double>(q);
  EXPECT_GT(high, low + 0.1) << "low " << low << " high " << high;

  // Mean cosine rises from each quartile to the next.
  double prev = -1.0;
  for (std::size_t k = 0; k < 4; ++k) {
    double mean = 0;
    for (std::size_t i = k * q; i < (k + 1) * q; ++i) mean += stats[i].cos;
    mean /= static_cast<double>(q);
    EXPECT_GE(mean, prev) << "quartile " << k;
    prev = mean;
  }
}

TEST(Embedding, RejectsWrongDimensionAndNonFinite) {
  EXPECT_THROW(Embedding(Eigen::VectorXd::Zero(768), EmbeddingSource::Remote), DimensionError);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(512);
  v[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Embedding(v, EmbeddingSource::Remote), std::invalid_argument);
}

TEST(Embedding, CosineOfZeroVectorIsZero) {
  const Embedding z(Eigen::VectorXd::Zero(512), EmbeddingSource::Remote);
  EXPECT_EQ(cosine(z, encode_reference("roof")), 0.0);
}

TEST(EncodeRemote, WrongDimensionNamesExpected512) {
  FakeEncoder transport(768);
  ProviderConfig cfg;
  try {
    encode_remote({"a caption"}, cfg, &transport);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("512"), std::string::npos) << msg;
    EXPECT_NE(msg.find("768"), std::string::npos) << msg;
  }
}

TEST(EncodeRemote, EmptyListSendsNothing) {
  FakeEncoder transport;
  EXPECT_TRUE(encode_remote({}, ProviderConfig{}, &transport).empty());
  EXPECT_TRUE(transport.requests.empty());
  EXPECT_TRUE(encode_remote({}, ProviderConfig{}, nullptr).empty());
}

TEST(EncodeRemote, BatchesAndPreservesOrder) {
  FakeEncoder transport;
  ProviderConfig cfg;
  cfg.batch_size = 3;
  cfg.max_parallel = 2;
  std::vector<std::string> texts;
  for (int i = 0; i < 8; ++i) texts.push_back("text " + std::to_string(i));
  const auto embs = encode_remote(texts, cfg, &transport);
  ASSERT_EQ(embs.size(), 8u);
  EXPECT_EQ(transport.requests.size(), 3u);
  FakeEncoder single;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto one = encode_remote({texts[i]}, ProviderConfig{}, &single);
    EXPECT_EQ(one[0].values(), embs[i].values());
    EXPECT_EQ(embs[i].source(), EmbeddingSource::Remote);
  }
}

TEST(EncodeRemote, FixturesGiveZeroCalls) {
  testing::TempDir dir("embed_fx");
  ProviderConfig cfg;
  cfg.model = "clip-test";
  cfg.fixture_dir = dir.path();
  const std::vector<std::string> texts{"a", "b", "c"};
  FakeEncoder live;
  const auto first = encode_remote(texts, cfg, &live);
  EXPECT_EQ(live.requests.size(), 1u);

  FakeEncoder replay;
  const auto second = encode_remote(texts, cfg, &replay);
  EXPECT_TRUE(replay.requests.empty());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(first[i].values(), second[i].values());
  EXPECT_NO_THROW(encode_remote(texts, cfg, nullptr));

  cfg.model = "another-model";
  EXPECT_THROW(encode_remote(texts, cfg, nullptr), TransportError);
}

TEST(EncodeRemote, MalformedResponse) {
  class Bad : public JsonTransport {
   public:
    json post(const json&) override { return json{{"embeddings", json::array()}}; }
  } transport;
  EXPECT_THROW(encode_remote({"a"}, ProviderConfig{}, &transport), ResponseError);
}

TEST(EmbeddingCache, RoundTripKeyedByEncoder) {
  testing::TempDir dir("cache");
  EmbeddingCache cache(dir.path(), std::string(kReferenceEncoderId));
  EXPECT_FALSE(cache.get("gable roof").has_value());
  const auto e = encode_reference("gable roof");
  cache.put("gable roof", e);
  const auto back = cache.get("gable roof");
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->values(), e.values());
  EXPECT_TRUE(back->normalized());
  EmbeddingCache other(dir.path(), "other-encoder");
  EXPECT_FALSE(other.get("gable roof").has_value());
}

}  // namespace
}  // namespace satvl

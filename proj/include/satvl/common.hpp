#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace satvl {

inline constexpr std::size_t kEmbeddingDim = 512;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single record of an input file failed to parse or validate.
class RecordError : public Error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : Error("duplicate tile_id \"" + id + "\""), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Hashing. fnv1a64 is the fixed, platform-stable hash used for feature
// hashing and seed derivation; sha256_hex is used for content addressing.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

// SplitMix64 finalizer; derives independent seeds from (seed, stream ids).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Lowercases ASCII and splits on every non-alphanumeric character.
std::vector<std::string> tokenize_words(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed and truncates.
void write_file(const std::filesystem::path& path, std::string_view content);

bool is_valid_fips(std::string_view fips);

/// Uniform double in [0, 1) built from the top 53 bits; platform-stable
/// unlike std::uniform_real_distribution.
template <typename Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on uniform01.
template <typename Rng>
double standard_normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace satvl

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "univcd/config.hpp"
#include "univcd/core.hpp"
#include "univcd/encoders.hpp"

namespace testing_util {

inline univcd::Raster random_raster(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  univcd::Raster r(h, w, c);
  for (double& v : r.values()) v = u(rng);
  return r;
}

inline univcd::BinaryMask random_mask(int h, int w, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  univcd::BinaryMask m(h, w);
  for (auto& v : m.values()) v = b(rng) ? 1 : 0;
  return m;
}

// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("univcd-test-" + std::to_string(rd()) + "-" + std::to_string(++counter));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Small geometry that keeps unit tests fast.
inline univcd::SpatialEncoderConfig small_spatial() { return {64, {4, 8, 16}, {8, 16, 32}}; }
constexpr int kSmallDsem = 16;

inline univcd::EncoderSet small_encoders(std::uint64_t seed = 7) {
  return univcd::make_toy_encoders(seed, small_spatial(), kSmallDsem);
}

inline univcd::RunConfig small_config(const std::filesystem::path& out) {
  univcd::RunConfig c;
  c.encoder.spatial = small_spatial();
  c.encoder.d_sem = kSmallDsem;
  c.encoder.window = 32;
  c.detect.config.tile = 64;
  c.output_dir = out.string();
  return c;
}

}  // namespace testing_util

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "tse/scene.hpp"
#include "tse/waveform.hpp"

namespace tse::testing {

inline Eigen::VectorXd gaussian(Eigen::Index n, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Waveform noise(Eigen::Index n, std::uint64_t seed, double sigma = 1.0, int sr = kDefaultSampleRate) {
  return Waveform(gaussian(n, seed, sigma), sr);
}

inline Waveform sine(Eigen::Index n, double freq_hz, double amplitude = 0.5, int sr = kDefaultSampleRate) {
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = amplitude * std::sin(2.0 * M_PI * freq_hz * k / sr);
  return Waveform(v, sr);
}

/// Zero-mean, mutually orthogonal target and interference of equal energy,
/// mixed without scaling. The enrollment is unrelated noise; the leaky-linear
/// oracle never reads it.
inline MixtureScene orthogonal_scene(Eigen::Index n, std::uint64_t seed, int sr = kDefaultSampleRate) {
  Eigen::VectorXd s = gaussian(n, seed);
  Eigen::VectorXd i = gaussian(n, seed ^ 0xA5A5A5A5ull);
  s.array() -= s.mean();
  i.array() -= i.mean();
  i -= (i.dot(s) / s.squaredNorm()) * s;
  i *= s.norm() / i.norm();
  Waveform target(s, sr), interference(i, sr);
  return MixtureScene::make(Waveform(s + i, sr), noise(n, seed + 17, 0.1, sr), target, interference, 0.0);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace tse::testing

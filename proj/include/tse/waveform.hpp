#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>

#include "tse/error.hpp"

namespace tse {

inline constexpr int kDefaultSampleRate = 16000;

/// Mono sampled signal. Immutable after construction; the constructor enforces
/// non-empty, all-finite samples and a positive sample rate.
template <typename Scalar>
class BasicWaveform {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicWaveform(Vector samples, int sample_rate)
      : samples_(std::move(samples)), sample_rate_(sample_rate) {
    if (samples_.size() == 0) throw ShapeError("waveform must be non-empty");
    if (sample_rate_ <= 0) throw DomainError("sample rate must be positive");
    if (!samples_.allFinite())
      throw DomainError("waveform contains NaN or Inf samples");
  }

  const Vector& samples() const noexcept { return samples_; }
  int sample_rate() const noexcept { return sample_rate_; }
  Eigen::Index size() const noexcept { return samples_.size(); }
  Scalar operator[](Eigen::Index n) const { return samples_[n]; }

  double duration_seconds() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }

  template <typename Other>
  BasicWaveform<Other> cast() const {
    return BasicWaveform<Other>(samples_.template cast<Other>(), sample_rate_);
  }

  friend bool operator==(const BasicWaveform& a, const BasicWaveform& b) {
    return a.sample_rate_ == b.sample_rate_ && a.samples_.size() == b.samples_.size() &&
           a.samples_ == b.samples_;
  }

 private:
  Vector samples_;
  int sample_rate_;
};

using Waveform = BasicWaveform<double>;
using WaveformF = BasicWaveform<float>;

template <typename Scalar>
void require_same_shape(const BasicWaveform<Scalar>& a, const BasicWaveform<Scalar>& b,
                        const char* where) {
  if (a.size() != b.size())
    throw ShapeError(std::string(where) + ": length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  if (a.sample_rate() != b.sample_rate())
    throw ShapeError(std::string(where) + ": sample-rate mismatch (" +
                     std::to_string(a.sample_rate()) + " vs " +
                     std::to_string(b.sample_rate()) + ")");
}

/// Candidate input r*x0 + (1-r)*prev. The endpoints return copies of x0 and
/// prev without arithmetic, so r = 1 reproduces the mixture bit-exactly.
template <typename Scalar>
BasicWaveform<Scalar> interpolate(const BasicWaveform<Scalar>& x0,
                                  const BasicWaveform<Scalar>& prev, double r) {
  require_same_shape(x0, prev, "interpolate");
  if (!(r >= 0.0 && r <= 1.0))
    throw DomainError("interpolate: r must lie in [0, 1], got " + std::to_string(r));
  if (r == 1.0) return x0;
  if (r == 0.0) return prev;
  // prev + r (x0 - prev) rather than r x0 + (1 - r) prev: equal inputs then
  // interpolate to themselves exactly.
  const auto rs = static_cast<Scalar>(r);
  return BasicWaveform<Scalar>(prev.samples() + rs * (x0.samples() - prev.samples()),
                               x0.sample_rate());
}

/// Euclidean distance between two equally shaped waveforms.
template <typename Scalar>
double distance(const BasicWaveform<Scalar>& a, const BasicWaveform<Scalar>& b) {
  require_same_shape(a, b, "distance");
  return static_cast<double>((a.samples() - b.samples()).norm());
}

template <typename Scalar>
double energy(const BasicWaveform<Scalar>& w) {
  return static_cast<double>(w.samples().squaredNorm());
}

}  // namespace tse

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "tse/waveform.hpp"

namespace tse {

/// Numerical floor added to the SI-SDR numerator and denominator.
inline constexpr double kSdrEpsilon = 1e-8;
/// References with less (mean-removed) energy than this are rejected.
inline constexpr double kReferenceEnergyFloor = 1e-12;

/// Scale-invariant SDR in dB over any pair of real vector expressions. Both
/// inputs are mean-centred first.
template <typename DerivedE, typename DerivedR>
double si_sdr(const Eigen::MatrixBase<DerivedE>& estimate,
              const Eigen::MatrixBase<DerivedR>& reference) {
  if (estimate.size() != reference.size())
    throw ShapeError("si_sdr: length mismatch (" + std::to_string(estimate.size()) + " vs " +
                     std::to_string(reference.size()) + ")");
  const Eigen::VectorXd est = estimate.template cast<double>();
  const Eigen::VectorXd ref_raw = reference.template cast<double>();
  const Eigen::VectorXd e = est.array() - est.mean();
  const Eigen::VectorXd r = ref_raw.array() - ref_raw.mean();
  const double ref_energy = r.squaredNorm();
  if (!(ref_energy > kReferenceEnergyFloor))
    throw DegenerateReferenceError("si_sdr: reference energy below floor");
  const double scale = e.dot(r) / ref_energy;
  const Eigen::VectorXd target = scale * r;
  const double noise_energy = (e - target).squaredNorm();
  return 10.0 * std::log10((target.squaredNorm() + kSdrEpsilon) / (noise_energy + kSdrEpsilon));
}

double si_sdr(const Waveform& estimate, const Waveform& reference);

/// si_sdr(estimate, reference) - si_sdr(mixture, reference).
double si_sdri(const Waveform& estimate, const Waveform& mixture, const Waveform& reference);

struct EmbeddingConfig {
  int n_mels = 40;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double log_floor = 1e-10;

  int dimension() const { return 2 * n_mels; }
};

/// Unit-norm spectral speaker embedding: per-band mean and standard
/// deviation of the log-mel spectrogram. This is a deterministic stand-in for
/// a neural speaker encoder; real encoders plug in as external scorers.
class SpeakerEmbedding {
 public:
  explicit SpeakerEmbedding(Eigen::VectorXd unit_vector);

  const Eigen::VectorXd& vector() const noexcept { return vector_; }
  Eigen::Index dimension() const noexcept { return vector_.size(); }
  double cosine(const SpeakerEmbedding& other) const;

 private:
  Eigen::VectorXd vector_;
};

/// Canonical direction returned for silent input.
SpeakerEmbedding silence_embedding(const EmbeddingConfig& config);

SpeakerEmbedding embed_speaker(const Waveform& w, const EmbeddingConfig& config = {});

double spk_sim(const Waveform& a, const Waveform& b, const EmbeddingConfig& config = {});

/// Mean spectral flatness over Hann frames, measured across groups of
/// `bins_per_band` adjacent FFT bins, mapped to clamp(5 - 4*SF, 1, 5).
/// Harmonic signals score near 5, noise-like signals near 1. Deterministic
/// stand-in for a neural MOS predictor.
struct QualityConfig {
  int window_size = 512;
  int hop = 128;
  int bins_per_band = 8;
};

double spectral_flatness(const Waveform& w, const QualityConfig& config = {});
double quality_proxy(const Waveform& w, const QualityConfig& config = {});

}  // namespace tse

#include "tse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "tse/spectral.hpp"

namespace tse {
namespace {

const Eigen::MatrixXd& cached_filterbank(int n_mels, int n_fft, int sample_rate) {
  thread_local std::map<std::tuple<int, int, int>, Eigen::MatrixXd> cache;
  const auto key = std::make_tuple(n_mels, n_fft, sample_rate);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, mel_filterbank(n_mels, n_fft, sample_rate)).first;
  return it->second;
}

int samples_for_ms(double ms, int sample_rate) {
  return std::max(1, static_cast<int>(std::lround(ms * sample_rate / 1000.0)));
}

}  // namespace

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  require_same_shape(estimate, reference, "si_sdr");
  return si_sdr(estimate.samples(), reference.samples());
}

double si_sdri(const Waveform& estimate, const Waveform& mixture, const Waveform& reference) {
  require_same_shape(mixture, reference, "si_sdri");
  return si_sdr(estimate, reference) - si_sdr(mixture, reference);
}

SpeakerEmbedding::SpeakerEmbedding(Eigen::VectorXd unit_vector)
    : vector_(std::move(unit_vector)) {
  if (vector_.size() == 0) throw ShapeError("speaker embedding must be non-empty");
  if (std::abs(vector_.norm() - 1.0) > 1e-6)
    throw DomainError("speaker embedding must be L2-normalised");
}

double SpeakerEmbedding::cosine(const SpeakerEmbedding& other) const {
  if (other.dimension() != dimension()) throw ShapeError("embedding dimension mismatch");
  return std::clamp(vector_.dot(other.vector_), -1.0, 1.0);
}

SpeakerEmbedding silence_embedding(const EmbeddingConfig& config) {
  // The direction silence would map to: equal log-floor means, zero spread.
  Eigen::VectorXd v = Eigen::VectorXd::Zero(config.dimension());
  v.head(config.n_mels).setConstant(-1.0 / std::sqrt(static_cast<double>(config.n_mels)));
  return SpeakerEmbedding(std::move(v));
}

SpeakerEmbedding embed_speaker(const Waveform& w, const EmbeddingConfig& config) {
  const int sr = w.sample_rate();
  const int win = samples_for_ms(config.window_ms, sr);
  const int hop = samples_for_ms(config.hop_ms, sr);
  if (w.size() < win)
    throw ShapeError("embed_speaker: input shorter than one analysis window (" +
                     std::to_string(win) + " samples)");
  const int n_fft = next_pow2(win);
  const Eigen::MatrixXd& fb = cached_filterbank(config.n_mels, n_fft, sr);
  const Eigen::VectorXd window = hann_window(win);

  const Eigen::Index frames = (w.size() - win) / hop + 1;
  Eigen::MatrixXd mel(config.n_mels, frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::VectorXd frame = w.samples().segment(f * hop, win).cwiseProduct(window);
    mel.col(f) = fb * power_spectrum(frame, n_fft);
  }
  if (!(mel.sum() > 1e-30)) return silence_embedding(config);

  const Eigen::MatrixXd log_mel = (mel.array() + config.log_floor).log().matrix();
  const Eigen::VectorXd mean = log_mel.rowwise().mean();
  const Eigen::VectorXd spread =
      ((log_mel.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();

  Eigen::VectorXd features(config.dimension());
  features << mean, spread;
  const double norm = features.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) return silence_embedding(config);
  return SpeakerEmbedding(features / norm);
}

double spk_sim(const Waveform& a, const Waveform& b, const EmbeddingConfig& config) {
  return embed_speaker(a, config).cosine(embed_speaker(b, config));
}

double spectral_flatness(const Waveform& w, const QualityConfig& config) {
  const Spectrogram spec = stft(w, config.window_size, config.hop);
  const Eigen::Index usable = spec.num_bins() - 1;  // DC excluded
  const Eigen::Index bands = std::max<Eigen::Index>(1, usable / config.bins_per_band);
  const Eigen::Index width = usable / bands;

  double total = 0.0;
  Eigen::Index counted = 0;
  Eigen::VectorXd band_power(bands);
  for (Eigen::Index f = 0; f < spec.num_frames(); ++f) {
    for (Eigen::Index b = 0; b < bands; ++b)
      band_power[b] = spec.frames.col(f).segment(1 + b * width, width).cwiseAbs2().mean();
    const double arithmetic = band_power.mean();
    if (!(arithmetic > 1e-30)) continue;
    const double floor = 1e-10 * arithmetic;
    const double geometric = std::exp((band_power.array() + floor).log().mean());
    total += std::min(1.0, geometric / (arithmetic + floor));
    ++counted;
  }
  // Silence has no spectral structure; treat it as maximally flat.
  return counted == 0 ? 1.0 : total / static_cast<double>(counted);
}

double quality_proxy(const Waveform& w, const QualityConfig& config) {
  return std::clamp(5.0 - 4.0 * spectral_flatness(w, config), 1.0, 5.0);
}

}  // namespace tse

#pragma once

#include <cstdint>
#include <optional>

#include "tse/waveform.hpp"

namespace tse {

/// A mixture together with whatever parts of its decomposition are known.
/// Synthetic scenes carry all of them; manifest entries may lack target and
/// interference.
struct MixtureScene {
  Waveform mixture;
  Waveform enrollment;
  std::optional<Waveform> target;
  std::optional<Waveform> interference;
  double snr_db = 0.0;

  /// Builds a scene and checks the shared-rate and shared-length invariants.
  static MixtureScene make(Waveform mixture, Waveform enrollment,
                           std::optional<Waveform> target = std::nullopt,
                           std::optional<Waveform> interference = std::nullopt,
                           double snr_db = 0.0);

  bool has_target() const { return target.has_value(); }
  bool has_decomposition() const { return target.has_value() && interference.has_value(); }
};

/// Parameters of one synthetic "speaker": a harmonic source with a speaker
/// specific pitch and formant envelope, amplitude-modulated at syllabic rate.
struct SpeakerTemplate {
  double f0_hz = 120.0;
  double formant_hz[3] = {500.0, 1500.0, 2500.0};
  double bandwidth_hz[3] = {80.0, 100.0, 140.0};
  double tilt = 0.6;
  double syllable_rate_hz = 4.0;
  double vibrato_depth = 0.04;
};

struct SynthesisOptions {
  /// Gram-Schmidt the interference against the target, which the
  /// leaky-linear oracle requires.
  bool orthogonalize = true;
  /// RMS level of the target and the enrollment.
  double target_rms = 0.1;
  /// Enrollment duration; non-positive means "same as the mixture".
  double enrollment_seconds = 0.0;
};

SpeakerTemplate draw_speaker_template(std::uint64_t seed);

/// Renders one utterance of the template; `seed` picks the realisation
/// (phases, pitch contour, modulation phase). Output is zero-mean.
Waveform render_utterance(const SpeakerTemplate& speaker, std::uint64_t seed,
                          Eigen::Index length, int sample_rate);

/// Deterministic two-speaker scene: target and interference come from two
/// distinct templates drawn from `seed`, the interference is scaled so that
/// 10*log10(|s|^2/|i|^2) == snr_db, and the enrollment is a fresh utterance
/// of the target template.
MixtureScene synthesize_scene(std::uint64_t seed, double duration_seconds,
                              int sample_rate = kDefaultSampleRate, double snr_db = 0.0,
                              const SynthesisOptions& options = {});

/// Per-scene mixture SNR, Normal(mean_db, std_db), seeded by (seed, index).
double draw_snr_db(std::uint64_t seed, std::uint64_t index, double mean_db, double std_db);

}  // namespace tse

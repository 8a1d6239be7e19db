#include "tse/scene.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace tse {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double envelope(const SpeakerTemplate& sp, double hz) {
  static constexpr double kWeights[3] = {1.0, 0.7, 0.45};
  double a = 0.02;
  for (int j = 0; j < 3; ++j) {
    const double d = (hz - sp.formant_hz[j]) / sp.bandwidth_hz[j];
    a += kWeights[j] / (1.0 + d * d);
  }
  return a * std::pow(1.0 + hz / 500.0, -sp.tilt);
}

Eigen::VectorXd zero_mean(Eigen::VectorXd v) {
  v.array() -= v.mean();
  return v;
}

constexpr std::uint64_t kTargetStream = 1;
constexpr std::uint64_t kInterferenceStream = 2;
constexpr std::uint64_t kUtteranceStream = 3;
constexpr std::uint64_t kSnrStream = 4;

}  // namespace

MixtureScene MixtureScene::make(Waveform mixture, Waveform enrollment,
                                std::optional<Waveform> target,
                                std::optional<Waveform> interference, double snr_db) {
  if (enrollment.sample_rate() != mixture.sample_rate())
    throw ShapeError("scene: enrollment sample rate differs from mixture");
  if (target) require_same_shape(*target, mixture, "scene target");
  if (interference) require_same_shape(*interference, mixture, "scene interference");
  return MixtureScene{std::move(mixture), std::move(enrollment), std::move(target),
                      std::move(interference), snr_db};
}

SpeakerTemplate draw_speaker_template(std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  SpeakerTemplate sp;
  sp.f0_hz = std::exp(uniform(rng, std::log(85.0), std::log(260.0)));
  sp.formant_hz[0] = uniform(rng, 300.0, 900.0);
  sp.formant_hz[1] = uniform(rng, 950.0, 2300.0);
  sp.formant_hz[2] = uniform(rng, 2400.0, 3600.0);
  sp.bandwidth_hz[0] = uniform(rng, 50.0, 110.0);
  sp.bandwidth_hz[1] = uniform(rng, 70.0, 150.0);
  sp.bandwidth_hz[2] = uniform(rng, 100.0, 220.0);
  sp.tilt = uniform(rng, 0.3, 1.2);
  sp.syllable_rate_hz = uniform(rng, 3.0, 6.0);
  sp.vibrato_depth = uniform(rng, 0.02, 0.07);
  return sp;
}

Waveform render_utterance(const SpeakerTemplate& sp, std::uint64_t seed, Eigen::Index length,
                          int sample_rate) {
  auto rng = make_rng(seed, kUtteranceStream);
  const double two_pi = 2.0 * std::numbers::pi;
  const double glide = uniform(rng, -0.06, 0.06);
  const double vib_rate = uniform(rng, 0.4, 1.5);
  const double vib_phase = uniform(rng, 0.0, two_pi);
  const double am_phase = uniform(rng, 0.0, two_pi);
  const double duration = static_cast<double>(length) / sample_rate;

  Eigen::VectorXd f0(length);
  Eigen::VectorXd phase(length);
  Eigen::VectorXd am(length);
  double acc = uniform(rng, 0.0, two_pi);
  for (Eigen::Index n = 0; n < length; ++n) {
    const double t = static_cast<double>(n) / sample_rate;
    f0[n] = sp.f0_hz * (1.0 + glide * (t / duration - 0.5)) *
            (1.0 + sp.vibrato_depth * std::sin(two_pi * vib_rate * t + vib_phase));
    acc += two_pi * f0[n] / sample_rate;
    phase[n] = acc;
    const double syl = 0.5 * (1.0 - std::cos(two_pi * sp.syllable_rate_hz * t + am_phase));
    am[n] = 0.15 + 0.85 * syl;
  }

  const double f0_max = f0.maxCoeff();
  const int harmonics = std::max(1, static_cast<int>(0.45 * sample_rate / f0_max));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(length);
  // The envelope moves slowly; refresh it at a 32-sample control rate.
  constexpr Eigen::Index kControl = 32;
  for (int h = 1; h <= harmonics; ++h) {
    const double offset = uniform(rng, 0.0, two_pi);
    double gain = 0.0;
    for (Eigen::Index n = 0; n < length; ++n) {
      if (n % kControl == 0) gain = envelope(sp, h * f0[n]);
      out[n] += gain * std::sin(h * phase[n] + offset);
    }
  }
  out = out.cwiseProduct(am);
  return Waveform(zero_mean(std::move(out)), sample_rate);
}

MixtureScene synthesize_scene(std::uint64_t seed, double duration_seconds, int sample_rate,
                              double snr_db, const SynthesisOptions& options) {
  if (!(duration_seconds >= 0.5)) throw DomainError("synthesize_scene: duration must be >= 0.5 s");
  if (sample_rate <= 0) throw DomainError("synthesize_scene: sample rate must be positive");
  const auto length = static_cast<Eigen::Index>(std::llround(duration_seconds * sample_rate));

  auto seeds = make_rng(seed, kTargetStream);
  const SpeakerTemplate target_sp = draw_speaker_template(seeds());
  SpeakerTemplate interf_sp = draw_speaker_template(seeds());
  // Distinct speakers: at least ~16% apart in pitch.
  while (std::abs(std::log(interf_sp.f0_hz / target_sp.f0_hz)) < 0.15)
    interf_sp = draw_speaker_template(seeds());

  auto utterances = make_rng(seed, kInterferenceStream);
  Eigen::VectorXd s = render_utterance(target_sp, utterances(), length, sample_rate).samples();
  Eigen::VectorXd i = render_utterance(interf_sp, utterances(), length, sample_rate).samples();

  const Eigen::Index enroll_length =
      options.enrollment_seconds > 0
          ? static_cast<Eigen::Index>(std::llround(options.enrollment_seconds * sample_rate))
          : length;
  Eigen::VectorXd e = render_utterance(target_sp, utterances(), enroll_length, sample_rate).samples();

  s *= options.target_rms / std::sqrt(s.squaredNorm() / static_cast<double>(length));
  e *= options.target_rms / std::sqrt(e.squaredNorm() / static_cast<double>(enroll_length));
  if (options.orthogonalize) i -= (i.dot(s) / s.squaredNorm()) * s;
  i *= std::sqrt(s.squaredNorm() * std::pow(10.0, -snr_db / 10.0) / i.squaredNorm());

  Eigen::VectorXd x = s + i;
  return MixtureScene::make(Waveform(std::move(x), sample_rate), Waveform(std::move(e), sample_rate),
                            Waveform(std::move(s), sample_rate),
                            Waveform(std::move(i), sample_rate), snr_db);
}

double draw_snr_db(std::uint64_t seed, std::uint64_t index, double mean_db, double std_db) {
  if (std_db < 0) throw DomainError("draw_snr_db: standard deviation must be non-negative");
  auto rng = make_rng(seed, kSnrStream, index);
  if (std_db == 0) return mean_db;
  return std::normal_distribution<double>(mean_db, std_db)(rng);
}

}  // namespace tse

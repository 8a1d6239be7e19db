#include <gtest/gtest.h>

#include <random>

#include "support/test_util.hpp"
#include "tse/error.hpp"
#include "tse/extractors.hpp"
#include "tse/metrics.hpp"
#include "tse/scene.hpp"

using namespace tse;
using tse::testing::noise;
using tse::testing::orthogonal_scene;

namespace {

Waveform combo(const MixtureScene& scene, double a, double b) {
  return Waveform(a * scene.target->samples() + b * scene.interference->samples(), scene.mixture.sample_rate());
}

double max_abs_diff(const Waveform& x, const Waveform& y) {
  return (x.samples() - y.samples()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Identity, ReturnsInputBitExactly) {
  const auto id = make_identity();
  const Waveform x = noise(1234, 1);
  EXPECT_EQ(id->extract(x, noise(500, 2)), x);
  EXPECT_EQ(id->condition(noise(500, 2))(x), x);
  EXPECT_EQ(id->kind(), ExtractorKind::identity);
  EXPECT_TRUE(id->concurrent_safe());
}

TEST(LeakyLinear, FirstApplicationHalvesInterference) {
  const MixtureScene scene = orthogonal_scene(8000, 1);
  const auto leaky = make_leaky_linear(scene, 0.5);
  const Waveform out = leaky->extract(scene.mixture, scene.enrollment);
  EXPECT_LE(max_abs_diff(out, combo(scene, 1.0, 0.5)), 1e-6);
  const Waveform again = leaky->extract(out, scene.enrollment);
  EXPECT_LE(max_abs_diff(again, combo(scene, 1.0, 0.25)), 1e-6);
}

TEST(LeakyLinear, ThreeZeroCoefficientStepsGiveKappaCubed) {
  const MixtureScene scene = orthogonal_scene(8000, 2);
  const auto leaky = make_leaky_linear(scene, 0.5);
  Waveform est = leaky->extract(scene.mixture, scene.enrollment);
  for (int t = 1; t <= 2; ++t) est = leaky->extract(interpolate(scene.mixture, est, 0.0), scene.enrollment);
  EXPECT_LE(max_abs_diff(est, combo(scene, 1.0, 0.125)), 1e-6);
}

TEST(LeakyLinear, ContractsAnyInterferenceCoefficient) {
  const MixtureScene scene = orthogonal_scene(4000, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (double kappa : {0.1, 0.5, 0.9}) {
    const auto leaky = make_leaky_linear(scene, kappa);
    for (int k = 0; k < 50; ++k) {
      const double a = coef(rng), b = coef(rng);
      const Waveform out = leaky->extract(combo(scene, a, b), scene.enrollment);
      const Eigen::VectorXd& i = scene.interference->samples();
      const Eigen::VectorXd& s = scene.target->samples();
      const double b_out = out.samples().dot(i) / i.squaredNorm();
      const double a_out = out.samples().dot(s) / s.squaredNorm();
      EXPECT_NEAR(b_out, kappa * b, 1e-9 * std::max(1.0, std::abs(kappa * b)));
      EXPECT_NEAR(a_out, a, 1e-9 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST(LeakyLinear, DiscardsTheResidualOutsideTheSpan) {
  const MixtureScene scene = orthogonal_scene(4000, 5);
  const auto leaky = make_leaky_linear(scene, 0.5);
  const Waveform with_noise(scene.mixture.samples() + 0.3 * noise(4000, 6).samples(), 16000);
  const Waveform out = leaky->extract(with_noise, scene.enrollment);
  const Eigen::VectorXd& s = scene.target->samples();
  const Eigen::VectorXd& i = scene.interference->samples();
  const Eigen::VectorXd span_part = (out.samples().dot(s) / s.squaredNorm()) * s +
                                    (out.samples().dot(i) / i.squaredNorm()) * i;
  EXPECT_LE((out.samples() - span_part).norm(), 1e-9 * out.samples().norm());
}

TEST(LeakyLinear, KappaOneIsIdentityOnTheSpan) {
  const MixtureScene scene = orthogonal_scene(4000, 7);
  const auto leaky = make_leaky_linear(scene, 1.0);
  const Waveform x = combo(scene, 0.3, -1.7);
  EXPECT_LE(max_abs_diff(leaky->extract(x, scene.enrollment), x), 1e-9);
}

TEST(LeakyLinear, Preconditions) {
  const MixtureScene scene = orthogonal_scene(2000, 8);
  EXPECT_THROW(make_leaky_linear(scene, 0.0), DomainError);
  EXPECT_THROW(make_leaky_linear(scene, 1.5), DomainError);
  const Waveform s = *scene.target;
  const Waveform i(scene.interference->samples() + 0.1 * s.samples(), 16000);
  const auto skewed = MixtureScene::make(Waveform(s.samples() + i.samples(), 16000), scene.enrollment, s, i);
  EXPECT_THROW(make_leaky_linear(skewed, 0.5), PreconditionError);
  const auto partial = MixtureScene::make(scene.mixture, scene.enrollment, s);
  EXPECT_THROW(make_leaky_linear(partial, 0.5), PreconditionError);
  const auto leaky = make_leaky_linear(scene, 0.5);
  EXPECT_THROW(leaky->extract(noise(1999, 1), scene.enrollment), ShapeError);
}

TEST(SpectralSubtraction, MatchingEnrollmentLeavesInputAlmostUnchanged) {
  const SpeakerTemplate sp = draw_speaker_template(12);
  const Waveform x = render_utterance(sp, 1, 16000, 16000);
  const auto ss = make_spectral_subtraction(0.1);
  const Waveform out = ss->extract(x, x);
  EXPECT_LT((out.samples() - x.samples()).norm() / x.samples().norm(), 0.1);
}

TEST(SpectralSubtraction, PreservesLengthAndIsDeterministic) {
  const auto ss = make_spectral_subtraction(0.2);
  const MixtureScene scene = synthesize_scene(3, 0.5);
  for (Eigen::Index n : {512, 777, 4000, 8001}) {
    const Waveform x(scene.mixture.samples().head(n), 16000);
    const Waveform out = ss->extract(x, scene.enrollment);
    EXPECT_EQ(out.size(), n);
    EXPECT_EQ(out, ss->extract(x, scene.enrollment));
    EXPECT_EQ(out, ss->condition(scene.enrollment)(x));
  }
}

TEST(SpectralSubtraction, FloorRange) {
  EXPECT_THROW(make_spectral_subtraction(1.0), DomainError);
  EXPECT_THROW(make_spectral_subtraction(-0.1), DomainError);
  EXPECT_NO_THROW(make_spectral_subtraction(0.0));
}

TEST(SpectralSubtraction, RateMismatchIsAShapeError) {
  const auto ss = make_spectral_subtraction(0.1);
  EXPECT_THROW(ss->extract(noise(4000, 1, 1.0, 16000), noise(4000, 2, 1.0, 8000)), ShapeError);
}

TEST(SpectralSubtraction, SuppressesTheInterferer) {
  // Averaged over scenes, masking toward the enrollment should help.
  const auto ss = make_spectral_subtraction(0.1);
  double gain = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MixtureScene scene = synthesize_scene(seed, 1.0);
    gain += si_sdri(ss->extract(scene.mixture, scene.enrollment), scene.mixture, *scene.target);
  }
  EXPECT_GT(gain / 10, 0.0);
}

TEST(Scene, SnrScalingContract) {
  for (double snr : {0.0, 5.0, -3.6}) {
    const MixtureScene scene = synthesize_scene(4, 0.5, 16000, snr);
    const double ratio = energy(*scene.target) / energy(*scene.interference);
    EXPECT_NEAR(ratio, std::pow(10.0, snr / 10.0), 1e-6 * std::pow(10.0, snr / 10.0));
    EXPECT_EQ(scene.snr_db, snr);
  }
}

TEST(Scene, MixtureIsTargetPlusInterference) {
  const MixtureScene scene = synthesize_scene(5, 0.75);
  const Eigen::VectorXd sum = scene.target->samples() + scene.interference->samples();
  EXPECT_LE((scene.mixture.samples() - sum).cwiseAbs().maxCoeff(), 1e-6);
  const Eigen::VectorXd& s = scene.target->samples();
  const Eigen::VectorXd& i = scene.interference->samples();
  EXPECT_LT(std::abs(s.dot(i)) / (s.norm() * i.norm()), 1e-6);
  EXPECT_EQ(scene.mixture.size(), 12000);
  EXPECT_EQ(scene.enrollment.sample_rate(), 16000);
}

TEST(Scene, SameSeedIsBitIdentical) {
  const MixtureScene a = synthesize_scene(6, 0.5, 16000, 1.5);
  const MixtureScene b = synthesize_scene(6, 0.5, 16000, 1.5);
  EXPECT_EQ(a.mixture, b.mixture);
  EXPECT_EQ(a.enrollment, b.enrollment);
  EXPECT_EQ(*a.target, *b.target);
  EXPECT_EQ(*a.interference, *b.interference);
  EXPECT_FALSE(a.mixture == synthesize_scene(7, 0.5, 16000, 1.5).mixture);
}

TEST(Scene, EnrollmentResemblesTheTargetSpeaker) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const MixtureScene scene = synthesize_scene(seed, 0.5);
    if (spk_sim(scene.enrollment, *scene.target) > spk_sim(scene.enrollment, *scene.interference)) ++wins;
  }
  EXPECT_GE(wins, 190) << wins << "/200";
}

TEST(Scene, ShortDurationIsADomainError) {
  EXPECT_THROW(synthesize_scene(1, 0.49), DomainError);
  EXPECT_THROW(synthesize_scene(1, 0.0), DomainError);
}

TEST(Scene, SnrDrawsFollowTheRequestedNormal) {
  double sum = 0.0, sq = 0.0;
  const int n = 10000;
  for (int j = 0; j < n; ++j) {
    const double v = draw_snr_db(123, static_cast<std::uint64_t>(j), 0.0, 3.6);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.1);
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 3.6, 0.1);
  EXPECT_EQ(draw_snr_db(1, 2, 0.0, 3.6), draw_snr_db(1, 2, 0.0, 3.6));
  EXPECT_THROW(draw_snr_db(1, 2, 0.0, -1.0), DomainError);
}

TEST(Scene, MakeValidatesShapes) {
  const Waveform a = noise(100, 1), b = noise(101, 2);
  EXPECT_THROW(MixtureScene::make(a, noise(50, 3), b), ShapeError);
  EXPECT_THROW(MixtureScene::make(a, noise(50, 3, 1.0, 8000)), ShapeError);
  EXPECT_NO_THROW(MixtureScene::make(a, noise(50, 3)));
}

#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tse/metrics.hpp"
#include "tse/scene.hpp"
#include "tse/waveform.hpp"

namespace tse {

class WorkerProcess;

enum class ExtractorKind { identity, leaky_linear, spectral_subtraction, external };

std::string to_string(ExtractorKind kind);

/// Extraction with the enrollment fixed. Enrollment-dependent state is
/// computed once when the function is built.
using ConditionedExtractor = std::function<Waveform(const Waveform& input)>;

/// A frozen target-speaker extractor f(x, e). Implementations are
/// deterministic and length-preserving.
class Extractor {
 public:
  virtual ~Extractor() = default;

  virtual ExtractorKind kind() const = 0;
  /// True when extract() may be called from several threads at once.
  virtual bool concurrent_safe() const { return true; }
  virtual Waveform extract(const Waveform& input, const Waveform& enrollment) const = 0;
  virtual ConditionedExtractor condition(const Waveform& enrollment) const;
};

using ExtractorHandle = std::shared_ptr<const Extractor>;

Waveform extract(const Extractor& extractor, const Waveform& input, const Waveform& enrollment);

ExtractorHandle make_identity();

/// Analytic oracle built from a scene with orthogonal target s and
/// interference i: input u = a*s + b*i + residual maps to a*s + kappa*b*i.
/// kappa = 1 is the identity on span{s, i}.
ExtractorHandle make_leaky_linear(const MixtureScene& scene, double kappa);

struct SpectralSubtractionConfig {
  double floor = 0.1;
  int window_size = 512;
  int hop = 128;
  int n_mels = 40;
  /// Half-width, in mel bands, of the neighbourhood whose envelope shape is
  /// compared against the enrollment when computing a band's gain.
  int neighbourhood = 3;
};

/// Classical enrollment-informed soft mask: each mel band's gain is the
/// positive cosine similarity between the frame's local mel envelope and the
/// enrollment's mean envelope, floored at `floor`.
ExtractorHandle make_spectral_subtraction(double floor);
ExtractorHandle make_spectral_subtraction(const SpectralSubtractionConfig& config);

/// Extractor served by an external worker process.
ExtractorHandle make_external(std::vector<std::string> command,
                              std::chrono::milliseconds timeout = std::chrono::seconds(60));

}  // namespace tse

#include "tse/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace tse {
namespace {

// Eigen::FFT caches plans internally and is not safe to share across threads.
Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

void check_frame_params(int window_size, int hop) {
  if (hop <= 0 || window_size < hop)
    throw DomainError("stft: need window_size >= hop > 0");
}

Spectrogram analyse(const Eigen::VectorXd& padded, int window_size, int hop, int sample_rate,
                    Eigen::Index front, Eigen::Index length) {
  const Eigen::Index count = (padded.size() - window_size) / hop + 1;
  const Eigen::VectorXd window = hann_window(window_size);
  const Eigen::Index bins = window_size / 2 + 1;

  Spectrogram spec;
  spec.frames.resize(bins, count);
  spec.window_size = window_size;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.front_padding = front;
  spec.signal_length = length;

  auto& fft = thread_fft();
  std::vector<double> in(window_size);
  std::vector<std::complex<double>> out;
  for (Eigen::Index f = 0; f < count; ++f) {
    for (int n = 0; n < window_size; ++n) in[n] = padded[f * hop + n] * window[n];
    fft.fwd(out, in);
    for (Eigen::Index b = 0; b < bins; ++b) spec.frames(b, f) = out[b];
  }
  return spec;
}

}  // namespace

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

Eigen::VectorXd hann_window(int size) {
  Eigen::VectorXd w(size);
  for (int n = 0; n < size; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / size);
  return w;
}

Spectrogram stft(const Waveform& w, int window_size, int hop) {
  check_frame_params(window_size, hop);
  if (window_size > w.size())
    throw ShapeError("stft: window of " + std::to_string(window_size) +
                     " samples exceeds signal length " + std::to_string(w.size()));
  return analyse(w.samples(), window_size, hop, w.sample_rate(), 0, w.size());
}

Spectrogram stft_padded(const Waveform& w, int window_size, int hop) {
  check_frame_params(window_size, hop);
  const Eigen::Index front = window_size - hop;
  const Eigen::Index covered = front + w.size();
  // Smallest frame count whose last window ends at or after covered + front.
  const Eigen::Index needed = covered + front;
  const Eigen::Index count =
      needed <= window_size ? 1 : (needed - window_size + hop - 1) / hop + 1;
  const Eigen::Index total = (count - 1) * hop + window_size;
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(total);
  padded.segment(front, w.size()) = w.samples();
  return analyse(padded, window_size, hop, w.sample_rate(), front, w.size());
}

Waveform overlap_add(const Spectrogram& spec) {
  const int W = spec.window_size;
  const int H = spec.hop;
  const Eigen::Index count = spec.num_frames();
  const Eigen::Index total = (count - 1) * H + W;
  const Eigen::VectorXd window = hann_window(W);

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(total);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(total);
  auto& fft = thread_fft();
  std::vector<std::complex<double>> full(W);
  std::vector<double> frame;
  for (Eigen::Index f = 0; f < count; ++f) {
    for (Eigen::Index b = 0; b < spec.num_bins(); ++b) full[b] = spec.frames(b, f);
    for (Eigen::Index b = spec.num_bins(); b < W; ++b) full[b] = std::conj(full[W - b]);
    fft.inv(frame, full);
    for (int n = 0; n < W; ++n) {
      acc[f * H + n] += frame[n] * window[n];
      norm[f * H + n] += window[n] * window[n];
    }
  }
  Eigen::VectorXd out(spec.signal_length);
  for (Eigen::Index n = 0; n < spec.signal_length; ++n) {
    const Eigen::Index src = n + spec.front_padding;
    out[n] = norm[src] > 1e-10 ? acc[src] / norm[src] : 0.0;
  }
  return Waveform(std::move(out), spec.sample_rate);
}

Eigen::VectorXd power_spectrum(const Eigen::Ref<const Eigen::VectorXd>& frame, int n_fft) {
  std::vector<double> in(n_fft, 0.0);
  const Eigen::Index n = std::min<Eigen::Index>(frame.size(), n_fft);
  for (Eigen::Index k = 0; k < n; ++k) in[k] = frame[k];
  std::vector<std::complex<double>> out;
  thread_fft().fwd(out, in);
  Eigen::VectorXd p(n_fft / 2 + 1);
  for (int b = 0; b <= n_fft / 2; ++b) p[b] = std::norm(out[b]);
  return p;
}

Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_min,
                               double f_max) {
  if (f_max <= 0) f_max = sample_rate / 2.0;
  auto to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };

  const double lo = to_mel(f_min);
  const double hi = to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (int m = 0; m < n_mels + 2; ++m) edges[m] = to_hz(lo + (hi - lo) * m / (n_mels + 1));

  const int bins = n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double hz = static_cast<double>(b) * sample_rate / n_fft;
      if (hz > left && hz < right) {
        fb(m, b) = hz <= centre ? (hz - left) / (centre - left) : (right - hz) / (right - centre);
      }
    }
    // Filters narrower than the bin spacing would otherwise be empty.
    if (fb.row(m).sum() == 0.0) {
      const int nearest = std::clamp(static_cast<int>(std::lround(centre * n_fft / sample_rate)),
                                     0, bins - 1);
      fb(m, nearest) = 1.0;
    }
  }
  return fb;
}

}  // namespace tse

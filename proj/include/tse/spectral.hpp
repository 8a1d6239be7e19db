#pragma once

#include <Eigen/Core>

#include "tse/waveform.hpp"

namespace tse {

inline constexpr int kDefaultWindow = 512;
inline constexpr int kDefaultHop = 128;

/// One-sided short-time spectrum. `frames` is (window_size/2 + 1) x num_frames.
/// `front_padding` is the number of zeros prepended before analysis (zero
/// for plain stft, window_size - hop for the padded analysis used by
/// resynthesis).
struct Spectrogram {
  Eigen::MatrixXcd frames;
  int window_size = 0;
  int hop = 0;
  int sample_rate = 0;
  Eigen::Index front_padding = 0;
  Eigen::Index signal_length = 0;

  Eigen::Index num_bins() const { return frames.rows(); }
  Eigen::Index num_frames() const { return frames.cols(); }
  Eigen::MatrixXd power() const { return frames.cwiseAbs2(); }
};

/// Periodic Hann window of the given length.
Eigen::VectorXd hann_window(int size);

/// Frames floor((L - W) / H) + 1 full windows; no padding.
Spectrogram stft(const Waveform& w, int window_size = kDefaultWindow, int hop = kDefaultHop);

/// Analysis with W - H leading zeros and enough trailing zeros that every
/// input sample is covered by the same number of frames. Pair with
/// overlap_add() for length-preserving resynthesis.
Spectrogram stft_padded(const Waveform& w, int window_size = kDefaultWindow,
                        int hop = kDefaultHop);

/// Weighted overlap-add inverse of stft_padded (Hann synthesis window,
/// squared-window normalisation). Output has exactly signal_length samples.
Waveform overlap_add(const Spectrogram& spec);

/// Power spectrum magnitudes of `frame` (length n_fft, zero padded if
/// shorter), one-sided.
Eigen::VectorXd power_spectrum(const Eigen::Ref<const Eigen::VectorXd>& frame, int n_fft);

/// Triangular mel filterbank (HTK mel scale), n_mels x (n_fft/2 + 1).
Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_min = 20.0,
                               double f_max = -1.0);

int next_pow2(int n);

}  // namespace tse

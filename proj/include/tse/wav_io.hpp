#pragma once

#include <filesystem>

#include "tse/waveform.hpp"

namespace tse {

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or IEEE float32 samples.
/// PCM values are scaled by 1/32768; float values pass through unchanged.
template <typename Scalar = double>
BasicWaveform<Scalar> load_wav(const std::filesystem::path& path);

/// Writes a mono IEEE float32 WAV. Float waveforms round-trip bit-exactly;
/// double waveforms are rounded to float32 on the way out.
template <typename Scalar>
void save_wav(const BasicWaveform<Scalar>& w, const std::filesystem::path& path);

/// Writes mono 16-bit PCM, rounding to the nearest step of 1/32768 and
/// saturating at the rails.
void save_wav_pcm16(const Waveform& w, const std::filesystem::path& path);

}  // namespace tse

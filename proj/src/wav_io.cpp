#include "tse/wav_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace tse {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::vector<unsigned char> header(std::uint16_t format, std::uint16_t bits, int sample_rate,
                                  std::uint32_t data_bytes) {
  std::vector<unsigned char> out;
  out.reserve(44);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace

template <typename Scalar>
BasicWaveform<Scalar> load_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                         std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(name + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Some writers leave the data size unset when streaming; accept the tail.
      if (std::memcmp(chunk, "data", 4) != 0) throw FormatError(name + ": truncated chunk");
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw FormatError(name + ": fmt chunk too short");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      sample_rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (avail < 40) throw FormatError(name + ": extensible fmt chunk too short");
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw FormatError(name + ": missing fmt chunk");
  if (data == nullptr) throw FormatError(name + ": missing data chunk");
  if (channels != 1)
    throw UnsupportedChannelsError(name + ": expected mono, got " + std::to_string(channels) +
                                   " channels");
  if (sample_rate == 0) throw FormatError(name + ": zero sample rate");

  typename BasicWaveform<Scalar>::Vector samples;
  if (format == kFormatPcm && bits == 16) {
    const auto n = static_cast<Eigen::Index>(data_size / 2);
    samples.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * k));
      samples[k] = static_cast<Scalar>(static_cast<double>(raw) / 32768.0);
    }
  } else if (format == kFormatFloat && bits == 32) {
    const auto n = static_cast<Eigen::Index>(data_size / 4);
    samples.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const float v = std::bit_cast<float>(read_u32(data + 4 * k));
      samples[k] = static_cast<Scalar>(v);
    }
  } else {
    throw UnsupportedEncodingError(name + ": unsupported encoding (format " +
                                   std::to_string(format) + ", " + std::to_string(bits) +
                                   " bits)");
  }
  if (samples.size() == 0) throw FormatError(name + ": no samples");
  return BasicWaveform<Scalar>(std::move(samples), static_cast<int>(sample_rate));
}

template <typename Scalar>
void save_wav(const BasicWaveform<Scalar>& w, const std::filesystem::path& path) {
  const auto n = static_cast<std::uint32_t>(w.size());
  auto bytes = header(kFormatFloat, 32, w.sample_rate(), n * 4);
  bytes.reserve(bytes.size() + n * 4);
  for (Eigen::Index k = 0; k < w.size(); ++k)
    put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(w[k])));
  write_file(path, bytes);
}

void save_wav_pcm16(const Waveform& w, const std::filesystem::path& path) {
  const auto n = static_cast<std::uint32_t>(w.size());
  auto bytes = header(kFormatPcm, 16, w.sample_rate(), n * 2);
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double scaled = std::nearbyint(w[k] * 32768.0);
    const double clipped = std::clamp(scaled, -32768.0, 32767.0);
    put_u16(bytes, static_cast<std::uint16_t>(static_cast<std::int16_t>(clipped)));
  }
  write_file(path, bytes);
}

template BasicWaveform<double> load_wav<double>(const std::filesystem::path&);
template BasicWaveform<float> load_wav<float>(const std::filesystem::path&);
template void save_wav<double>(const BasicWaveform<double>&, const std::filesystem::path&);
template void save_wav<float>(const BasicWaveform<float>&, const std::filesystem::path&);

}  // namespace tse

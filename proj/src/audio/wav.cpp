#include "uapforge/audio/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uapforge/error.hpp"

namespace uapforge::audio {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

std::int16_t quantize_sample(double v) {
  const double scaled = std::nearbyint(v * 32768.0);
  if (scaled > 32767.0) return 32767;
  if (scaled < -32768.0) return -32768;
  return static_cast<std::int16_t>(scaled);
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw FormatError(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError(where + "fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      const std::uint16_t format = read_u16(f);
      const std::uint16_t channels = read_u16(f + 2);
      const std::uint32_t rate = read_u32(f + 4);
      const std::uint16_t bits = read_u16(f + 14);
      if (format != 1) {
        throw FormatError(where + "expected PCM format, got format tag " + std::to_string(format));
      }
      if (channels != 1) {
        throw FormatError(where + "expected mono, got " + std::to_string(channels) + " channels");
      }
      if (bits != 16) {
        throw FormatError(where + "expected 16-bit samples, got " + std::to_string(bits) + "-bit");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw FormatError(where + "expected " + std::to_string(kSampleRate) +
                          " Hz sample rate, got " + std::to_string(rate) + " Hz");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw FormatError(where + "missing fmt chunk");
  if (!data) throw FormatError(where + "missing data chunk");
  if (data_len % 2 != 0) throw FormatError(where + "odd data length for 16-bit samples");

  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.source = path.string();
  clip.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
    clip.samples[i] = static_cast<double>(raw) / 32768.0;
  }
  return clip;
}

void write_wav(std::span<const double> samples, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i] >= -1.0 && samples[i] <= 1.0)) {
      throw std::invalid_argument("write_wav: sample " + std::to_string(i) + " = " +
                                  std::to_string(samples[i]) + " outside [-1, 1]");
    }
  }
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_len);
  for (double v : samples) put_u16(out, static_cast<std::uint16_t>(quantize_sample(v)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate != kSampleRate) {
    throw std::invalid_argument("write_wav: clip sample rate " + std::to_string(clip.sample_rate) +
                                " Hz, expected " + std::to_string(kSampleRate));
  }
  write_wav(clip.samples, path);
}

}  // namespace uapforge::audio

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "uapforge/audio/clip.hpp"

namespace uapforge::audio {

// RIFF/WAVE, PCM 16-bit little-endian, mono, 16000 Hz. Anything else is
// rejected with a FormatError naming the offending property. Samples map as
// int16 / 32768.
AudioClip read_wav(const std::filesystem::path& path);

// Quantizes with round-to-nearest and saturation at the int16 limits.
// Throws std::invalid_argument for samples outside [-1, 1] and IoError when
// the file cannot be written.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);
void write_wav(std::span<const double> samples, const std::filesystem::path& path);

std::int16_t quantize_sample(double v);

}  // namespace uapforge::audio

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace uapforge::audio {

inline constexpr int kSampleRate = 16000;

// Mono waveform with provenance. Samples live in [-1, 1] once they have been
// through normalization or clamping.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  std::optional<std::string> speaker_id;
  std::optional<std::string> source;
  // Set by repeat_pad. Evaluation refuses clips carrying it.
  bool repeat_padded = false;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

inline std::size_t seconds_to_samples(double seconds, int sample_rate = kSampleRate) {
  return static_cast<std::size_t>(seconds * sample_rate + 0.5);
}

}  // namespace uapforge::audio

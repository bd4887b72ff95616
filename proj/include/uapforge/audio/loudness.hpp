#pragma once

#include <array>
#include <limits>

#include "uapforge/audio/clip.hpp"

namespace uapforge::audio {

// Normalized biquad: y = b0 x + b1 x1 + b2 x2 - a1 y1 - a2 y2.
struct Biquad {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

// BS.1770 K-weighting: high-shelf stage followed by the RLB high-pass.
struct KWeighting {
  Biquad shelf;
  Biquad highpass;
};

// Bilinear-transform realization of the analog K-weighting prototypes at
// the given rate. At 48 kHz this reproduces the tabulated coefficients.
KWeighting k_weighting(double sample_rate);

inline constexpr double kSilenceLufs = -std::numeric_limits<double>::infinity();

struct LoudnessStats {
  // Gated integrated loudness; kSilenceLufs when every block is gated out.
  double integrated_lufs = kSilenceLufs;
  double l2_norm = 0.0;
  double duration_s = 0.0;
};

// Integrated loudness with 400 ms blocks at 75 % overlap, a -70 LUFS absolute
// gate and a -10 LU relative gate. Throws std::invalid_argument for clips
// shorter than one block.
LoudnessStats measure_loudness(const AudioClip& clip);
LoudnessStats measure_loudness(const AudioClip& clip, const KWeighting& filters);

struct NormalizeResult {
  AudioClip clip;
  double gain_db = 0.0;
  // Fraction of samples clamped to [-1, 1] after the gain.
  double clamp_fraction = 0.0;
};

// Applies one gain so the measured loudness hits target_lufs, then clamps to
// [-1, 1]. Throws std::domain_error on silence.
NormalizeResult normalize_loudness(const AudioClip& clip, double target_lufs);
NormalizeResult normalize_loudness(const AudioClip& clip, double target_lufs,
                                   const KWeighting& filters);

}  // namespace uapforge::audio

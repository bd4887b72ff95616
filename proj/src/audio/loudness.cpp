#include "uapforge/audio/loudness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "uapforge/audio/signal.hpp"

namespace uapforge::audio {

namespace {

// Analog prototype parameters behind the BS.1770 48 kHz table (as used by
// libebur128). Realized with the bilinear transform, K = tan(pi f0 / fs).
//
// At fs = 16000 the resulting coefficients are
//   shelf     b = { 1.4432952235, -1.8315753813, 0.6816587574 }
//             a = { 1,            -1.1015337691, 0.3949123687 }
//   high-pass b = { 1, -2, 1 }
//             a = { 1,            -1.9702895280, 0.9705104905 }
// and at 48000 they match the tabulated values
//   shelf     b = { 1.53512485958697, -2.69169618940638, 1.19839281085285 }
//             a = { 1, -1.69065929318241, 0.73248077421585 }
//   high-pass a = { 1, -1.99004745483398, 0.99007225036621 }.
constexpr double kShelfF0 = 1681.974450955533;
constexpr double kShelfGainDb = 3.999843853973347;
constexpr double kShelfQ = 0.7071752369554196;
constexpr double kShelfVbExponent = 0.4996667741545416;
constexpr double kHighpassF0 = 38.13547087602444;
constexpr double kHighpassQ = 0.5003270373238773;

constexpr double kBlockS = 0.4;
constexpr double kHopS = 0.1;
constexpr double kAbsoluteGate = -70.0;
constexpr double kRelativeGate = -10.0;
constexpr double kOffset = -0.691;

void apply_biquad(const Biquad& f, std::vector<double>& x) {
  double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
  for (double& v : x) {
    const double y = f.b[0] * v + f.b[1] * x1 + f.b[2] * x2 - f.a[1] * y1 - f.a[2] * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

double block_loudness(double mean_square) { return kOffset + 10.0 * std::log10(mean_square); }

}  // namespace

KWeighting k_weighting(double sample_rate) {
  KWeighting kw;
  {
    const double k = std::tan(std::numbers::pi * kShelfF0 / sample_rate);
    const double vh = std::pow(10.0, kShelfGainDb / 20.0);
    const double vb = std::pow(vh, kShelfVbExponent);
    const double a0 = 1.0 + k / kShelfQ + k * k;
    kw.shelf.b = {(vh + vb * k / kShelfQ + k * k) / a0, 2.0 * (k * k - vh) / a0,
                  (vh - vb * k / kShelfQ + k * k) / a0};
    kw.shelf.a = {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / kShelfQ + k * k) / a0};
  }
  {
    const double k = std::tan(std::numbers::pi * kHighpassF0 / sample_rate);
    const double a0 = 1.0 + k / kHighpassQ + k * k;
    kw.highpass.b = {1.0, -2.0, 1.0};
    kw.highpass.a = {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / kHighpassQ + k * k) / a0};
  }
  return kw;
}

LoudnessStats measure_loudness(const AudioClip& clip) {
  static const KWeighting standard = k_weighting(kSampleRate);
  return measure_loudness(clip, clip.sample_rate == kSampleRate ? standard
                                                                : k_weighting(clip.sample_rate));
}

LoudnessStats measure_loudness(const AudioClip& clip, const KWeighting& filters) {
  const auto rate = static_cast<double>(clip.sample_rate);
  const auto block = static_cast<std::size_t>(std::llround(kBlockS * rate));
  const auto hop = static_cast<std::size_t>(std::llround(kHopS * rate));
  if (clip.samples.size() < block) {
    throw std::invalid_argument("measure_loudness: clip of " +
                                std::to_string(clip.duration_s()) +
                                " s is shorter than one 0.4 s gating block");
  }

  std::vector<double> weighted = clip.samples;
  apply_biquad(filters.shelf, weighted);
  apply_biquad(filters.highpass, weighted);

  std::vector<double> z;
  for (std::size_t start = 0; start + block <= weighted.size(); start += hop) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + block; ++i) acc += weighted[i] * weighted[i];
    z.push_back(acc / static_cast<double>(block));
  }

  auto gated_mean = [&](double threshold, bool strict) {
    double total = 0.0;
    std::size_t count = 0;
    for (double zj : z) {
      const double lj = block_loudness(zj);
      const bool pass = strict ? lj > threshold : lj >= threshold;
      if (pass && lj >= kAbsoluteGate) {
        total += zj;
        ++count;
      }
    }
    return count ? total / static_cast<double>(count) : 0.0;
  };

  LoudnessStats stats;
  stats.l2_norm = l2_norm(clip.samples);
  stats.duration_s = clip.duration_s();
  const double abs_mean = gated_mean(kAbsoluteGate, false);
  if (abs_mean <= 0.0) return stats;
  const double relative = block_loudness(abs_mean) + kRelativeGate;
  const double rel_mean = gated_mean(std::max(relative, kAbsoluteGate), true);
  if (rel_mean <= 0.0) return stats;
  stats.integrated_lufs = block_loudness(rel_mean);
  return stats;
}

NormalizeResult normalize_loudness(const AudioClip& clip, double target_lufs) {
  static const KWeighting standard = k_weighting(kSampleRate);
  return normalize_loudness(clip, target_lufs,
                            clip.sample_rate == kSampleRate ? standard
                                                            : k_weighting(clip.sample_rate));
}

NormalizeResult normalize_loudness(const AudioClip& clip, double target_lufs,
                                   const KWeighting& filters) {
  const LoudnessStats stats = measure_loudness(clip, filters);
  if (!std::isfinite(stats.integrated_lufs)) {
    throw std::domain_error("normalize_loudness: clip is silent after gating" +
                            (clip.source ? " (" + *clip.source + ")" : std::string()));
  }
  NormalizeResult result;
  result.gain_db = target_lufs - stats.integrated_lufs;
  const double gain = std::pow(10.0, result.gain_db / 20.0);
  result.clip = clip;
  std::size_t clamped = 0;
  for (double& v : result.clip.samples) {
    v *= gain;
    if (v > 1.0) {
      v = 1.0;
      ++clamped;
    } else if (v < -1.0) {
      v = -1.0;
      ++clamped;
    }
  }
  result.clamp_fraction =
      clip.samples.empty() ? 0.0
                           : static_cast<double>(clamped) / static_cast<double>(clip.samples.size());
  return result;
}

}  // namespace uapforge::audio

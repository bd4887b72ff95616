#include "uapforge/audio/signal.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace uapforge::audio {

AudioClip repeat_pad(const AudioClip& clip, std::size_t target_len) {
  const std::size_t n = clip.samples.size();
  if (n == 0) throw std::invalid_argument("repeat_pad: empty clip");
  if (target_len < n) {
    throw std::invalid_argument("repeat_pad: target " + std::to_string(target_len) +
                                " shorter than clip " + std::to_string(n) + "; truncate instead");
  }
  AudioClip out = clip;
  out.samples.resize(target_len);
  for (std::size_t i = n; i < target_len; ++i) out.samples[i] = clip.samples[i % n];
  out.repeat_padded = clip.repeat_padded || target_len > n;
  return out;
}

AudioClip truncate(const AudioClip& clip, std::size_t len) {
  if (len > clip.samples.size()) {
    throw std::invalid_argument("truncate: length " + std::to_string(len) + " exceeds clip of " +
                                std::to_string(clip.samples.size()));
  }
  AudioClip out = clip;
  out.samples.resize(len);
  return out;
}

std::vector<double> tile_patch(std::span<const double> patch, std::size_t n) {
  if (patch.empty()) throw std::invalid_argument("tile_patch: empty patch");
  if (n == 0) throw std::invalid_argument("tile_patch: zero output length");
  std::vector<double> out(n);
  const std::size_t l = patch.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = patch[i % l];
  return out;
}

double l2_norm(std::span<const double> x) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return std::sqrt(ss);
}

double snr_db(std::span<const double> reference, std::span<const double> perturbation) {
  if (reference.size() != perturbation.size()) {
    throw std::invalid_argument("snr_db: length mismatch (" + std::to_string(reference.size()) +
                                " vs " + std::to_string(perturbation.size()) + ")");
  }
  const double ref = l2_norm(reference);
  if (ref == 0.0) throw std::invalid_argument("snr_db: zero reference signal");
  const double pert = l2_norm(perturbation);
  if (pert == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(ref / pert);
}

std::vector<double> dft_magnitudes(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 2) throw std::invalid_argument("dft_magnitudes: need at least 2 samples");
  std::vector<double> mags(n / 2 + 1);
  for (std::size_t k = 0; k < mags.size(); ++k) {
    double re = 0.0;
    double im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays exact for large n.
      const double angle =
          -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      re += signal[t] * std::cos(angle);
      im += signal[t] * std::sin(angle);
    }
    mags[k] = std::hypot(re, im);
  }
  return mags;
}

}  // namespace uapforge::audio

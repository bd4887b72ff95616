#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uapforge/audio/clip.hpp"

namespace uapforge::audio {

// Cyclic repetition of the clip's own content up to exactly target_len
// samples. Throws std::invalid_argument on an empty clip or when the target
// is shorter than the clip.
AudioClip repeat_pad(const AudioClip& clip, std::size_t target_len);

// First `len` samples. Throws std::invalid_argument if len exceeds the clip.
AudioClip truncate(const AudioClip& clip, std::size_t len);

// out[i] = patch[i mod l] for i in [0, n).
std::vector<double> tile_patch(std::span<const double> patch, std::size_t n);

// 20 log10(||reference|| / ||perturbation||). A zero perturbation gives +inf;
// a zero reference or unequal lengths throw std::invalid_argument.
double snr_db(std::span<const double> reference, std::span<const double> perturbation);

// |X_k| for k = 0 .. n/2 (direct DFT, forward only).
std::vector<double> dft_magnitudes(std::span<const double> signal);

double l2_norm(std::span<const double> x);

}  // namespace uapforge::audio

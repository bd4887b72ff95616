#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "uapforge/audio/clip.hpp"

namespace uapforge::corpus {

struct Formant {
  double freq_hz = 0.0;
  double bandwidth_hz = 0.0;
};

// Parameters of one synthetic voice: a jittered harmonic source filtered by
// three cascaded formant resonators.
struct SpeakerProfile {
  std::string speaker_id;
  double f0_hz = 0.0;               // [80, 300]
  std::array<Formant, 3> formants;  // strictly increasing centre frequencies
  double jitter = 0.0;              // relative f0 wobble, [0.005, 0.03]
  double noise_mix = 0.0;           // [0, 0.3]
  std::uint64_t seed = 0;
};

// Deterministic in `seed`. An empty id becomes "spk_<seed>".
SpeakerProfile generate_speaker(std::uint64_t seed, std::string speaker_id = {});

// Throws std::invalid_argument when a parameter is outside its range.
void validate_profile(const SpeakerProfile& profile);

// Deterministic in (profile, utt_seed); peak-normalized to 0.5. duration_s
// must lie in [1, 25].
audio::AudioClip synthesize_utterance(const SpeakerProfile& profile, double duration_s,
                                      std::uint64_t utt_seed);
audio::AudioClip synthesize_samples(const SpeakerProfile& profile, std::size_t num_samples,
                                    std::uint64_t utt_seed);

}  // namespace uapforge::corpus

#include "uapforge/corpus/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "uapforge/rng.hpp"

namespace uapforge::corpus {

namespace {

constexpr double kMinF0 = 80.0;
constexpr double kMaxF0 = 300.0;
constexpr double kPeak = 0.5;
constexpr double kEnvelopeFloor = 0.12;

// Klatt-style two-pole resonator with unity gain at DC.
struct Resonator {
  double a = 0.0, b = 0.0, c = 0.0;
  double y1 = 0.0, y2 = 0.0;

  Resonator(double freq, double bandwidth, double rate) {
    const double t = 1.0 / rate;
    c = -std::exp(-2.0 * std::numbers::pi * bandwidth * t);
    b = 2.0 * std::exp(-std::numbers::pi * bandwidth * t) * std::cos(2.0 * std::numbers::pi * freq * t);
    a = 1.0 - b - c;
  }

  double operator()(double x) {
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

SpeakerProfile generate_speaker(std::uint64_t seed, std::string speaker_id) {
  Rng rng(mix_seed(seed, 0x5BEA));
  SpeakerProfile p;
  p.seed = seed;
  p.speaker_id = speaker_id.empty() ? "spk_" + std::to_string(seed) : std::move(speaker_id);
  // Log-uniform f0 spreads low and high voices evenly.
  p.f0_hz = std::exp(rng.uniform(std::log(kMinF0), std::log(kMaxF0)));
  p.formants[0] = {rng.uniform(300.0, 850.0), rng.uniform(60.0, 120.0)};
  p.formants[1] = {rng.uniform(950.0, 2300.0), rng.uniform(80.0, 160.0)};
  p.formants[2] = {rng.uniform(2450.0, 3500.0), rng.uniform(100.0, 220.0)};
  p.jitter = rng.uniform(0.005, 0.03);
  p.noise_mix = rng.uniform(0.0, 0.3);
  return p;
}

void validate_profile(const SpeakerProfile& p) {
  if (!(p.f0_hz >= kMinF0 && p.f0_hz <= kMaxF0)) {
    throw std::invalid_argument("speaker " + p.speaker_id + ": f0 outside [80, 300] Hz");
  }
  for (std::size_t i = 0; i < p.formants.size(); ++i) {
    if (!(p.formants[i].freq_hz > 0.0 && p.formants[i].bandwidth_hz > 0.0)) {
      throw std::invalid_argument("speaker " + p.speaker_id + ": non-positive formant parameter");
    }
    if (i > 0 && !(p.formants[i].freq_hz > p.formants[i - 1].freq_hz)) {
      throw std::invalid_argument("speaker " + p.speaker_id + ": formants not increasing");
    }
  }
  if (p.formants.back().freq_hz >= audio::kSampleRate / 2.0) {
    throw std::invalid_argument("speaker " + p.speaker_id + ": formant above Nyquist");
  }
  if (!(p.jitter >= 0.0 && p.jitter < 0.1)) {
    throw std::invalid_argument("speaker " + p.speaker_id + ": jitter out of range");
  }
  if (!(p.noise_mix >= 0.0 && p.noise_mix <= 0.3)) {
    throw std::invalid_argument("speaker " + p.speaker_id + ": noise_mix outside [0, 0.3]");
  }
}

audio::AudioClip synthesize_utterance(const SpeakerProfile& profile, double duration_s,
                                      std::uint64_t utt_seed) {
  if (!(duration_s >= 1.0 && duration_s <= 25.0)) {
    throw std::invalid_argument("synthesize_utterance: duration " + std::to_string(duration_s) +
                                " s outside [1, 25]");
  }
  return synthesize_samples(profile, audio::seconds_to_samples(duration_s), utt_seed);
}

audio::AudioClip synthesize_samples(const SpeakerProfile& profile, std::size_t num_samples,
                                    std::uint64_t utt_seed) {
  validate_profile(profile);
  const double rate = audio::kSampleRate;
  Rng rng(mix_seed(profile.seed, utt_seed));

  // Per-utterance variation around the speaker's voice.
  const double f0 = profile.f0_hz * (1.0 + rng.uniform(-0.04, 0.04));
  std::array<Resonator, 3> tract{
      Resonator(profile.formants[0].freq_hz * (1.0 + rng.uniform(-0.03, 0.03)),
                profile.formants[0].bandwidth_hz, rate),
      Resonator(profile.formants[1].freq_hz * (1.0 + rng.uniform(-0.03, 0.03)),
                profile.formants[1].bandwidth_hz, rate),
      Resonator(profile.formants[2].freq_hz * (1.0 + rng.uniform(-0.03, 0.03)),
                profile.formants[2].bandwidth_hz, rate)};
  const double intonation_hz = rng.uniform(0.15, 0.5);
  const double intonation_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double syllable_rate = rng.uniform(2.0, 5.0);

  std::vector<double> voiced(num_samples);
  double phase = 0.0;
  double wobble = 0.0;
  const double wobble_pole = 0.995;
  const double wobble_gain = std::sqrt(1.0 - wobble_pole * wobble_pole);
  for (std::size_t i = 0; i < num_samples; ++i) {
    const double t = static_cast<double>(i) / rate;
    wobble = wobble_pole * wobble + wobble_gain * rng.normal();
    const double inst_f0 = f0 *
                           (1.0 + 0.06 * std::sin(2.0 * std::numbers::pi * intonation_hz * t +
                                                  intonation_phase)) *
                           (1.0 + profile.jitter * wobble);
    phase += inst_f0 / rate;
    phase -= std::floor(phase);
    double v = 2.0 * phase - 1.0;
    for (auto& r : tract) v = r(v);
    voiced[i] = v;
  }

  double voiced_rms = 0.0;
  for (double v : voiced) voiced_rms += v * v;
  voiced_rms = num_samples ? std::sqrt(voiced_rms / static_cast<double>(num_samples)) : 0.0;

  // Syllabic envelope: raised-sine bumps of random length and strength.
  audio::AudioClip clip;
  clip.samples.resize(num_samples);
  std::size_t syllable_start = 0;
  std::size_t syllable_len = 1;
  double syllable_gain = 1.0;
  for (std::size_t i = 0; i < num_samples; ++i) {
    if (i == 0 || i >= syllable_start + syllable_len) {
      syllable_start = i;
      syllable_len = std::max<std::size_t>(
          1, static_cast<std::size_t>(rate / syllable_rate * rng.uniform(0.7, 1.3)));
      syllable_gain = rng.uniform(0.4, 1.0);
    }
    const double tau =
        static_cast<double>(i - syllable_start) / static_cast<double>(syllable_len);
    const double bump = std::sin(std::numbers::pi * tau);
    const double env = kEnvelopeFloor + (1.0 - kEnvelopeFloor) * syllable_gain * bump * bump;
    const double noise = profile.noise_mix * voiced_rms * rng.normal();
    clip.samples[i] = env * (voiced[i] + noise);
  }

  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    for (double& v : clip.samples) v *= kPeak / peak;
  }
  clip.speaker_id = profile.speaker_id;
  return clip;
}

}  // namespace uapforge::corpus

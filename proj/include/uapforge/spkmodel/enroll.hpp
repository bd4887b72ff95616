#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/spkmodel/model.hpp"

namespace uapforge::spkmodel {

struct SpeakerClips {
  std::string speaker_id;
  std::vector<const audio::AudioClip*> clips;
};

// Groups clips by speaker_id in order of first appearance, keeping clip
// order within each speaker. Clips without a speaker_id are an error.
std::vector<SpeakerClips> group_by_speaker(std::span<const audio::AudioClip* const> clips);

// Gallery of unit-norm enrollment vectors, sorted by speaker id so that ties
// in identify resolve to the lexicographically smallest id.
struct Enrollment {
  std::vector<std::string> speakers;
  std::vector<std::vector<double>> vectors;
  std::size_t enroll_count = 0;

  std::size_t size() const { return speakers.size(); }
};

// e_k = normalize(mean of the embeddings of the first enroll_count clips of
// each speaker). Throws ConfigError naming a speaker with too few clips.
Enrollment build_enrollment(const SpeakerModel& model, const std::vector<SpeakerClips>& speakers,
                            std::size_t enroll_count = 5);
// Same rule from precomputed unit embeddings.
Enrollment enrollment_from_embeddings(const std::vector<std::string>& speakers,
                                      const std::vector<std::vector<std::vector<double>>>& embeddings);

struct Identification {
  std::size_t index = 0;
  std::string speaker_id;
  double similarity = 0.0;
};

Identification identify(const Enrollment& enrollment, std::span<const double> embedding);
Identification identify(const SpeakerModel& model, const audio::AudioClip& clip,
                        const Enrollment& enrollment);

double cosine(std::span<const double> a, std::span<const double> b);

struct IdentificationScore {
  double accuracy = 0.0;  // fraction in [0, 1]
  std::size_t probes = 0;
  std::size_t correct = 0;
  std::size_t speakers = 0;
};

// Enrolls each speaker from its first enroll_count clips and identifies the
// rest against that gallery.
IdentificationScore identification_accuracy(const SpeakerModel& model,
                                            const std::vector<SpeakerClips>& speakers,
                                            std::size_t enroll_count = 5);

}  // namespace uapforge::spkmodel

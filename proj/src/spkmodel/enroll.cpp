#include "uapforge/spkmodel/enroll.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "uapforge/error.hpp"
#include "uapforge/parallel.hpp"

namespace uapforge::spkmodel {

std::vector<SpeakerClips> group_by_speaker(std::span<const audio::AudioClip* const> clips) {
  std::vector<SpeakerClips> out;
  std::map<std::string, std::size_t> slot;
  for (const auto* c : clips) {
    if (!c->speaker_id) throw std::invalid_argument("clip without speaker id");
    auto [it, fresh] = slot.emplace(*c->speaker_id, out.size());
    if (fresh) out.push_back({*c->speaker_id, {}});
    out[it->second].clips.push_back(c);
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw std::domain_error("cosine of a zero vector");
  return ab / std::sqrt(aa * bb);
}

Enrollment enrollment_from_embeddings(
    const std::vector<std::string>& speakers,
    const std::vector<std::vector<std::vector<double>>>& embeddings) {
  if (speakers.size() != embeddings.size()) throw std::invalid_argument("speaker count mismatch");
  std::vector<std::size_t> order(speakers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return speakers[a] < speakers[b]; });
  Enrollment e;
  for (std::size_t k : order) {
    const auto& embs = embeddings[k];
    if (embs.empty()) throw ConfigError("speaker " + speakers[k] + " has no enrollment clips");
    std::vector<double> mean(embs.front().size(), 0.0);
    for (const auto& v : embs) {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    double norm = 0.0;
    for (double& m : mean) {
      m /= static_cast<double>(embs.size());
      norm += m * m;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::domain_error("enrollment vector of " + speakers[k] + " is zero");
    for (double& m : mean) m /= norm;
    e.speakers.push_back(speakers[k]);
    e.vectors.push_back(std::move(mean));
    e.enroll_count = embs.size();
  }
  return e;
}

Enrollment build_enrollment(const SpeakerModel& model, const std::vector<SpeakerClips>& speakers,
                            std::size_t enroll_count) {
  if (enroll_count == 0) throw ConfigError("enroll_count must be positive");
  std::vector<const audio::AudioClip*> flat;
  for (const auto& s : speakers) {
    if (s.clips.size() < enroll_count) {
      throw ConfigError("speaker " + s.speaker_id + " has " + std::to_string(s.clips.size()) +
                        " clips, enrollment needs " + std::to_string(enroll_count));
    }
    flat.insert(flat.end(), s.clips.begin(), s.clips.begin() + static_cast<std::ptrdiff_t>(enroll_count));
  }
  std::vector<std::vector<double>> embs(flat.size());
  parallel_for(flat.size(), [&](std::size_t i) { embs[i] = embed(model, *flat[i]); });

  std::vector<std::string> ids;
  std::vector<std::vector<std::vector<double>>> grouped;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    ids.push_back(speakers[s].speaker_id);
    grouped.emplace_back(embs.begin() + static_cast<std::ptrdiff_t>(s * enroll_count),
                         embs.begin() + static_cast<std::ptrdiff_t>((s + 1) * enroll_count));
  }
  return enrollment_from_embeddings(ids, grouped);
}

Identification identify(const Enrollment& enrollment, std::span<const double> embedding) {
  if (enrollment.size() == 0) throw std::invalid_argument("identify: empty enrollment");
  Identification best;
  best.similarity = -2.0;
  for (std::size_t k = 0; k < enrollment.size(); ++k) {
    const double s = cosine(embedding, enrollment.vectors[k]);
    if (s > best.similarity) {
      best.index = k;
      best.similarity = s;
    }
  }
  best.speaker_id = enrollment.speakers[best.index];
  return best;
}

Identification identify(const SpeakerModel& model, const audio::AudioClip& clip,
                        const Enrollment& enrollment) {
  return identify(enrollment, embed(model, clip));
}

IdentificationScore identification_accuracy(const SpeakerModel& model,
                                            const std::vector<SpeakerClips>& speakers,
                                            std::size_t enroll_count) {
  const Enrollment enrollment = build_enrollment(model, speakers, enroll_count);
  std::vector<const audio::AudioClip*> probes;
  for (const auto& s : speakers) {
    probes.insert(probes.end(), s.clips.begin() + static_cast<std::ptrdiff_t>(enroll_count),
                  s.clips.end());
  }
  std::vector<char> hit(probes.size(), 0);
  parallel_for(probes.size(), [&](std::size_t i) {
    hit[i] = identify(model, *probes[i], enrollment).speaker_id == *probes[i]->speaker_id;
  });
  IdentificationScore score;
  score.speakers = speakers.size();
  score.probes = probes.size();
  score.correct = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
  score.accuracy = probes.empty() ? 0.0
                                  : static_cast<double>(score.correct) /
                                        static_cast<double>(score.probes);
  return score;
}

}  // namespace uapforge::spkmodel

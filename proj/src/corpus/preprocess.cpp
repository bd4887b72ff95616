#include "uapforge/corpus/preprocess.hpp"

#include <algorithm>
#include <exception>
#include <optional>

#include "uapforge/audio/loudness.hpp"
#include "uapforge/audio/signal.hpp"
#include "uapforge/audio/wav.hpp"
#include "uapforge/corpus/speaker.hpp"
#include "uapforge/error.hpp"
#include "uapforge/parallel.hpp"

namespace uapforge::corpus {

audio::AudioClip load_clip(const CorpusManifest& manifest, std::size_t index) {
  const ManifestEntry& e = manifest.entries.at(index);
  audio::AudioClip clip;
  if (is_synth_source(e.source)) {
    const SynthSource s = parse_synth_source(e.source);
    clip = synthesize_samples(generate_speaker(s.speaker_seed, e.speaker_id), s.num_samples,
                              s.utt_seed);
  } else {
    std::filesystem::path p(e.source);
    if (p.is_relative()) p = manifest.base_dir / p;
    clip = audio::read_wav(p);
  }
  clip.speaker_id = e.speaker_id;
  clip.source = e.source;
  return clip;
}

std::vector<const PreparedClip*> PreparedCorpus::in_split(Split split) const {
  std::vector<const PreparedClip*> out;
  for (const auto& c : clips) {
    if (c.split == split) out.push_back(&c);
  }
  return out;
}

PreparedCorpus preprocess_corpus(const CorpusManifest& manifest, const PreprocessOptions& options) {
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const Split s = manifest.entries[i].split;
    if (!options.only_entries.empty() &&
        std::find(options.only_entries.begin(), options.only_entries.end(), i) ==
            options.only_entries.end()) {
      continue;
    }
    if (std::find(options.splits.begin(), options.splits.end(), s) != options.splits.end()) {
      selected.push_back(i);
    }
  }
  const std::size_t pad_len = audio::seconds_to_samples(options.pad_to_s);

  std::vector<std::optional<PreparedClip>> done(selected.size());
  std::vector<std::string> errors(selected.size());
  parallel_for(selected.size(), [&](std::size_t k) {
    const std::size_t idx = selected[k];
    try {
      PreparedClip pc;
      pc.entry = idx;
      pc.split = manifest.entries[idx].split;
      auto norm = audio::normalize_loudness(load_clip(manifest, idx), options.target_lufs);
      pc.gain_db = norm.gain_db;
      pc.clamp_fraction = norm.clamp_fraction;
      pc.clip = std::move(norm.clip);
      if (pc.split == Split::train && options.pad_train) {
        pc.clip = pc.clip.size() >= pad_len ? audio::truncate(pc.clip, pad_len)
                                            : audio::repeat_pad(pc.clip, pad_len);
      }
      done[k] = std::move(pc);
    } catch (const std::exception& ex) {
      errors[k] = ex.what();
    }
  });

  PreparedCorpus out;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    if (done[k]) {
      out.clips.push_back(std::move(*done[k]));
    } else {
      out.failures.push_back({selected[k], manifest.entries[selected[k]].source, errors[k]});
    }
  }
  if (!selected.empty() && static_cast<double>(out.failures.size()) >
                               options.max_failure_fraction * static_cast<double>(selected.size())) {
    throw Error(std::to_string(out.failures.size()) + " of " + std::to_string(selected.size()) +
                " clips failed preprocessing; first: " + out.failures.front().source + ": " +
                out.failures.front().reason);
  }
  return out;
}

}  // namespace uapforge::corpus

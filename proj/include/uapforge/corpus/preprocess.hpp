#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/corpus/manifest.hpp"

namespace uapforge::corpus {

// Loads the waveform behind manifest entry `index`, either from disk or by
// running the generator. speaker_id and source are filled in.
audio::AudioClip load_clip(const CorpusManifest& manifest, std::size_t index);

struct PreprocessOptions {
  double target_lufs = -23.0;
  double pad_to_s = 20.0;
  // Train clips are repeat-padded to pad_to_s unless this is false (model
  // training crops cyclically instead of materializing the padding).
  bool pad_train = true;
  std::vector<Split> splits{Split::train, Split::val, Split::test};
  double max_failure_fraction = 0.1;
  // Restricts processing to these manifest indices (empty: all).
  std::vector<std::size_t> only_entries;
};

struct PreparedClip {
  std::size_t entry = 0;
  Split split = Split::train;
  audio::AudioClip clip;
  double gain_db = 0.0;
  double clamp_fraction = 0.0;
};

struct PreprocessFailure {
  std::size_t entry = 0;
  std::string source;
  std::string reason;
};

struct PreparedCorpus {
  // Manifest order.
  std::vector<PreparedClip> clips;
  std::vector<PreprocessFailure> failures;

  std::vector<const PreparedClip*> in_split(Split split) const;
};

// Loudness-normalizes every selected clip, then repeat-pads train clips to
// pad_to_s (longer ones are truncated). Val and test clips are never
// padded. Individual failures are collected; more than
// max_failure_fraction of them raises Error.
PreparedCorpus preprocess_corpus(const CorpusManifest& manifest, const PreprocessOptions& options);

}  // namespace uapforge::corpus

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace uapforge::corpus {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestEntry {
  // Either a WAV path (relative to the manifest's base_dir unless absolute)
  // or a generator spec "synth:<speaker_seed>:<utt_seed>:<num_samples>".
  std::string source;
  std::string speaker_id;
  Split split = Split::train;
};

struct SkipRecord {
  std::string path;
  std::string reason;
};

// On disk: one JSON header line, then one tab-separated row per entry
// (source, speaker_id, split).
struct CorpusManifest {
  static constexpr int kVersion = 1;

  std::vector<ManifestEntry> entries;
  int sample_rate = 16000;
  std::vector<SkipRecord> skipped;
  // Resolves relative WAV sources; not serialized.
  std::filesystem::path base_dir;

  // Speaker ids present in a split, in first-appearance order.
  std::vector<std::string> speakers(Split split) const;
  // Entry indices of one speaker within a split, in manifest order.
  std::vector<std::size_t> indices(Split split, const std::string& speaker_id) const;
  std::vector<std::size_t> indices(Split split) const;
};

// Hard invariants: known sample rate, no empty fields, and test speakers
// disjoint from train/val speakers. Throws FormatError.
void validate_manifest(const CorpusManifest& manifest);

// Throws ConfigError naming the first speaker of `split` with fewer than
// `min_count` clips.
void require_clips_per_speaker(const CorpusManifest& manifest, Split split, std::size_t min_count);

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

// Serialized text exactly as write_manifest would produce it (sources
// relative to `relative_to`).
std::string format_manifest(const CorpusManifest& manifest,
                            const std::filesystem::path& relative_to);

struct SyntheticCorpusSpec {
  std::size_t n_speakers = 25;
  std::size_t utts_per_speaker = 30;
  double min_duration_s = 3.0;
  double max_duration_s = 20.0;
  // Speaker indices held out for evaluation. Empty means the last 5.
  std::vector<std::size_t> test_speakers;
  // Trailing utterances of each non-test speaker assigned to val.
  std::size_t val_per_speaker = 5;
  // Trailing utterances of each test speaker generated at max_duration_s,
  // the pool the length sweep truncates from.
  std::size_t long_clips_per_test_speaker = 8;
  std::uint64_t seed = 1;
};

// Throws ConfigError for an inconsistent spec.
CorpusManifest build_synthetic_corpus(const SyntheticCorpusSpec& spec);

struct SynthSource {
  std::uint64_t speaker_seed = 0;
  std::uint64_t utt_seed = 0;
  std::size_t num_samples = 0;
};

bool is_synth_source(std::string_view source);
SynthSource parse_synth_source(std::string_view source);
std::string format_synth_source(const SynthSource& s);

struct IngestOptions {
  // Fraction of speakers (last in sorted order) assigned to test.
  double test_fraction = 0.2;
  // Trailing clips of each remaining speaker assigned to val.
  std::size_t val_per_speaker = 0;
};

// Builds a manifest from root/<speaker_id>/*.wav in lexicographic order.
// Files that violate the WAV contract are listed in `skipped`. Throws
// IoError when no usable clip is found.
CorpusManifest ingest_wav_corpus(const std::filesystem::path& root, const IngestOptions& options = {});

}  // namespace uapforge::corpus

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uapforge/corpus/manifest.hpp"
#include "uapforge/corpus/preprocess.hpp"
#include "uapforge/spkmodel/train.hpp"
#include "uapforge/uaptrain/patch.hpp"

namespace uapforge::cli {

struct CorpusSettings {
  // "synthetic" or a directory laid out as root/speaker_id/*.wav.
  std::string source = "synthetic";
  corpus::SyntheticCorpusSpec synthetic;
  corpus::IngestOptions ingest;
  // gen-data also writes every synthetic clip as a WAV file.
  bool write_wavs = true;
};

struct ModelSettings {
  spkmodel::TrainModelConfig train;
  // Held-out identification accuracy (percent) required before attacking.
  double accuracy_gate = 90.0;
};

struct AttackSettings {
  uaptrain::AttackConfig config;
  // Validation clips for the per-epoch fooling rate (0 disables it).
  std::size_t val_clips = 40;
};

struct EvalSettings {
  std::vector<double> lengths_s{3.0, 5.0, 10.0, 15.0, 20.0};
  std::size_t clips_per_length = 0;
  std::size_t enroll_count = 5;
  std::size_t eval_count = 20;
  std::size_t bins = 50;
  bool normalize_enrollment = true;
  // Allowed FR gap (points) when matching two variants.
  double match_tolerance = 5.0;
};

struct RunConfig {
  CorpusSettings corpus;
  corpus::PreprocessOptions preprocess;
  ModelSettings model;
  AttackSettings attack;
  EvalSettings eval;
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";
};

// Applies one "section.key" = value assignment. Unknown keys and malformed
// values throw ConfigError.
void set_value(RunConfig& config, const std::string& dotted_key, const std::string& value);

// INI-style text: [section] headers, key = value lines, '#' or ';' comments.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Fully resolved config in the same format; parse_config(format_config(c))
// reproduces c.
std::string format_config(const RunConfig& config);

// Pushes run-level values (seed, loudness target, padding) into the module
// configs and validates cross-field constraints.
void resolve(RunConfig& config);

// Every key as "section.key" -> value text, excluding run.out.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);

}  // namespace uapforge::cli

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/uaptrain/losses.hpp"

namespace uapforge::uaptrain {

struct AttackConfig {
  std::size_t patch_length = 3200;
  double epsilon = 0.01;
  double lr = 3e-3;
  std::size_t epochs = 250;
  std::size_t batch = 64;
  LossWeights weights;
  // "zeros" or "uniform" (uniform in [-init_scale * epsilon, init_scale * epsilon]).
  // The all-zero patch is a stationary point of both loss terms, so
  // gradient steps never leave it.
  std::string init = "uniform";
  double init_scale = 0.1;
  // Random tiling offset per training sample instead of aligning to sample 0.
  bool random_phase = false;
  // Cap on training clips (0 = all), picked round-robin across speakers.
  std::size_t max_train_clips = 0;
  std::uint64_t seed = 1;
};

// Throws ConfigError for inconsistent values.
void validate(const AttackConfig& config);
std::string to_json(const AttackConfig& config);
AttackConfig attack_config_from_json(const std::string& text);

struct Patch {
  std::vector<double> values;
  double epsilon = 0.01;
  int sample_rate = audio::kSampleRate;
  // JSON of the AttackConfig that produced it; empty for hand-made patches.
  std::string config_json;

  std::size_t size() const { return values.size(); }
};

inline constexpr std::uint32_t kPatchFormatVersion = 1;

// Magic "UAPPATCH", u32 version, u64 length, f64 epsilon, u32 sample rate,
// length-prefixed config JSON, then the values as f64 LE.
void save_patch(const Patch& patch, const std::filesystem::path& path);
Patch load_patch(const std::filesystem::path& path);
// Values written as-is (they already lie in [-1, 1]).
void export_patch_wav(const Patch& patch, const std::filesystem::path& path);

std::string patch_hash(const Patch& patch);

}  // namespace uapforge::uaptrain

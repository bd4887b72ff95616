#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "uapforge/cli/config.hpp"
#include "uapforge/evalharness/report.hpp"

namespace uapforge::cli {

// Where each stage reads and writes, all under RunConfig::out.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path manifest() const { return data_dir() / "manifest.tsv"; }
  std::filesystem::path model_dir() const { return root / "model"; }
  std::filesystem::path model() const { return model_dir() / "model.bin"; }
  std::filesystem::path model_state() const { return model_dir() / "train_state.bin"; }
  std::filesystem::path model_log() const { return model_dir() / "train_log.jsonl"; }
  std::filesystem::path uap_dir() const { return root / "uap"; }
  std::filesystem::path patch(const std::string& loss) const;
  std::filesystem::path patch_wav(const std::string& loss) const;
  std::filesystem::path uap_log(const std::string& loss) const;
  std::filesystem::path uap_checkpoint(const std::string& loss) const;
  std::filesystem::path eval_dir() const { return root / "eval"; }
};

struct GenDataResult {
  std::filesystem::path manifest;
  std::size_t clips = 0;
  std::size_t speakers = 0;
  std::size_t test_speakers = 0;
  std::size_t skipped = 0;
  // FNV over the manifest and every written WAV, in path order.
  std::string tree_hash;
};

GenDataResult gen_data(const RunConfig& config, std::ostream& log);

struct TrainModelResult {
  std::filesystem::path model;
  double held_out_accuracy = 0.0;
  std::size_t epochs = 0;
};

TrainModelResult train_model_stage(const RunConfig& config, bool resume, std::ostream& log);

struct TrainUapOptions {
  bool resume = false;
  bool override_gate = false;
  const std::atomic<bool>* stop = nullptr;
  std::size_t stop_after_batches = 0;
};

struct TrainUapResult {
  std::filesystem::path patch;
  std::size_t epochs = 0;
  double final_val_fr = 0.0;
};

// Throws GateError when the model misses model.accuracy_gate (unless
// overridden) and uaptrain::Interrupted after checkpointing on a stop.
TrainUapResult train_uap_stage(const RunConfig& config, const TrainUapOptions& options,
                               std::ostream& log);

struct EvaluateOptions {
  // Defaults to the patch trained with attack.loss.
  std::optional<std::filesystem::path> patch;
  std::optional<std::filesystem::path> baseline_patch;
  bool override_gate = false;
};

evalharness::EvalReport evaluate_stage(const RunConfig& config, const EvaluateOptions& options,
                                       std::ostream& log);

// Held-out identification accuracy on the test speakers (percent).
double held_out_accuracy(const RunConfig& config, const spkmodel::SpeakerModel& model);

}  // namespace uapforge::cli

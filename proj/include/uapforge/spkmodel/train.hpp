#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/grad/adam.hpp"
#include "uapforge/spkmodel/model.hpp"

namespace uapforge::spkmodel {

struct TrainModelConfig {
  ModelArch arch;
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch = 32;
  double crop_s = 2.0;
  // Length the training clips are repeat-padded to; crops are drawn from
  // the padded clip.
  double pad_to_s = 20.0;
  std::uint64_t seed = 1;
};

struct ModelEpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // fraction in [0, 1]
};

struct ModelTrainState {
  SpeakerModel model;
  grad::AdamState adam;
  std::size_t epochs_done = 0;
  std::vector<ModelEpochRecord> curve;
};

// Called after every completed epoch with the state to checkpoint.
using ModelEpochHook = std::function<void(const ModelTrainState&)>;

// Softmax cross-entropy on one random crop per clip per epoch, Adam on the
// batch-mean gradient. Labels are the sorted distinct speaker ids. Clips may
// be unpadded: a crop reads the clip cyclically, which is exactly a crop of
// its repeat-padded version. Deterministic for a given seed whatever the
// thread count. Throws Error naming the epoch if the loss goes non-finite.
ModelTrainState train_model(const std::vector<const audio::AudioClip*>& clips,
                            const TrainModelConfig& config, const ModelTrainState* resume = nullptr,
                            const ModelEpochHook& on_epoch = {});

void save_train_state(const ModelTrainState& state, const std::filesystem::path& path);
ModelTrainState load_train_state(const std::filesystem::path& path);

}  // namespace uapforge::spkmodel

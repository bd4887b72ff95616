#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/error.hpp"
#include "uapforge/grad/adam.hpp"
#include "uapforge/spkmodel/model.hpp"
#include "uapforge/uaptrain/patch.hpp"

namespace uapforge::uaptrain {

// Bias-corrected Adam step followed by projection onto [-epsilon, epsilon].
// Throws std::domain_error on a NaN gradient.
void adam_step(std::vector<double>& patch, std::span<const double> grad, grad::AdamState& state,
               double lr, double epsilon);

struct UapEpochRecord {
  std::size_t epoch = 0;
  double mean_fooling = 0.0;
  double mean_regularizer = 0.0;
  double mean_total = 0.0;
  // Validation fooling rate of the patch as it stood when the epoch began
  // (NaN without a validator).
  double val_fr = std::numeric_limits<double>::quiet_NaN();
  double max_abs = 0.0;
};

// Everything needed to continue a run bit-exactly after an interruption.
struct UapTrainState {
  std::string config_json;
  std::vector<double> patch;
  grad::AdamState adam;
  std::size_t epoch = 0;
  std::size_t batch_index = 0;
  double fooling_sum = 0.0;
  double regularizer_sum = 0.0;
  std::size_t samples_seen = 0;
  std::size_t batches_seen = 0;
  double epoch_val_fr = std::numeric_limits<double>::quiet_NaN();
  std::vector<UapEpochRecord> records;
  double final_val_fr = std::numeric_limits<double>::quiet_NaN();
};

void save_uap_state(const UapTrainState& state, const std::filesystem::path& path);
UapTrainState load_uap_state(const std::filesystem::path& path);

class Interrupted : public Error {
 public:
  using Error::Error;
};

struct UapHooks {
  // Fooling rate (percent) of a candidate patch on held-out data.
  std::function<double(const std::vector<double>& patch)> validate;
  std::function<void(const UapTrainState&)> on_epoch;
  // Receives the state to persist before train_uap throws Interrupted.
  std::function<void(const UapTrainState&)> on_interrupt;
  const std::atomic<bool>* stop = nullptr;
  // Testing aid: behave as if interrupted after this many batches of the
  // current process (0 = never).
  std::size_t stop_after_batches = 0;
};

// Picks up to `count` clips taking one per speaker in turn, in input order.
std::vector<const audio::AudioClip*> select_round_robin(
    std::span<const audio::AudioClip* const> clips, std::size_t count);

struct UapResult {
  Patch patch;
  UapTrainState state;
};

// Epochs of shuffled mini-batches over the (padded) training clips: per-
// sample tapes give the fooling gradient, the regularizer is added once,
// then adam_step. Deterministic given the seed, independent of the thread
// count.
UapResult train_uap(const spkmodel::SpeakerModel& model,
                    std::span<const audio::AudioClip* const> clips, const AttackConfig& config,
                    const UapHooks& hooks = {}, const UapTrainState* resume = nullptr);

// Gradient of total_loss computed the way train_uap does it (per-sample
// tapes, ordered reduction). Returns the loss value.
double batch_gradient(const spkmodel::SpeakerModel& model,
                      std::span<const audio::AudioClip* const> batch,
                      std::span<const std::vector<double>> clean_embeddings,
                      std::span<const double> patch, const LossWeights& weights,
                      std::span<const std::size_t> phases, std::vector<double>& grad,
                      double* fooling_mean = nullptr, double* regularizer_value = nullptr);

}  // namespace uapforge::uaptrain

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/grad/tensor.hpp"

namespace uapforge::spkmodel {

struct ConvLayer {
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
};

struct ModelArch {
  std::vector<ConvLayer> convs{{32, 16, 8}, {32, 8, 4}, {64, 4, 2}, {64, 4, 2}};
  std::size_t embed_dim = 64;
  std::size_t num_classes = 0;
  // Fixed gain on the waveform before the first conv. Normalized speech sits
  // around 0.07 RMS, where tanh is nearly linear; a larger gain lets it
  // compress loud passages.
  double input_gain = 100.0;
  // Fixed first-order pre-emphasis y[t] = x[t+1] - c x[t] ahead of the conv
  // stack (0 disables it). Removes DC and most sub-100 Hz content.
  double preemphasis = 0.97;

  // Shortest waveform that yields at least one frame after the last conv.
  std::size_t min_input_length() const;
};

// Raw-waveform conv stack with tanh activations, mean+std pooling, a linear
// embedding head and a linear classifier used only in training.
//
// Parameter order: per conv layer (kernels, bias), then head (weight, bias),
// then classifier (weight, bias).
class SpeakerModel {
 public:
  SpeakerModel() = default;
  // Glorot-uniform weights, zero biases.
  SpeakerModel(ModelArch arch, std::vector<std::string> labels, std::uint64_t seed);

  const ModelArch& arch() const { return arch_; }
  // Training label of each classifier output.
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<grad::Tensor>& parameters() const { return params_; }

  std::size_t num_parameters() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);
  // Replaces all parameters; shapes must match the architecture.
  void set_parameters(std::vector<grad::Tensor> params);

  // Unnormalized embedding of a rank-1 waveform, using `params` (either
  // parameters() or tape variables built from them).
  grad::Tensor embedding(const grad::Tensor& waveform, std::span<const grad::Tensor> params) const;
  grad::Tensor embedding(const grad::Tensor& waveform) const { return embedding(waveform, params_); }
  grad::Tensor logits(const grad::Tensor& raw_embedding, std::span<const grad::Tensor> params) const;

  static std::vector<grad::Shape> parameter_shapes(const ModelArch& arch);

 private:
  ModelArch arch_;
  std::vector<std::string> labels_;
  std::vector<grad::Tensor> params_;
};

// Unit-norm embedding used for every cosine comparison. Differentiable with
// respect to the waveform when it lives on a tape. Throws
// std::invalid_argument when the waveform is shorter than the model accepts.
grad::Tensor embed_tensor(const SpeakerModel& model, const grad::Tensor& waveform);
std::vector<double> embed(const SpeakerModel& model, std::span<const double> samples);
std::vector<double> embed(const SpeakerModel& model, const audio::AudioClip& clip);

struct LoadedModel {
  SpeakerModel model;
  std::vector<std::string> warnings;
};

inline constexpr std::uint32_t kModelFormatVersion = 2;

// Binary checkpoint: magic "UAPFMODL", u32 version, architecture, speaker
// labels (v2 only), then each parameter tensor as u64 length + f64 LE
// values. Version 1 files lack the label block and load with a warning.
void save_model(const SpeakerModel& model, const std::filesystem::path& path,
                std::uint32_t version = kModelFormatVersion);
LoadedModel load_model(const std::filesystem::path& path);

std::string model_hash(const SpeakerModel& model);

}  // namespace uapforge::spkmodel

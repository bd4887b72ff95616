#include "uapforge/uaptrain/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "uapforge/error.hpp"
#include "uapforge/grad/ops.hpp"

namespace uapforge::uaptrain {

using grad::Tensor;

std::string to_string(LossVariant v) { return v == LossVariant::exp_tv ? "exp_tv" : "l2"; }

LossVariant parse_loss_variant(const std::string& text) {
  if (text == "exp_tv") return LossVariant::exp_tv;
  if (text == "l2") return LossVariant::l2;
  throw ConfigError("unknown loss variant '" + text + "' (expected exp_tv or l2)");
}

double phi(double x, double y) {
  const double ax = std::fabs(x);
  const double ay = std::fabs(y);
  if (ay > ax) return std::exp(ay - ax) - 1.0;
  if (x != 0.0 && y != 0.0 && std::signbit(x) != std::signbit(y)) return std::exp(ay) - 1.0;
  return 0.0;
}

Tensor exp_tv_loss(const Tensor& patch, bool circular) {
  if (patch.rank() != 1 || patch.size() < 2) {
    throw std::invalid_argument("exp_tv_loss needs a rank-1 patch of length >= 2");
  }
  const std::size_t l = patch.size();
  Tensor x, y;
  if (circular) {
    x = patch;
    y = grad::concat(grad::slice(patch, 1, l), grad::slice(patch, 0, 1));
  } else {
    x = grad::slice(patch, 0, l - 1);
    y = grad::slice(patch, 1, l);
  }
  // Branch selection is piecewise constant, so it enters as fixed masks.
  const auto xv = x.data();
  const auto yv = y.data();
  std::vector<double> grow(xv.size()), flip(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const bool g = std::fabs(yv[i]) > std::fabs(xv[i]);
    grow[i] = g ? 1.0 : 0.0;
    flip[i] = !g && xv[i] != 0.0 && yv[i] != 0.0 && std::signbit(xv[i]) != std::signbit(yv[i])
                  ? 1.0
                  : 0.0;
  }
  const Tensor ay = grad::abs(y);
  const Tensor grow_term = grad::exp(grad::sub(ay, grad::abs(x))) - 1.0;
  const Tensor flip_term = grad::exp(ay) - 1.0;
  const Tensor per_pair = grad::add(grad::mul(Tensor::vector(std::move(grow)), grow_term),
                                    grad::mul(Tensor::vector(std::move(flip)), flip_term));
  return grad::sum(per_pair) / static_cast<double>(l);
}

Tensor l2_loss(const Tensor& patch) {
  if (patch.size() == 0) throw std::invalid_argument("l2_loss of an empty patch");
  return grad::l2_norm(patch) / static_cast<double>(patch.size());
}

Tensor fooling_loss(const spkmodel::SpeakerModel& model, std::span<const double> samples,
                    std::span<const double> clean_embedding, const Tensor& patch,
                    std::size_t phase) {
  const std::size_t n = samples.size();
  Tensor pert = grad::tile(patch, n + phase);
  if (phase) pert = grad::slice(pert, phase, phase + n);
  const Tensor x = Tensor::vector({samples.begin(), samples.end()});
  const Tensor adv = spkmodel::embed_tensor(model, grad::add(x, pert));
  return grad::cosine_similarity(Tensor::vector({clean_embedding.begin(), clean_embedding.end()}),
                                 adv);
}

Tensor fooling_loss(const spkmodel::SpeakerModel& model, const audio::AudioClip& clip,
                    const Tensor& patch) {
  const std::vector<double> clean = spkmodel::embed(model, clip);
  return fooling_loss(model, clip.samples, clean, patch);
}

Tensor regularizer(const Tensor& patch, const LossWeights& w) {
  return w.variant == LossVariant::exp_tv ? exp_tv_loss(patch, w.circular_tv) : l2_loss(patch);
}

Tensor total_loss(const spkmodel::SpeakerModel& model,
                  std::span<const audio::AudioClip* const> batch, const Tensor& patch,
                  const LossWeights& weights) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  const Tensor reg = regularizer(patch, weights);
  Tensor acc;
  for (const auto* clip : batch) {
    Tensor term = grad::add(weights.fooling * fooling_loss(model, *clip, patch),
                            weights.regularizer * reg);
    acc = acc.defined() ? grad::add(acc, term) : term;
  }
  return acc / static_cast<double>(batch.size());
}

double tv_proxy(std::span<const double> patch) {
  if (patch.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < patch.size(); ++i) {
    s += std::fabs(patch[(i + 1) % patch.size()] - patch[i]);
  }
  return s / static_cast<double>(patch.size());
}

}  // namespace uapforge::uaptrain

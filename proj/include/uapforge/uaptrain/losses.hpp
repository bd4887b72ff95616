#pragma once

#include <span>
#include <string>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/grad/tensor.hpp"
#include "uapforge/spkmodel/model.hpp"

namespace uapforge::uaptrain {

enum class LossVariant { exp_tv, l2 };

std::string to_string(LossVariant v);
// Throws ConfigError for anything other than "exp_tv" or "l2".
LossVariant parse_loss_variant(const std::string& text);

// Pairwise penalty of the exponential TV loss. sign(0) = 0, and a sign flip
// only counts when both values are nonzero.
//   |y| > |x|                 -> exp(|y| - |x|) - 1
//   x, y nonzero, signs differ -> exp(|y|) - 1
//   otherwise                  -> 0
double phi(double x, double y);

// (1/l) * sum_i phi(p[i], p[i+1]). With `circular` the last pair wraps to
// p[0]; otherwise there are l - 1 pairs (still divided by l). Requires l >= 2.
grad::Tensor exp_tv_loss(const grad::Tensor& patch, bool circular = true);

// ||p||_2 / l.
grad::Tensor l2_loss(const grad::Tensor& patch);

// rho(f(x), f(x + tile(p, len(x)))). The clean embedding is a constant; pass
// it in to skip recomputing it.
grad::Tensor fooling_loss(const spkmodel::SpeakerModel& model, const audio::AudioClip& clip,
                          const grad::Tensor& patch);
grad::Tensor fooling_loss(const spkmodel::SpeakerModel& model, std::span<const double> samples,
                          std::span<const double> clean_embedding, const grad::Tensor& patch,
                          std::size_t phase = 0);

struct LossWeights {
  double fooling = 1.0;
  double regularizer = 30.0;
  LossVariant variant = LossVariant::exp_tv;
  bool circular_tv = true;
};

grad::Tensor regularizer(const grad::Tensor& patch, const LossWeights& w);

// mean over the batch of w1 * L_fooling + w2 * L_variant, on one tape.
grad::Tensor total_loss(const spkmodel::SpeakerModel& model,
                        std::span<const audio::AudioClip* const> batch, const grad::Tensor& patch,
                        const LossWeights& weights);

// Mean absolute first difference with wrap-around; the perceptual proxy
// reported next to SNR.
double tv_proxy(std::span<const double> patch);

}  // namespace uapforge::uaptrain

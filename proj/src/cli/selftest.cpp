#include "uapforge/cli/selftest.hpp"

#include <cmath>
#include <exception>
#include <functional>
#include <numbers>
#include <sstream>

#include "uapforge/audio/signal.hpp"
#include "uapforge/grad/finite_diff.hpp"
#include "uapforge/grad/ops.hpp"
#include "uapforge/rng.hpp"
#include "uapforge/spkmodel/model.hpp"
#include "uapforge/uaptrain/losses.hpp"

namespace uapforge::cli {

namespace {

using grad::Tensor;

Tensor random_tensor(Rng& rng, grad::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(grad::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Returns an empty string on success, otherwise the reason.
using Check = std::function<std::string()>;

std::string check_fd(const char* what, const grad::ScalarFn& fn, const Tensor& x, double tol) {
  const auto r = grad::finite_diff_check(fn, x, tol);
  if (r.passed) return {};
  std::ostringstream o;
  o << what << " rel err " << r.max_rel_error;
  return o.str();
}

std::string gradient_ops() {
  Rng rng(11);
  const Tensor b = random_tensor(rng, {3, 2});
  const Tensor k = random_tensor(rng, {2, 1, 3});
  const Tensor c = random_tensor(rng, {5});
  const struct {
    const char* name;
    grad::ScalarFn fn;
    Tensor point;
  } cases[] = {
      {"matmul", [&](const Tensor& a) { return grad::sum(grad::matmul(a, b)); },
       random_tensor(rng, {2, 3})},
      {"conv1d", [&](const Tensor& s) { return grad::sum(grad::tanh(grad::conv1d(s, k, 2))); },
       random_tensor(rng, {1, 16})},
      {"exp/abs", [](const Tensor& a) { return grad::sum(grad::exp(grad::abs(a))); },
       random_tensor(rng, {6}, 0.2, 1.0)},
      {"cosine", [&](const Tensor& a) { return grad::cosine_similarity(a, c); },
       random_tensor(rng, {5})},
      {"stats_pool", [](const Tensor& a) { return grad::sum(grad::stats_pool(a)); },
       random_tensor(rng, {2, 7})},
  };
  for (const auto& t : cases) {
    if (auto err = check_fd(t.name, t.fn, t.point, 1e-4); !err.empty()) return err;
  }
  return {};
}

std::string gradient_end_to_end() {
  spkmodel::ModelArch arch;
  arch.convs = {{4, 8, 4}, {4, 4, 2}};
  arch.embed_dim = 6;
  arch.num_classes = 2;
  spkmodel::SpeakerModel model(arch, {"a", "b"}, 5);
  Rng rng(12);
  std::vector<double> x(400);
  for (double& v : x) v = 0.1 * rng.normal();
  const auto clean = spkmodel::embed(model, x);
  const Tensor patch = random_tensor(rng, {16}, -0.01, 0.01);
  return check_fd("embed(tile + add)",
                  [&](const Tensor& p) { return uaptrain::fooling_loss(model, x, clean, p); }, patch,
                  1e-3);
}

std::string phi_table() {
  const double e01 = std::expm1(0.1);
  const struct {
    double x, y, want;
  } rows[] = {{0.1, 0.2, e01}, {0.2, 0.1, 0.0}, {0.2, -0.1, e01}, {0.0, 0.0, 0.0}};
  for (const auto& r : rows) {
    const double got = uaptrain::phi(r.x, r.y);
    if (std::fabs(got - r.want) > 1e-12) {
      std::ostringstream o;
      o << "phi(" << r.x << ", " << r.y << ") = " << got << ", expected " << r.want;
      return o.str();
    }
  }
  return {};
}

std::string tiling_comb() {
  Rng rng(13);
  const std::size_t l = 8, n = 32;
  std::vector<double> p(l);
  for (double& v : p) v = rng.uniform(-1.0, 1.0);
  const auto mags = audio::dft_magnitudes(audio::tile_patch(p, n));
  double on = 0.0, off = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    (k % (n / l) == 0 ? on : off) += mags[k] * mags[k];
  }
  if (off < 1e-10 * (on + off)) return {};
  return "off-comb energy fraction " + std::to_string(off / (on + off));
}

std::string snr_identities() {
  Rng rng(14);
  std::vector<double> x(256), d(256);
  for (double& v : x) v = rng.normal();
  for (double& v : d) v = 0.05 * rng.normal();
  const double base = audio::snr_db(x, d);
  for (double a : {0.5, 2.0, 0.1}) {
    std::vector<double> ad(d);
    for (double& v : ad) v *= a;
    if (std::fabs(audio::snr_db(x, ad) - (base - 20.0 * std::log10(a))) > 1e-9) {
      return "scaling law off for alpha " + std::to_string(a);
    }
  }
  if (audio::snr_db(x, x) != 0.0) return "equal norms do not give 0 dB";
  return {};
}

std::string loudness_anchor(const audio::KWeighting& filters) {
  audio::AudioClip tone;
  const double amp = std::pow(10.0, -18.0 / 20.0) * std::numbers::sqrt2;
  tone.samples.resize(5 * audio::kSampleRate);
  for (std::size_t i = 0; i < tone.samples.size(); ++i) {
    tone.samples[i] =
        amp * std::sin(2.0 * std::numbers::pi * 997.0 * static_cast<double>(i) / audio::kSampleRate);
  }
  const double lufs = audio::measure_loudness(tone, filters).integrated_lufs;
  if (!(std::fabs(lufs + 18.0) <= 0.5)) {
    return "997 Hz tone at -18 dBFS measured " + std::to_string(lufs) + " LUFS";
  }
  const auto norm = audio::normalize_loudness(tone, -23.0, filters);
  const double again = audio::measure_loudness(norm.clip, filters).integrated_lufs;
  if (!(std::fabs(again + 23.0) <= 0.5)) {
    return "normalized tone measured " + std::to_string(again) + " LUFS";
  }
  return {};
}

}  // namespace

SelftestResult run_selftest(std::ostream& out, const SelftestOptions& options) {
  const audio::KWeighting filters =
      options.k_weighting.value_or(audio::k_weighting(audio::kSampleRate));
  const std::pair<const char*, Check> checks[] = {
      {"gradient_ops", gradient_ops},
      {"gradient_end_to_end", gradient_end_to_end},
      {"phi_table", phi_table},
      {"tiling_comb", tiling_comb},
      {"snr_identities", snr_identities},
      {"loudness_anchor", [&] { return loudness_anchor(filters); }},
  };
  SelftestResult result;
  for (const auto& [name, check] : checks) {
    std::string err;
    try {
      err = check();
    } catch (const std::exception& e) {
      err = std::string("threw: ") + e.what();
    }
    if (err.empty()) {
      out << "PASS " << name << "\n";
      result.passed.emplace_back(name);
    } else {
      out << "FAIL " << name << ": " << err << "\n";
      result.failed.emplace_back(name);
    }
  }
  out << (result.ok() ? "selftest passed" : "selftest FAILED") << " (" << result.passed.size()
      << "/" << result.passed.size() + result.failed.size() << ")\n";
  return result;
}

}  // namespace uapforge::cli

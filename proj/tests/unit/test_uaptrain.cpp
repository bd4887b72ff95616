#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "uapforge/audio/signal.hpp"
#include "uapforge/audio/wav.hpp"
#include "uapforge/corpus/speaker.hpp"
#include "uapforge/error.hpp"
#include "uapforge/grad/finite_diff.hpp"
#include "uapforge/grad/ops.hpp"
#include "uapforge/rng.hpp"
#include "uapforge/spkmodel/model.hpp"
#include "uapforge/uaptrain/losses.hpp"
#include "uapforge/uaptrain/patch.hpp"
#include "uapforge/uaptrain/trainer.hpp"

using namespace uapforge;
using grad::Tensor;
namespace ut = uaptrain;

namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "uapforge_test_uaptrain";
  fs::create_directories(dir);
  return dir / name;
}

// The piecewise penalty written out again from its definition.
double phi_oracle(double x, double y) {
  const auto sgn = [](double v) { return (v > 0) - (v < 0); };
  if (std::fabs(y) > std::fabs(x)) return std::exp(std::fabs(y) - std::fabs(x)) - 1.0;
  if (sgn(x) != 0 && sgn(y) != 0 && sgn(x) != sgn(y)) return std::exp(std::fabs(y)) - 1.0;
  return 0.0;
}

spkmodel::SpeakerModel tiny_model() {
  spkmodel::ModelArch arch;
  arch.convs = {{4, 8, 4}, {4, 4, 2}};
  arch.embed_dim = 6;
  arch.num_classes = 2;
  return spkmodel::SpeakerModel(arch, {"a", "b"}, 21);
}

audio::AudioClip noise_clip(std::size_t n, std::uint64_t seed, std::string spk = "a") {
  Rng rng(seed);
  audio::AudioClip c;
  c.samples.resize(n);
  for (double& v : c.samples) v = 0.1 * rng.normal();
  c.speaker_id = std::move(spk);
  return c;
}

Tensor random_patch(Rng& rng, std::size_t l, double eps) {
  std::vector<double> v(l);
  for (double& x : v) x = rng.uniform(-eps, eps);
  return Tensor::vector(v);
}

}  // namespace

TEST(Phi, Table) {
  const double e01 = std::exp(0.1) - 1;
  EXPECT_NEAR(ut::phi(0.1, 0.2), e01, 1e-12);
  EXPECT_NEAR(ut::phi(0.1, 0.2), 0.1051709, 1e-7);
  EXPECT_EQ(ut::phi(0.2, 0.1), 0.0);
  EXPECT_NEAR(ut::phi(0.2, -0.1), e01, 1e-12);
  EXPECT_EQ(ut::phi(0.0, 0.0), 0.0);
  EXPECT_EQ(ut::phi(0.3, 0.0), 0.0);
}

TEST(Phi, RandomizedOracle) {
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    double x = rng.uniform(-0.02, 0.02), y = rng.uniform(-0.02, 0.02);
    if (i % 10 == 0) x = 0;
    if (i % 13 == 0) y = -x;
    EXPECT_NEAR(ut::phi(x, y), phi_oracle(x, y), 1e-12);
  }
}

TEST(ExpTv, Examples) {
  EXPECT_EQ(ut::exp_tv_loss(Tensor::zeros({8})).item(), 0.0);
  EXPECT_EQ(ut::exp_tv_loss(Tensor::full({8}, 0.004)).item(), 0.0);
  const double a = 0.007;
  std::vector<double> alt(10);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? -a : a;
  EXPECT_NEAR(ut::exp_tv_loss(Tensor::vector(alt)).item(), std::exp(a) - 1, 1e-15);
  EXPECT_THROW(ut::exp_tv_loss(Tensor::vector({1.0})), std::invalid_argument);
}

TEST(ExpTv, MatchesOracleSumAndIsRotationInvariant) {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(17);
    for (double& v : p) v = rng.uniform(-0.01, 0.01);
    double circ = 0, open = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double t = phi_oracle(p[i], p[(i + 1) % p.size()]);
      circ += t;
      if (i + 1 < p.size()) open += t;
    }
    const double l = static_cast<double>(p.size());
    EXPECT_NEAR(ut::exp_tv_loss(Tensor::vector(p)).item(), circ / l, 1e-15);
    EXPECT_NEAR(ut::exp_tv_loss(Tensor::vector(p), false).item(), open / l, 1e-15);
    EXPECT_GE(ut::exp_tv_loss(Tensor::vector(p)).item(), 0.0);
    std::vector<double> rot(p.begin() + 5, p.end());
    rot.insert(rot.end(), p.begin(), p.begin() + 5);
    EXPECT_NEAR(ut::exp_tv_loss(Tensor::vector(rot)).item(),
                ut::exp_tv_loss(Tensor::vector(p)).item(), 1e-15);
  }
}

TEST(ExpTv, GradientMatchesFiniteDifferences) {
  Rng rng(33);
  const auto r = grad::finite_diff_check([](const Tensor& p) { return ut::exp_tv_loss(p); },
                                         random_patch(rng, 12, 0.01), 1e-4);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(L2, Examples) {
  EXPECT_EQ(ut::l2_loss(Tensor::zeros({5})).item(), 0.0);
  EXPECT_NEAR(ut::l2_loss(Tensor::vector({0, 0, -0.3, 0})).item(), 0.3 / 4, 1e-15);
  EXPECT_NEAR(ut::l2_loss(Tensor::full({9}, 0.02)).item(), 0.02 / 3, 1e-15);
}

TEST(Fooling, ZeroPatchRangeAndTiling) {
  const auto m = tiny_model();
  const auto clip = noise_clip(800, 34);
  EXPECT_NEAR(ut::fooling_loss(m, clip, Tensor::zeros({16})).item(), 1.0, 1e-12);
  Rng rng(35);
  for (int i = 0; i < 20; ++i) {
    const double v = ut::fooling_loss(m, clip, random_patch(rng, 16, 0.5)).item();
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  // Patch of length l on a clip of length 2l equals the same audio with the
  // patch written out twice and applied as a length-2l patch.
  const auto p = random_patch(rng, 400, 0.01);
  std::vector<double> twice(p.data().begin(), p.data().end());
  twice.insert(twice.end(), p.data().begin(), p.data().end());
  EXPECT_EQ(ut::fooling_loss(m, clip, p).item(), ut::fooling_loss(m, clip, Tensor::vector(twice)).item());
}

TEST(Fooling, GradientMatchesFiniteDifferences) {
  const auto m = tiny_model();
  const auto clip = noise_clip(500, 36);
  Rng rng(37);
  const auto r = grad::finite_diff_check(
      [&](const Tensor& p) { return ut::fooling_loss(m, clip, p); }, random_patch(rng, 20, 0.01),
      1e-3);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(TotalLoss, Compositions) {
  const auto m = tiny_model();
  const auto a = noise_clip(600, 38), b = noise_clip(600, 39);
  const std::vector<const audio::AudioClip*> batch{&a, &b}, same{&a, &a, &a};
  ut::LossWeights w;
  EXPECT_NEAR(ut::total_loss(m, batch, Tensor::zeros({16}), w).item(), 1.0, 1e-12);

  Rng rng(40);
  const auto p = random_patch(rng, 16, 0.01);
  ut::LossWeights reg_only{0.0, 1.0, ut::LossVariant::exp_tv, true};
  EXPECT_NEAR(ut::total_loss(m, batch, p, reg_only).item(), ut::exp_tv_loss(p).item(), 1e-15);
  ut::LossWeights fool_only{1.0, 0.0, ut::LossVariant::l2, true};
  const double mean_fool =
      (ut::fooling_loss(m, a, p).item() + ut::fooling_loss(m, b, p).item()) / 2;
  EXPECT_NEAR(ut::total_loss(m, batch, p, fool_only).item(), mean_fool, 1e-15);
  EXPECT_NEAR(ut::total_loss(m, same, p, w).item(),
              ut::fooling_loss(m, a, p).item() + 30 * ut::exp_tv_loss(p).item(), 1e-14);
  ut::LossWeights l2w{1.0, 30.0, ut::LossVariant::l2, true};
  EXPECT_EQ(ut::regularizer(p, l2w).item(), ut::l2_loss(p).item());
}

TEST(TotalLoss, BatchGradientMatchesTape) {
  const auto m = tiny_model();
  const auto a = noise_clip(600, 41), b = noise_clip(700, 42);
  const std::vector<const audio::AudioClip*> batch{&a, &b};
  Rng rng(43);
  const auto p = random_patch(rng, 16, 0.01);
  const ut::LossWeights w;
  grad::Tape tape;
  const Tensor v = tape.variable(p);
  const Tensor loss = ut::total_loss(m, batch, v, w);
  tape.backward(loss);
  const std::vector<std::vector<double>> clean{spkmodel::embed(m, a), spkmodel::embed(m, b)};
  const std::vector<std::size_t> phases{0, 0};
  std::vector<double> g;
  const double value = ut::batch_gradient(m, batch, clean, p.data(), w, phases, g);
  EXPECT_NEAR(value, loss.item(), 1e-12);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], v.grad()[i], 1e-12);
}

TEST(AdamStep, FirstStepClampAndZeroGradient) {
  std::vector<double> p(4, 0.0);
  grad::AdamState s(4);
  ut::adam_step(p, std::vector<double>{2.0, -0.5, 1e-3, -7.0}, s, 3e-3, 0.01);
  EXPECT_NEAR(p[0], -3e-3, 1e-8);
  EXPECT_NEAR(p[1], 3e-3, 1e-8);
  EXPECT_NEAR(p[2], -3e-3, 1e-7);
  EXPECT_NEAR(p[3], 3e-3, 1e-8);

  std::vector<double> q{0.009};
  grad::AdamState s2(1);
  ut::adam_step(q, std::vector<double>{-1.0}, s2, 0.011, 0.01);
  EXPECT_EQ(q[0], 0.01);

  std::vector<double> r{0.004, -0.002};
  grad::AdamState s3(2);
  for (int i = 0; i < 50; ++i) ut::adam_step(r, std::vector<double>{0.0, 0.0}, s3, 3e-3, 0.01);
  EXPECT_EQ(r, (std::vector<double>{0.004, -0.002}));

  EXPECT_THROW(ut::adam_step(r, std::vector<double>{std::nan(""), 0.0}, s3, 3e-3, 0.01),
               std::domain_error);
}

TEST(Patch, RoundTripWavAndTruncation) {
  ut::Patch p;
  Rng rng(44);
  p.values.resize(3200);
  for (double& v : p.values) v = rng.uniform(-0.01, 0.01);
  p.values[5] = 0.01;
  p.config_json = ut::to_json(ut::AttackConfig{});
  const auto path = temp_path("p.bin");
  ut::save_patch(p, path);
  const auto back = ut::load_patch(path);
  EXPECT_EQ(back.values, p.values);
  EXPECT_EQ(back.epsilon, p.epsilon);
  EXPECT_EQ(back.config_json, p.config_json);
  EXPECT_EQ(ut::patch_hash(back), ut::patch_hash(p));

  const auto wav = temp_path("p.wav");
  ut::export_patch_wav(p, wav);
  const auto clip = audio::read_wav(wav);
  for (double v : clip.samples) EXPECT_LE(std::lround(std::fabs(v) * 32768), 328);

  fs::resize_file(path, fs::file_size(path) - 8);
  EXPECT_THROW(ut::load_patch(path), FormatError);
}

TEST(AttackConfig, DefaultsJsonAndValidation) {
  const ut::AttackConfig c;
  EXPECT_EQ(c.patch_length, 3200u);
  EXPECT_EQ(c.epsilon, 0.01);
  EXPECT_EQ(c.lr, 3e-3);
  EXPECT_EQ(c.epochs, 250u);
  EXPECT_EQ(c.batch, 64u);
  EXPECT_EQ(c.weights.fooling, 1.0);
  EXPECT_EQ(c.weights.regularizer, 30.0);
  EXPECT_EQ(ut::to_json(ut::attack_config_from_json(ut::to_json(c))), ut::to_json(c));
  auto bad = c;
  bad.weights.regularizer = -1;
  EXPECT_THROW(ut::validate(bad), ConfigError);
  EXPECT_THROW(ut::parse_loss_variant("l1"), ConfigError);
  EXPECT_EQ(ut::parse_loss_variant("l2"), ut::LossVariant::l2);
}

class ToyAttack : public ::testing::Test {
 protected:
  void SetUp() override {
    spkmodel::ModelArch arch;
    arch.convs = {{8, 16, 8}, {8, 8, 4}};
    arch.embed_dim = 8;
    arch.num_classes = 3;
    model = spkmodel::SpeakerModel(arch, {"s0", "s1", "s2"}, 3);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto prof = corpus::generate_speaker(200 + s, "s" + std::to_string(s));
      for (std::uint64_t u = 0; u < 4; ++u) {
        auto c = corpus::synthesize_utterance(prof, 1.0, u);
        c.speaker_id = prof.speaker_id;
        clips.push_back(std::move(c));
      }
    }
    for (const auto& c : clips) ptrs.push_back(&c);
    config.patch_length = 64;
    config.epochs = 10;
    config.batch = 4;
    config.seed = 9;
  }
  spkmodel::SpeakerModel model;
  std::vector<audio::AudioClip> clips;
  std::vector<const audio::AudioClip*> ptrs;
  ut::AttackConfig config;
};

TEST_F(ToyAttack, ClipBoundDecreasingLossDeterminism) {
  const auto a = ut::train_uap(model, ptrs, config);
  ASSERT_EQ(a.state.records.size(), 10u);
  for (double v : a.patch.values) EXPECT_LE(std::fabs(v), 0.01);
  for (const auto& r : a.state.records) EXPECT_LE(r.max_abs, 0.01);
  EXPECT_LT(a.state.records[9].mean_fooling, a.state.records[0].mean_fooling);
  const auto b = ut::train_uap(model, ptrs, config);
  EXPECT_EQ(a.patch.values, b.patch.values);
}

TEST_F(ToyAttack, ZeroInitValidationStartsAtZero) {
  config.init = "zeros";
  config.epochs = 1;
  ut::UapHooks hooks;
  std::vector<double> seen;
  hooks.validate = [&](const std::vector<double>& p) {
    double m = 0;
    for (double v : p) m = std::max(m, std::fabs(v));
    seen.push_back(m);
    return m == 0.0 ? 0.0 : 50.0;
  };
  const auto r = ut::train_uap(model, ptrs, config, hooks);
  ASSERT_FALSE(seen.empty());
  EXPECT_EQ(seen.front(), 0.0);
  EXPECT_EQ(r.state.records[0].val_fr, 0.0);
}

TEST_F(ToyAttack, InterruptAndResumeIsBitExact) {
  config.epochs = 3;
  const auto full = ut::train_uap(model, ptrs, config);
  ut::UapHooks hooks;
  ut::UapTrainState saved;
  hooks.on_interrupt = [&](const ut::UapTrainState& s) { saved = s; };
  hooks.stop_after_batches = 4;
  EXPECT_THROW(ut::train_uap(model, ptrs, config, hooks), ut::Interrupted);
  const auto path = temp_path("ckpt.bin");
  ut::save_uap_state(saved, path);
  const auto restored = ut::load_uap_state(path);
  const auto resumed = ut::train_uap(model, ptrs, config, {}, &restored);
  EXPECT_EQ(resumed.patch.values, full.patch.values);
  ASSERT_EQ(resumed.state.records.size(), full.state.records.size());
  for (std::size_t i = 0; i < full.state.records.size(); ++i) {
    EXPECT_EQ(resumed.state.records[i].mean_fooling, full.state.records[i].mean_fooling);
  }

  auto other = config;
  other.lr = 1e-3;
  EXPECT_THROW(ut::train_uap(model, ptrs, other, {}, &restored), ConfigError);
}

TEST_F(ToyAttack, RoundRobinSelection) {
  const auto picked = ut::select_round_robin(ptrs, 5);
  ASSERT_EQ(picked.size(), 5u);
  EXPECT_EQ(*picked[0]->speaker_id, "s0");
  EXPECT_EQ(*picked[1]->speaker_id, "s1");
  EXPECT_EQ(*picked[2]->speaker_id, "s2");
  EXPECT_EQ(*picked[3]->speaker_id, "s0");
  EXPECT_EQ(picked[3], ptrs[1]);
  EXPECT_EQ(ut::select_round_robin(ptrs, 100).size(), ptrs.size());
}

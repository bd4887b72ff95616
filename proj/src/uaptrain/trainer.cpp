#include "uapforge/uaptrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "binio.hpp"
#include "uapforge/grad/ops.hpp"
#include "uapforge/parallel.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::uaptrain {

using grad::Tensor;

namespace {

constexpr std::string_view kStateMagic = "UAPTRCKP";
constexpr std::uint32_t kStateVersion = 1;

// Config identity for resuming: everything but the epoch budget must match.
std::string resume_key(const std::string& config_json) {
  AttackConfig c = attack_config_from_json(config_json);
  c.epochs = 0;
  return to_json(c);
}

}  // namespace

void adam_step(std::vector<double>& patch, std::span<const double> grad, grad::AdamState& state,
               double lr, double epsilon) {
  grad::adam_update(patch, grad, state, lr);
  for (double& v : patch) v = std::clamp(v, -epsilon, epsilon);
}

std::vector<const audio::AudioClip*> select_round_robin(
    std::span<const audio::AudioClip* const> clips, std::size_t count) {
  std::vector<std::vector<const audio::AudioClip*>> per_speaker;
  std::map<std::string, std::size_t> slot;
  for (const auto* c : clips) {
    const std::string id = c->speaker_id.value_or("");
    auto [it, fresh] = slot.emplace(id, per_speaker.size());
    if (fresh) per_speaker.emplace_back();
    per_speaker[it->second].push_back(c);
  }
  std::vector<const audio::AudioClip*> out;
  for (std::size_t round = 0; out.size() < count; ++round) {
    bool any = false;
    for (const auto& list : per_speaker) {
      if (round < list.size() && out.size() < count) {
        out.push_back(list[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

double batch_gradient(const spkmodel::SpeakerModel& model,
                      std::span<const audio::AudioClip* const> batch,
                      std::span<const std::vector<double>> clean_embeddings,
                      std::span<const double> patch, const LossWeights& weights,
                      std::span<const std::size_t> phases, std::vector<double>& grad,
                      double* fooling_mean, double* regularizer_value) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const std::size_t l = patch.size();
  std::vector<std::vector<double>> grads(batch.size());
  std::vector<double> values(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    grad::Tape tape;
    const Tensor p = tape.variable({l}, {patch.begin(), patch.end()});
    const Tensor f = fooling_loss(model, batch[i]->samples, clean_embeddings[i], p,
                                  phases.empty() ? 0 : phases[i]);
    tape.backward(f);
    values[i] = f.item();
    grads[i].assign(p.grad().begin(), p.grad().end());
  });

  grad::Tape tape;
  const Tensor p = tape.variable({l}, {patch.begin(), patch.end()});
  const Tensor reg = regularizer(p, weights);
  tape.backward(reg);

  grad.assign(l, 0.0);
  double fool = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    fool += values[i];
    for (std::size_t k = 0; k < l; ++k) grad[k] += grads[i][k];
  }
  const double n = static_cast<double>(batch.size());
  fool /= n;
  const auto rg = p.grad();
  for (std::size_t k = 0; k < l; ++k) {
    grad[k] = weights.fooling * (grad[k] / n) + weights.regularizer * rg[k];
  }
  if (fooling_mean) *fooling_mean = fool;
  if (regularizer_value) *regularizer_value = reg.item();
  return weights.fooling * fool + weights.regularizer * reg.item();
}

UapResult train_uap(const spkmodel::SpeakerModel& model,
                    std::span<const audio::AudioClip* const> clips, const AttackConfig& config,
                    const UapHooks& hooks, const UapTrainState* resume) {
  validate(config);
  if (clips.empty()) throw ConfigError("no training clips for the patch");

  UapTrainState state;
  state.config_json = to_json(config);
  if (resume) {
    if (resume_key(resume->config_json) != resume_key(state.config_json)) {
      throw ConfigError("checkpoint was written under a different attack config");
    }
    if (resume->patch.size() != config.patch_length) {
      throw FormatError("checkpoint patch length does not match the config");
    }
    const std::string json = state.config_json;
    state = *resume;
    state.config_json = json;
  } else {
    state.patch.assign(config.patch_length, 0.0);
    if (config.init == "uniform") {
      Rng rng(mix_seed(config.seed, 0x1A17));
      for (double& v : state.patch) v = config.init_scale * rng.uniform(-config.epsilon, config.epsilon);
    }
    state.adam = grad::AdamState(config.patch_length);
  }

  std::vector<const audio::AudioClip*> train(clips.begin(), clips.end());
  if (config.max_train_clips > 0 && config.max_train_clips < train.size()) {
    train = select_round_robin(train, config.max_train_clips);
  }
  for (const auto* c : train) {
    if (c->size() < model.arch().min_input_length()) {
      throw ConfigError("training clip shorter than the model's receptive field");
    }
  }
  std::vector<std::vector<double>> clean(train.size());
  parallel_for(train.size(), [&](std::size_t i) { clean[i] = spkmodel::embed(model, *train[i]); });

  const std::size_t n = train.size();
  const std::size_t nbatches = (n + config.batch - 1) / config.batch;
  std::size_t processed = 0;
  std::vector<double> g;

  for (; state.epoch < config.epochs; ++state.epoch) {
    if (state.batch_index == 0) {
      state.fooling_sum = state.regularizer_sum = 0.0;
      state.samples_seen = state.batches_seen = 0;
      state.epoch_val_fr = hooks.validate ? hooks.validate(state.patch)
                                          : std::numeric_limits<double>::quiet_NaN();
    }
    Rng rng(mix_seed(config.seed, 0xA000 + state.epoch));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::size_t> phase(n, 0);
    if (config.random_phase) {
      for (auto& p : phase) p = rng.index(config.patch_length);
    }

    for (; state.batch_index < nbatches; ++state.batch_index) {
      const bool stop_requested = hooks.stop && hooks.stop->load();
      if (stop_requested || (hooks.stop_after_batches && processed >= hooks.stop_after_batches)) {
        if (hooks.on_interrupt) hooks.on_interrupt(state);
        throw Interrupted("patch training interrupted in epoch " + std::to_string(state.epoch) +
                          " before batch " + std::to_string(state.batch_index));
      }
      const std::size_t b0 = state.batch_index * config.batch;
      const std::size_t nb = std::min(config.batch, n - b0);
      std::vector<const audio::AudioClip*> batch(nb);
      std::vector<std::vector<double>> batch_clean(nb);
      std::vector<std::size_t> batch_phase(nb);
      for (std::size_t j = 0; j < nb; ++j) {
        batch[j] = train[order[b0 + j]];
        batch_clean[j] = clean[order[b0 + j]];
        batch_phase[j] = phase[order[b0 + j]];
      }
      double fool = 0.0, reg = 0.0;
      batch_gradient(model, batch, batch_clean, state.patch, config.weights, batch_phase, g, &fool,
                     &reg);
      adam_step(state.patch, g, state.adam, config.lr, config.epsilon);
      for (double v : state.patch) {
        if (!(std::fabs(v) <= config.epsilon)) {
          throw std::logic_error("patch left the clip bound after an optimizer step");
        }
      }
      state.fooling_sum += fool * static_cast<double>(nb);
      state.regularizer_sum += reg;
      state.samples_seen += nb;
      ++state.batches_seen;
      ++processed;
    }

    UapEpochRecord rec;
    rec.epoch = state.epoch;
    rec.mean_fooling = state.fooling_sum / static_cast<double>(state.samples_seen);
    rec.mean_regularizer = state.regularizer_sum / static_cast<double>(state.batches_seen);
    rec.mean_total =
        config.weights.fooling * rec.mean_fooling + config.weights.regularizer * rec.mean_regularizer;
    rec.val_fr = state.epoch_val_fr;
    for (double v : state.patch) rec.max_abs = std::max(rec.max_abs, std::fabs(v));
    state.records.push_back(rec);
    state.batch_index = 0;
    if (hooks.on_epoch) {
      UapTrainState snapshot = state;
      ++snapshot.epoch;
      hooks.on_epoch(snapshot);
    }
  }
  state.final_val_fr =
      hooks.validate ? hooks.validate(state.patch) : std::numeric_limits<double>::quiet_NaN();

  UapResult result;
  result.patch.values = state.patch;
  result.patch.epsilon = config.epsilon;
  result.patch.config_json = state.config_json;
  result.state = std::move(state);
  return result;
}

void save_uap_state(const UapTrainState& s, const std::filesystem::path& path) {
  binio::Writer w;
  w.bytes(kStateMagic);
  w.u32(kStateVersion);
  w.str(s.config_json);
  w.u64(s.epoch);
  w.u64(s.batch_index);
  w.f64(s.fooling_sum);
  w.f64(s.regularizer_sum);
  w.u64(s.samples_seen);
  w.u64(s.batches_seen);
  w.f64(s.epoch_val_fr);
  w.f64(s.final_val_fr);
  w.u64(s.patch.size());
  w.f64s(s.patch.data(), s.patch.size());
  w.u64(s.adam.step);
  w.f64s(s.adam.m.data(), s.adam.m.size());
  w.f64s(s.adam.v.data(), s.adam.v.size());
  w.u64(s.records.size());
  for (const auto& r : s.records) {
    w.u64(r.epoch);
    w.f64(r.mean_fooling);
    w.f64(r.mean_regularizer);
    w.f64(r.mean_total);
    w.f64(r.val_fr);
    w.f64(r.max_abs);
  }
  w.save(path);
}

UapTrainState load_uap_state(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  if (r.remaining() < kStateMagic.size() || r.bytes(kStateMagic.size()) != kStateMagic) {
    throw FormatError(path.string() + ": not a patch training checkpoint");
  }
  if (const auto v = r.u32(); v != kStateVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  UapTrainState s;
  s.config_json = r.str();
  s.epoch = r.u64();
  s.batch_index = r.u64();
  s.fooling_sum = r.f64();
  s.regularizer_sum = r.f64();
  s.samples_seen = r.u64();
  s.batches_seen = r.u64();
  s.epoch_val_fr = r.f64();
  s.final_val_fr = r.f64();
  const std::size_t l = r.u64();
  s.patch = r.f64s(l);
  s.adam.step = r.u64();
  s.adam.m = r.f64s(l);
  s.adam.v = r.f64s(l);
  s.records.resize(r.u64());
  for (auto& rec : s.records) {
    rec.epoch = r.u64();
    rec.mean_fooling = r.f64();
    rec.mean_regularizer = r.f64();
    rec.mean_total = r.f64();
    rec.val_fr = r.f64();
    rec.max_abs = r.f64();
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes");
  return s;
}

}  // namespace uapforge::uaptrain

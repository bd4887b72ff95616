#include "uapforge/spkmodel/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "codec.hpp"
#include "uapforge/error.hpp"
#include "uapforge/grad/ops.hpp"
#include "uapforge/parallel.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::spkmodel {

using grad::Tensor;

namespace {

constexpr std::string_view kStateMagic = "UAPFMTRN";
constexpr std::uint32_t kStateVersion = 1;

struct SampleResult {
  std::vector<double> grad;
  double loss = 0.0;
  bool correct = false;
};

SampleResult run_sample(const SpeakerModel& model, std::vector<double> crop, std::size_t label) {
  grad::Tape tape;
  std::vector<Tensor> vars;
  vars.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) vars.push_back(tape.variable(p));
  const Tensor raw = model.embedding(Tensor::vector(std::move(crop)), vars);
  const Tensor logits = model.logits(raw, vars);
  const Tensor loss = grad::softmax_cross_entropy(logits, label);
  tape.backward(loss);

  SampleResult r;
  r.loss = loss.item();
  const auto z = logits.data();
  r.correct = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == label;
  r.grad.reserve(model.num_parameters());
  for (const auto& v : vars) r.grad.insert(r.grad.end(), v.grad().begin(), v.grad().end());
  return r;
}

}  // namespace

ModelTrainState train_model(const std::vector<const audio::AudioClip*>& clips,
                            const TrainModelConfig& config, const ModelTrainState* resume,
                            const ModelEpochHook& on_epoch) {
  if (clips.empty()) throw ConfigError("train split is empty");
  if (config.batch == 0) throw ConfigError("model batch size must be positive");
  std::set<std::string> ids;
  for (const auto* c : clips) {
    if (!c->speaker_id) throw ConfigError("training clip without speaker id");
    ids.insert(*c->speaker_id);
  }
  const std::vector<std::string> labels(ids.begin(), ids.end());
  std::map<std::string, std::size_t> label_of;
  for (std::size_t i = 0; i < labels.size(); ++i) label_of[labels[i]] = i;

  const std::size_t crop_len = audio::seconds_to_samples(config.crop_s);
  const std::size_t pad_len = audio::seconds_to_samples(config.pad_to_s);
  if (crop_len < config.arch.min_input_length() || crop_len > pad_len) {
    throw ConfigError("crop length must lie between the receptive field and the padded length");
  }

  ModelTrainState state;
  if (resume) {
    state = *resume;
    if (state.model.labels() != labels) {
      throw ConfigError("resume checkpoint was trained on a different speaker set");
    }
  } else {
    state.model = SpeakerModel(config.arch, labels, config.seed);
    state.adam = grad::AdamState(state.model.num_parameters());
  }

  for (std::size_t epoch = state.epochs_done; epoch < config.epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, 0xE000 + epoch));
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::size_t> starts(order.size());
    for (auto& s : starts) s = rng.index(pad_len - crop_len + 1);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch) {
      const std::size_t nb = std::min(config.batch, order.size() - b0);
      std::vector<SampleResult> results(nb);
      parallel_for(nb, [&](std::size_t j) {
        const audio::AudioClip& clip = *clips[order[b0 + j]];
        const std::size_t len = std::min(clip.size(), pad_len);
        std::vector<double> crop(crop_len);
        for (std::size_t i = 0; i < crop_len; ++i) crop[i] = clip.samples[(starts[b0 + j] + i) % len];
        results[j] = run_sample(state.model, std::move(crop), label_of.at(*clip.speaker_id));
      });

      std::vector<double> g(state.model.num_parameters(), 0.0);
      for (const auto& r : results) {
        if (!std::isfinite(r.loss)) {
          throw Error("model training diverged in epoch " + std::to_string(epoch) +
                      " (non-finite loss)");
        }
        loss_sum += r.loss;
        correct += r.correct;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += r.grad[i];
      }
      for (double& x : g) x /= static_cast<double>(nb);
      std::vector<double> flat = state.model.flat_parameters();
      try {
        grad::adam_update(flat, g, state.adam, config.lr);
      } catch (const std::domain_error&) {
        throw Error("model training diverged in epoch " + std::to_string(epoch) +
                    " (NaN gradient)");
      }
      state.model.set_flat_parameters(flat);
    }
    const double n = static_cast<double>(order.size());
    state.curve.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
    state.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
  return state;
}

void save_train_state(const ModelTrainState& state, const std::filesystem::path& path) {
  binio::Writer w;
  w.bytes(kStateMagic);
  w.u32(kStateVersion);
  w.u64(state.epochs_done);
  w.u64(state.curve.size());
  for (const auto& r : state.curve) {
    w.u64(r.epoch);
    w.f64(r.mean_loss);
    w.f64(r.train_accuracy);
  }
  w.u64(state.adam.step);
  w.u64(state.adam.m.size());
  w.f64s(state.adam.m.data(), state.adam.m.size());
  w.f64s(state.adam.v.data(), state.adam.v.size());
  w.bytes(encode_model(state.model));
  w.save(path);
}

ModelTrainState load_train_state(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  if (r.remaining() < kStateMagic.size() || r.bytes(kStateMagic.size()) != kStateMagic) {
    throw FormatError(path.string() + ": not a model training checkpoint");
  }
  if (const auto v = r.u32(); v != kStateVersion) {
    throw FormatError(path.string() + ": unsupported training checkpoint version " +
                      std::to_string(v));
  }
  ModelTrainState s;
  s.epochs_done = r.u64();
  s.curve.resize(r.u64());
  for (auto& c : s.curve) {
    c.epoch = r.u64();
    c.mean_loss = r.f64();
    c.train_accuracy = r.f64();
  }
  s.adam.step = r.u64();
  const std::size_t n = r.u64();
  s.adam.m = r.f64s(n);
  s.adam.v = r.f64s(n);
  s.model = decode_model(r).model;
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes");
  if (s.model.num_parameters() != n) {
    throw FormatError(path.string() + ": optimizer state does not match the model");
  }
  return s;
}

}  // namespace uapforge::spkmodel

#include "uapforge/uaptrain/patch.hpp"

#include <cmath>

#include <json.hpp>

#include "binio.hpp"
#include "uapforge/audio/wav.hpp"
#include "uapforge/error.hpp"
#include "uapforge/hash.hpp"

namespace uapforge::uaptrain {

namespace {

constexpr std::string_view kMagic = "UAPPATCH";
using ordered_json = nlohmann::ordered_json;

}  // namespace

void validate(const AttackConfig& c) {
  if (c.patch_length < 2) throw ConfigError("attack.patch_length must be at least 2");
  if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) throw ConfigError("attack.epsilon must lie in (0, 1]");
  if (!(c.lr > 0.0)) throw ConfigError("attack.lr must be positive");
  if (c.batch == 0) throw ConfigError("attack.batch must be positive");
  if (!(c.weights.fooling >= 0.0 && c.weights.regularizer >= 0.0)) {
    throw ConfigError("attack loss weights must be non-negative");
  }
  if (c.init != "zeros" && c.init != "uniform") {
    throw ConfigError("attack.init must be zeros or uniform, got '" + c.init + "'");
  }
  if (!(c.init_scale >= 0.0 && c.init_scale <= 1.0)) {
    throw ConfigError("attack.init_scale must lie in [0, 1]");
  }
}

std::string to_json(const AttackConfig& c) {
  ordered_json j;
  j["patch_length"] = c.patch_length;
  j["epsilon"] = c.epsilon;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["w_fooling"] = c.weights.fooling;
  j["w_reg"] = c.weights.regularizer;
  j["loss"] = to_string(c.weights.variant);
  j["circular_tv"] = c.weights.circular_tv;
  j["init"] = c.init;
  j["init_scale"] = c.init_scale;
  j["random_phase"] = c.random_phase;
  j["max_train_clips"] = c.max_train_clips;
  j["seed"] = c.seed;
  return j.dump();
}

AttackConfig attack_config_from_json(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    AttackConfig c;
    c.patch_length = j.at("patch_length").get<std::size_t>();
    c.epsilon = j.at("epsilon").get<double>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.weights.fooling = j.at("w_fooling").get<double>();
    c.weights.regularizer = j.at("w_reg").get<double>();
    c.weights.variant = parse_loss_variant(j.at("loss").get<std::string>());
    c.weights.circular_tv = j.at("circular_tv").get<bool>();
    c.init = j.at("init").get<std::string>();
    c.init_scale = j.at("init_scale").get<double>();
    c.random_phase = j.at("random_phase").get<bool>();
    c.max_train_clips = j.at("max_train_clips").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad attack config JSON: ") + e.what());
  }
}

void save_patch(const Patch& patch, const std::filesystem::path& path) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kPatchFormatVersion);
  w.u64(patch.values.size());
  w.f64(patch.epsilon);
  w.u32(static_cast<std::uint32_t>(patch.sample_rate));
  w.str(patch.config_json);
  w.f64s(patch.values.data(), patch.values.size());
  w.save(path);
}

Patch load_patch(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw FormatError(path.string() + ": not a patch file");
  }
  if (const auto v = r.u32(); v != kPatchFormatVersion) {
    throw FormatError(path.string() + ": unsupported patch version " + std::to_string(v));
  }
  Patch p;
  const std::uint64_t n = r.u64();
  p.epsilon = r.f64();
  p.sample_rate = static_cast<int>(r.u32());
  p.config_json = r.str();
  if (r.remaining() != n * 8) {
    throw FormatError(path.string() + ": header announces " + std::to_string(n) +
                      " values but the payload holds " + std::to_string(r.remaining() / 8));
  }
  p.values = r.f64s(n);
  if (p.sample_rate != audio::kSampleRate) {
    throw FormatError(path.string() + ": patch sample rate " + std::to_string(p.sample_rate));
  }
  for (double v : p.values) {
    if (!(std::fabs(v) <= p.epsilon)) {
      throw FormatError(path.string() + ": value outside the clip bound");
    }
  }
  return p;
}

void export_patch_wav(const Patch& patch, const std::filesystem::path& path) {
  audio::write_wav(patch.values, path);
}

std::string patch_hash(const Patch& patch) {
  Fnv1a h;
  h.update_u64(patch.values.size());
  h.update(std::span<const double>(&patch.epsilon, 1));
  h.update(patch.values);
  return h.hex();
}

}  // namespace uapforge::uaptrain

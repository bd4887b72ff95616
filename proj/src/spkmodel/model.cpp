#include "uapforge/spkmodel/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "codec.hpp"
#include "uapforge/error.hpp"
#include "uapforge/grad/ops.hpp"
#include "uapforge/hash.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::spkmodel {

using grad::Shape;
using grad::Tensor;

namespace {

constexpr std::string_view kMagic = "UAPFMODL";

void check_arch(const ModelArch& arch) {
  if (arch.convs.empty()) throw ConfigError("model needs at least one conv layer");
  for (const auto& c : arch.convs) {
    if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
      throw ConfigError("conv layer with zero channels, kernel or stride");
    }
  }
  if (arch.embed_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (!(arch.input_gain > 0.0 && std::isfinite(arch.input_gain))) {
    throw ConfigError("input gain must be positive");
  }
  if (!(arch.preemphasis >= 0.0 && arch.preemphasis < 1.0)) {
    throw ConfigError("pre-emphasis coefficient must lie in [0, 1)");
  }
}

}  // namespace

std::size_t ModelArch::min_input_length() const {
  std::size_t len = 1;
  for (auto it = convs.rbegin(); it != convs.rend(); ++it) len = (len - 1) * it->stride + it->kernel;
  return preemphasis > 0.0 ? len + 1 : len;
}

std::vector<Shape> SpeakerModel::parameter_shapes(const ModelArch& arch) {
  std::vector<Shape> shapes;
  std::size_t cin = 1;
  for (const auto& c : arch.convs) {
    shapes.push_back({c.out_channels, cin, c.kernel});
    shapes.push_back({c.out_channels});
    cin = c.out_channels;
  }
  shapes.push_back({arch.embed_dim, 2 * cin});
  shapes.push_back({arch.embed_dim});
  shapes.push_back({arch.num_classes, arch.embed_dim});
  shapes.push_back({arch.num_classes});
  return shapes;
}

SpeakerModel::SpeakerModel(ModelArch arch, std::vector<std::string> labels, std::uint64_t seed)
    : arch_(std::move(arch)), labels_(std::move(labels)) {
  arch_.num_classes = labels_.size();
  check_arch(arch_);
  Rng rng(mix_seed(seed, 0x1417));
  for (const Shape& s : parameter_shapes(arch_)) {
    std::vector<double> v(grad::numel(s), 0.0);
    if (s.size() >= 2) {
      const std::size_t receptive = s.size() == 3 ? s[2] : 1;
      const double fan_in = static_cast<double>(s[1] * receptive);
      const double fan_out = static_cast<double>(s[0] * receptive);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& x : v) x = rng.uniform(-limit, limit);
    }
    params_.emplace_back(s, std::move(v));
  }
}

std::size_t SpeakerModel::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

std::vector<double> SpeakerModel::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(num_parameters());
  for (const auto& p : params_) flat.insert(flat.end(), p.data().begin(), p.data().end());
  return flat;
}

void SpeakerModel::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != num_parameters()) {
    throw std::invalid_argument("set_flat_parameters: expected " +
                                std::to_string(num_parameters()) + " values, got " +
                                std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& p : params_) {
    const std::size_t n = p.size();
    p = Tensor(p.shape(), std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(off),
                                              flat.begin() + static_cast<std::ptrdiff_t>(off + n)));
    off += n;
  }
}

void SpeakerModel::set_parameters(std::vector<Tensor> params) {
  const auto shapes = parameter_shapes(arch_);
  if (params.size() != shapes.size()) throw std::invalid_argument("wrong parameter count");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      throw std::invalid_argument("parameter " + std::to_string(i) + " has shape " +
                                  grad::to_string(params[i].shape()) + ", expected " +
                                  grad::to_string(shapes[i]));
    }
  }
  params_ = std::move(params);
}

Tensor SpeakerModel::embedding(const Tensor& waveform, std::span<const Tensor> params) const {
  if (waveform.rank() != 1) throw std::invalid_argument("embedding expects a rank-1 waveform");
  if (waveform.size() < arch_.min_input_length()) {
    throw std::invalid_argument("waveform of " + std::to_string(waveform.size()) +
                                " samples is shorter than the model's receptive field (" +
                                std::to_string(arch_.min_input_length()) + ")");
  }
  Tensor x = grad::reshape(waveform, {1, waveform.size()});
  if (arch_.preemphasis > 0.0) {
    x = grad::conv1d(x, Tensor({1, 1, 2}, {-arch_.preemphasis, 1.0}), 1);
  }
  if (arch_.input_gain != 1.0) x = x * arch_.input_gain;
  for (std::size_t i = 0; i < arch_.convs.size(); ++i) {
    x = grad::tanh(grad::conv1d(x, params[2 * i], params[2 * i + 1], arch_.convs[i].stride));
  }
  const std::size_t h = 2 * arch_.convs.size();
  Tensor pooled = grad::stats_pool(x);
  Tensor e = grad::matmul(params[h], grad::reshape(pooled, {pooled.size(), 1}));
  return grad::add(grad::reshape(e, {arch_.embed_dim}), params[h + 1]);
}

Tensor SpeakerModel::logits(const Tensor& raw_embedding, std::span<const Tensor> params) const {
  const std::size_t c = 2 * arch_.convs.size() + 2;
  Tensor z = grad::matmul(params[c], grad::reshape(raw_embedding, {arch_.embed_dim, 1}));
  return grad::add(grad::reshape(z, {arch_.num_classes}), params[c + 1]);
}

Tensor embed_tensor(const SpeakerModel& model, const Tensor& waveform) {
  return grad::normalize(model.embedding(waveform));
}

std::vector<double> embed(const SpeakerModel& model, std::span<const double> samples) {
  const Tensor e = embed_tensor(model, Tensor::vector({samples.begin(), samples.end()}));
  return {e.data().begin(), e.data().end()};
}

std::vector<double> embed(const SpeakerModel& model, const audio::AudioClip& clip) {
  return embed(model, std::span<const double>(clip.samples));
}

std::string encode_model(const SpeakerModel& model, std::uint32_t version) {
  if (version != 1 && version != 2) {
    throw std::invalid_argument("cannot write model format version " + std::to_string(version));
  }
  const ModelArch& a = model.arch();
  if (version == 1 && (a.input_gain != 1.0 || a.preemphasis != 0.0)) {
    throw std::invalid_argument("format version 1 cannot store input gain or pre-emphasis");
  }
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(version);
  w.u32(static_cast<std::uint32_t>(a.convs.size()));
  for (const auto& c : a.convs) {
    w.u64(c.out_channels);
    w.u64(c.kernel);
    w.u64(c.stride);
  }
  w.u64(a.embed_dim);
  w.u64(a.num_classes);
  if (version >= 2) {
    w.f64(a.input_gain);
    w.f64(a.preemphasis);
    w.u32(static_cast<std::uint32_t>(model.labels().size()));
    for (const auto& l : model.labels()) w.str(l);
  }
  w.u32(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.u64(p.size());
    w.f64s(p.data().data(), p.size());
  }
  return w.buffer();
}

void save_model(const SpeakerModel& model, const std::filesystem::path& path,
                std::uint32_t version) {
  const std::string bytes = encode_model(model, version);
  binio::Writer w;
  w.bytes(bytes);
  w.save(path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  LoadedModel out = decode_model(r);
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after parameters");
  return out;
}

LoadedModel decode_model(binio::Reader& r) {
  const std::filesystem::path path(r.name());
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw FormatError(path.string() + ": not a model checkpoint");
  }
  LoadedModel out;
  const std::uint32_t version = r.u32();
  if (version == 0 || version > kModelFormatVersion) {
    throw FormatError(path.string() + ": unsupported model checkpoint version " +
                      std::to_string(version));
  }
  ModelArch arch;
  arch.convs.resize(r.u32());
  for (auto& c : arch.convs) {
    c.out_channels = r.u64();
    c.kernel = r.u64();
    c.stride = r.u64();
  }
  arch.embed_dim = r.u64();
  arch.num_classes = r.u64();
  std::vector<std::string> labels;
  if (version >= 2) {
    arch.input_gain = r.f64();
    arch.preemphasis = r.f64();
    labels.resize(r.u32());
    for (auto& l : labels) l = r.str();
    if (labels.size() != arch.num_classes) {
      throw FormatError(path.string() + ": label count does not match the classifier");
    }
  } else {
    // v1 predates the fixed input stage.
    arch.input_gain = 1.0;
    arch.preemphasis = 0.0;
    for (std::size_t i = 0; i < arch.num_classes; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "class_%03zu", i);
      labels.emplace_back(buf);
    }
    out.warnings.push_back("version 1 checkpoint has no speaker labels; using class indices");
  }
  try {
    check_arch(arch);
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const auto shapes = SpeakerModel::parameter_shapes(arch);
  if (r.u32() != shapes.size()) throw FormatError(path.string() + ": wrong parameter count");
  std::vector<Tensor> params;
  for (const Shape& s : shapes) {
    const std::uint64_t n = r.u64();
    if (n != grad::numel(s)) {
      throw FormatError(path.string() + ": parameter length " + std::to_string(n) +
                        " does not match layout " + grad::to_string(s));
    }
    params.emplace_back(s, r.f64s(n));
  }
  out.model = SpeakerModel(arch, std::move(labels), 0);
  out.model.set_parameters(std::move(params));
  return out;
}

std::string model_hash(const SpeakerModel& model) {
  Fnv1a h;
  for (const auto& c : model.arch().convs) {
    h.update_u64(c.out_channels);
    h.update_u64(c.kernel);
    h.update_u64(c.stride);
  }
  h.update_u64(model.arch().embed_dim);
  h.update(std::span<const double>(&model.arch().input_gain, 1));
  h.update(std::span<const double>(&model.arch().preemphasis, 1));
  for (const auto& l : model.labels()) {
    h.update(l);
    h.update_u64(0);
  }
  h.update(model.flat_parameters());
  return h.hex();
}

}  // namespace uapforge::spkmodel

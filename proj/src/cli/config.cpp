#include "uapforge/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "uapforge/error.hpp"

namespace uapforge::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + what);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    bad(key, v, "a non-negative integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(static_cast<std::conditional_t<std::is_floating_point_v<T>, double, std::uint64_t>>(v[i]));
  }
  return out;
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define UF_DOUBLE(NAME, FIELD)                                                          \
  Key{NAME, [](const RunConfig& c) { return fmt(static_cast<double>(c.FIELD)); },       \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }}
#define UF_SIZE(NAME, FIELD)                                                              \
  Key{NAME, [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); }, \
      [](RunConfig& c, const std::string& k, const std::string& v) {                      \
        c.FIELD = static_cast<decltype(c.FIELD)>(to_u64(k, v));                           \
      }}
#define UF_BOOL(NAME, FIELD)                                         \
  Key{NAME, [](const RunConfig& c) { return fmt(c.FIELD); },         \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_bool(k, v); }}
#define UF_STRING(NAME, FIELD)                                       \
  Key{NAME, [](const RunConfig& c) { return std::string(c.FIELD); }, \
      [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      UF_STRING("corpus.source", corpus.source),
      UF_SIZE("corpus.n_speakers", corpus.synthetic.n_speakers),
      UF_SIZE("corpus.utts_per_speaker", corpus.synthetic.utts_per_speaker),
      UF_DOUBLE("corpus.min_duration_s", corpus.synthetic.min_duration_s),
      UF_DOUBLE("corpus.max_duration_s", corpus.synthetic.max_duration_s),
      Key{"corpus.test_speakers",
          [](const RunConfig& c) { return join(c.corpus.synthetic.test_speakers); },
          [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.synthetic.test_speakers.clear();
            for (const auto& s : split_list(v)) {
              c.corpus.synthetic.test_speakers.push_back(to_u64(k, s));
            }
          }},
      UF_SIZE("corpus.val_per_speaker", corpus.synthetic.val_per_speaker),
      UF_SIZE("corpus.long_clips_per_test_speaker", corpus.synthetic.long_clips_per_test_speaker),
      UF_DOUBLE("corpus.test_fraction", corpus.ingest.test_fraction),
      UF_SIZE("corpus.ingest_val_per_speaker", corpus.ingest.val_per_speaker),
      UF_BOOL("corpus.write_wavs", corpus.write_wavs),

      UF_DOUBLE("preprocess.target_lufs", preprocess.target_lufs),
      UF_DOUBLE("preprocess.pad_to_s", preprocess.pad_to_s),
      UF_DOUBLE("preprocess.max_failure_fraction", preprocess.max_failure_fraction),

      UF_SIZE("model.epochs", model.train.epochs),
      UF_DOUBLE("model.lr", model.train.lr),
      UF_SIZE("model.batch", model.train.batch),
      UF_DOUBLE("model.crop_s", model.train.crop_s),
      UF_SIZE("model.embed_dim", model.train.arch.embed_dim),
      UF_DOUBLE("model.input_gain", model.train.arch.input_gain),
      UF_DOUBLE("model.preemphasis", model.train.arch.preemphasis),
      UF_DOUBLE("model.accuracy_gate", model.accuracy_gate),

      UF_SIZE("attack.patch_length", attack.config.patch_length),
      UF_DOUBLE("attack.epsilon", attack.config.epsilon),
      UF_DOUBLE("attack.lr", attack.config.lr),
      UF_SIZE("attack.epochs", attack.config.epochs),
      UF_SIZE("attack.batch", attack.config.batch),
      UF_DOUBLE("attack.w_fooling", attack.config.weights.fooling),
      UF_DOUBLE("attack.w_regularizer", attack.config.weights.regularizer),
      Key{"attack.loss",
          [](const RunConfig& c) { return uaptrain::to_string(c.attack.config.weights.variant); },
          [](RunConfig& c, const std::string&, const std::string& v) {
            c.attack.config.weights.variant = uaptrain::parse_loss_variant(v);
          }},
      UF_BOOL("attack.circular_tv", attack.config.weights.circular_tv),
      UF_STRING("attack.init", attack.config.init),
      UF_DOUBLE("attack.init_scale", attack.config.init_scale),
      UF_BOOL("attack.random_phase", attack.config.random_phase),
      UF_SIZE("attack.max_train_clips", attack.config.max_train_clips),
      UF_SIZE("attack.val_clips", attack.val_clips),

      Key{"eval.lengths",
          [](const RunConfig& c) { return join(c.eval.lengths_s); },
          [](RunConfig& c, const std::string& k, const std::string& v) {
            c.eval.lengths_s.clear();
            for (const auto& s : split_list(v)) c.eval.lengths_s.push_back(to_double(k, s));
          }},
      UF_SIZE("eval.clips_per_length", eval.clips_per_length),
      UF_SIZE("eval.enroll_count", eval.enroll_count),
      UF_SIZE("eval.eval_count", eval.eval_count),
      UF_SIZE("eval.bins", eval.bins),
      UF_BOOL("eval.normalize_enrollment", eval.normalize_enrollment),
      UF_DOUBLE("eval.match_tolerance", eval.match_tolerance),

      UF_SIZE("run.seed", seed),
      Key{"run.out", [](const RunConfig& c) { return c.out.string(); },
          [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
  };
  return table;
}

#undef UF_DOUBLE
#undef UF_SIZE
#undef UF_BOOL
#undef UF_STRING

}  // namespace

void set_value(RunConfig& config, const std::string& dotted_key, const std::string& value) {
  const auto& table = keys();
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const Key& k) { return dotted_key == k.name; });
  if (it == table.end()) throw ConfigError("unknown config key '" + dotted_key + "'");
  it->set(config, dotted_key, trim(value));
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line, section;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      static const char* sections[] = {"corpus", "preprocess", "model", "attack", "eval", "run"};
      if (std::find(std::begin(sections), std::end(sections), section) == std::end(sections)) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    try {
      set_value(base, section + "." + trim(std::string_view(t).substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const RunConfig& config) {
  std::string out, section;
  for (const auto& k : keys()) {
    const std::string name = k.name;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + k.get(config) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) {
    if (std::string_view(k.name) == "run.out") continue;
    out.emplace_back(k.name, k.get(config));
  }
  return out;
}

void resolve(RunConfig& c) {
  c.corpus.synthetic.seed = c.seed;
  c.model.train.seed = c.seed;
  c.attack.config.seed = c.seed;
  c.model.train.pad_to_s = c.preprocess.pad_to_s;
  uaptrain::validate(c.attack.config);
  if (!(c.preprocess.pad_to_s > 0.0)) throw ConfigError("preprocess.pad_to_s must be positive");
  if (!std::isfinite(c.preprocess.target_lufs) || c.preprocess.target_lufs >= 0.0) {
    throw ConfigError("preprocess.target_lufs must be a negative LUFS value");
  }
  if (!(c.model.accuracy_gate >= 0.0 && c.model.accuracy_gate <= 100.0)) {
    throw ConfigError("model.accuracy_gate must lie in [0, 100]");
  }
  if (c.model.train.batch == 0) throw ConfigError("model.batch must be positive");
  if (!(c.model.train.crop_s > 0.0 && c.model.train.crop_s <= c.preprocess.pad_to_s)) {
    throw ConfigError("model.crop_s must lie in (0, preprocess.pad_to_s]");
  }
  if (c.eval.enroll_count == 0) throw ConfigError("eval.enroll_count must be positive");
  if (c.eval.bins == 0) throw ConfigError("eval.bins must be positive");
  if (c.eval.lengths_s.empty()) throw ConfigError("eval.lengths needs at least one value");
  for (double s : c.eval.lengths_s) {
    if (!(s > 0.0 && s <= 20.0)) throw ConfigError("eval.lengths values must lie in (0, 20]");
  }
  if (c.corpus.source == "synthetic") {
    const auto& s = c.corpus.synthetic;
    if (s.max_duration_s < *std::max_element(c.eval.lengths_s.begin(), c.eval.lengths_s.end())) {
      throw ConfigError("corpus.max_duration_s is shorter than the longest eval length");
    }
  }
}

}  // namespace uapforge::cli

#include "uapforge/corpus/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uapforge/audio/wav.hpp"
#include "uapforge/error.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::corpus {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kFormatTag = "uapforge-manifest";
constexpr std::string_view kSynthPrefix = "synth:";

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split_on(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string relative_source(const CorpusManifest& m, const std::string& source,
                            const fs::path& relative_to) {
  if (is_synth_source(source)) return source;
  fs::path p(source);
  if (p.is_relative()) p = m.base_dir / p;
  const fs::path rel = p.lexically_normal().lexically_relative(relative_to.lexically_normal());
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

std::vector<std::string> CorpusManifest::speakers(Split split) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.split == split && seen.insert(e.speaker_id).second) out.push_back(e.speaker_id);
  }
  return out;
}

std::vector<std::size_t> CorpusManifest::indices(Split split, const std::string& speaker_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split && entries[i].speaker_id == speaker_id) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> CorpusManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

void validate_manifest(const CorpusManifest& m) {
  if (m.sample_rate != 16000) {
    throw FormatError("manifest sample rate " + std::to_string(m.sample_rate) + ", expected 16000");
  }
  std::set<std::string> train_side;
  std::set<std::string> test_side;
  for (const auto& e : m.entries) {
    if (e.source.empty() || e.speaker_id.empty()) {
      throw FormatError("manifest entry with empty source or speaker id");
    }
    (e.split == Split::test ? test_side : train_side).insert(e.speaker_id);
  }
  for (const auto& s : test_side) {
    if (train_side.count(s)) {
      throw FormatError("speaker " + s + " appears in both the test split and train/val");
    }
  }
}

void require_clips_per_speaker(const CorpusManifest& m, Split split, std::size_t min_count) {
  for (const auto& s : m.speakers(split)) {
    const std::size_t n = m.indices(split, s).size();
    if (n < min_count) {
      throw ConfigError("speaker " + s + " has " + std::to_string(n) + " clips in split " +
                        std::string(to_string(split)) + ", need " + std::to_string(min_count));
    }
  }
}

std::string format_manifest(const CorpusManifest& m, const fs::path& relative_to) {
  ordered_json header;
  header["format"] = kFormatTag;
  header["version"] = CorpusManifest::kVersion;
  header["sample_rate"] = m.sample_rate;
  header["entries"] = m.entries.size();
  ordered_json skipped = ordered_json::array();
  for (const auto& s : m.skipped) {
    skipped.push_back({{"path", relative_source(m, s.path, relative_to)}, {"reason", s.reason}});
  }
  header["skipped"] = std::move(skipped);

  std::ostringstream os;
  os << header.dump() << '\n';
  for (const auto& e : m.entries) {
    os << relative_source(m, e.source, relative_to) << '\t' << e.speaker_id << '\t'
       << to_string(e.split) << '\n';
  }
  return os.str();
}

void write_manifest(const CorpusManifest& m, const fs::path& path) {
  validate_manifest(m);
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const std::string text = format_manifest(m, fs::absolute(dir));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << text;
  if (!out) throw IoError("write failed for manifest " + path.string());
}

CorpusManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty manifest");

  CorpusManifest m;
  m.base_dir = fs::absolute(path.has_parent_path() ? path.parent_path() : fs::path("."));
  std::size_t expected = 0;
  try {
    const auto header = ordered_json::parse(line);
    if (header.at("format").get<std::string>() != kFormatTag) {
      throw FormatError(path.string() + ": not a uapforge manifest");
    }
    const int version = header.at("version").get<int>();
    if (version != CorpusManifest::kVersion) {
      throw FormatError(path.string() + ": unsupported manifest version " + std::to_string(version));
    }
    m.sample_rate = header.at("sample_rate").get<int>();
    expected = header.at("entries").get<std::size_t>();
    for (const auto& s : header.value("skipped", ordered_json::array())) {
      m.skipped.push_back({s.at("path").get<std::string>(), s.at("reason").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad manifest header: " + e.what());
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    m.entries.push_back(
        {std::string(fields[0]), std::string(fields[1]), parse_split(fields[2])});
  }
  if (m.entries.size() != expected) {
    throw FormatError(path.string() + ": header announces " + std::to_string(expected) +
                      " entries, found " + std::to_string(m.entries.size()));
  }
  validate_manifest(m);
  return m;
}

bool is_synth_source(std::string_view source) { return source.starts_with(kSynthPrefix); }

SynthSource parse_synth_source(std::string_view source) {
  if (!is_synth_source(source)) {
    throw FormatError("not a generator spec: '" + std::string(source) + "'");
  }
  const auto parts = split_on(source.substr(kSynthPrefix.size()), ':');
  if (parts.size() != 3) throw FormatError("malformed generator spec '" + std::string(source) + "'");
  return {parse_u64(parts[0], "speaker seed"), parse_u64(parts[1], "utterance seed"),
          static_cast<std::size_t>(parse_u64(parts[2], "sample count"))};
}

std::string format_synth_source(const SynthSource& s) {
  return std::string(kSynthPrefix) + std::to_string(s.speaker_seed) + ":" +
         std::to_string(s.utt_seed) + ":" + std::to_string(s.num_samples);
}

CorpusManifest build_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  if (spec.n_speakers == 0 || spec.utts_per_speaker == 0) {
    throw ConfigError("synthetic corpus needs at least one speaker and one utterance");
  }
  if (!(spec.min_duration_s >= 1.0 && spec.max_duration_s <= 25.0 &&
        spec.min_duration_s <= spec.max_duration_s)) {
    throw ConfigError("duration range must satisfy 1 <= min <= max <= 25 seconds");
  }
  std::vector<std::size_t> test = spec.test_speakers;
  if (test.empty()) {
    const std::size_t n_test = std::min<std::size_t>(5, spec.n_speakers);
    for (std::size_t i = spec.n_speakers - n_test; i < spec.n_speakers; ++i) test.push_back(i);
  }
  std::set<std::size_t> test_set;
  for (std::size_t t : test) {
    if (t >= spec.n_speakers) {
      throw ConfigError("test speaker index " + std::to_string(t) + " out of range");
    }
    if (!test_set.insert(t).second) {
      throw ConfigError("test speaker index " + std::to_string(t) + " listed twice");
    }
  }
  if (test_set.size() >= spec.n_speakers) {
    throw ConfigError("split spec leaves no training speakers");
  }
  if (spec.val_per_speaker >= spec.utts_per_speaker) {
    throw ConfigError("val_per_speaker must leave training utterances");
  }
  if (spec.long_clips_per_test_speaker > spec.utts_per_speaker) {
    throw ConfigError("long_clips_per_test_speaker exceeds utts_per_speaker");
  }

  CorpusManifest m;
  Rng durations(mix_seed(spec.seed, 0xD0));
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    char id[32];
    std::snprintf(id, sizeof id, "spk%03zu", s);
    const std::uint64_t speaker_seed = mix_seed(spec.seed, 1000 + s);
    const bool is_test = test_set.count(s) > 0;
    for (std::size_t u = 0; u < spec.utts_per_speaker; ++u) {
      double duration = durations.uniform(spec.min_duration_s, spec.max_duration_s);
      if (is_test && u >= spec.utts_per_speaker - spec.long_clips_per_test_speaker) {
        duration = spec.max_duration_s;
      }
      SynthSource src{speaker_seed, mix_seed(speaker_seed, u), audio::seconds_to_samples(duration)};
      Split split = Split::train;
      if (is_test) {
        split = Split::test;
      } else if (u >= spec.utts_per_speaker - spec.val_per_speaker) {
        split = Split::val;
      }
      m.entries.push_back({format_synth_source(src), id, split});
    }
  }
  validate_manifest(m);
  return m;
}

CorpusManifest ingest_wav_corpus(const fs::path& root, const IngestOptions& options) {
  if (!fs::is_directory(root)) throw IoError("corpus root " + root.string() + " is not a directory");
  std::vector<fs::path> speaker_dirs;
  for (const auto& d : fs::directory_iterator(root)) {
    if (d.is_directory()) speaker_dirs.push_back(d.path());
  }
  std::sort(speaker_dirs.begin(), speaker_dirs.end());

  CorpusManifest m;
  m.base_dir = fs::absolute(root);
  std::map<std::string, std::vector<std::string>> clips;
  for (const auto& dir : speaker_dirs) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir)) {
      if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    const std::string speaker = dir.filename().string();
    for (const auto& f : files) {
      const std::string rel = f.lexically_relative(root).generic_string();
      try {
        audio::read_wav(f);
        clips[speaker].push_back(rel);
      } catch (const IoError& e) {
        m.skipped.push_back({rel, e.what()});
      }
    }
  }
  if (clips.empty()) throw IoError("no usable WAV clips under " + root.string());

  const std::size_t n_speakers = clips.size();
  const auto n_test = static_cast<std::size_t>(
      std::floor(options.test_fraction * static_cast<double>(n_speakers)));
  std::size_t index = 0;
  for (const auto& [speaker, files] : clips) {
    const bool is_test = index++ >= n_speakers - n_test;
    for (std::size_t i = 0; i < files.size(); ++i) {
      Split split = Split::train;
      if (is_test) {
        split = Split::test;
      } else if (options.val_per_speaker > 0 && i + options.val_per_speaker >= files.size() &&
                 files.size() > options.val_per_speaker) {
        split = Split::val;
      }
      m.entries.push_back({files[i], speaker, split});
    }
  }
  validate_manifest(m);
  return m;
}

}  // namespace uapforge::corpus

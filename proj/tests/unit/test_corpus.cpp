#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "uapforge/audio/loudness.hpp"
#include "uapforge/audio/wav.hpp"
#include "uapforge/corpus/manifest.hpp"
#include "uapforge/corpus/preprocess.hpp"
#include "uapforge/corpus/speaker.hpp"
#include "uapforge/error.hpp"

using namespace uapforge;
using corpus::Split;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "uapforge_test_corpus" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

corpus::SyntheticCorpusSpec small_spec() {
  corpus::SyntheticCorpusSpec spec;
  spec.n_speakers = 20;
  spec.utts_per_speaker = 30;
  spec.test_speakers = {15, 16, 17, 18, 19};
  spec.seed = 7;
  return spec;
}

void write_tone(const fs::path& p, double seconds, double freq) {
  std::vector<double> x(audio::seconds_to_samples(seconds));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3 * std::sin(0.0003926990817 * freq * i);
  audio::write_wav(x, p);
}

}  // namespace

TEST(Speaker, DeterministicAndInRange) {
  const auto a = corpus::generate_speaker(3), b = corpus::generate_speaker(3);
  EXPECT_EQ(a.f0_hz, b.f0_hz);
  EXPECT_EQ(a.formants[1].freq_hz, b.formants[1].freq_hz);
  EXPECT_EQ(a.speaker_id, "spk_3");
  std::set<double> f0s;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = corpus::generate_speaker(s);
    EXPECT_NO_THROW(corpus::validate_profile(p));
    EXPECT_GE(p.f0_hz, 80.0);
    EXPECT_LE(p.f0_hz, 300.0);
    EXPECT_LT(p.formants[0].freq_hz, p.formants[1].freq_hz);
    EXPECT_LT(p.formants[1].freq_hz, p.formants[2].freq_hz);
    EXPECT_GE(p.noise_mix, 0.0);
    EXPECT_LE(p.noise_mix, 0.3);
    f0s.insert(p.f0_hz);
  }
  EXPECT_EQ(f0s.size(), 20u);
}

TEST(Speaker, ValidateRejectsOutOfRange) {
  auto p = corpus::generate_speaker(1);
  p.f0_hz = 400;
  EXPECT_THROW(corpus::validate_profile(p), std::invalid_argument);
  p = corpus::generate_speaker(1);
  std::swap(p.formants[0], p.formants[2]);
  EXPECT_THROW(corpus::validate_profile(p), std::invalid_argument);
}

TEST(Synthesize, LengthPeakDeterminism) {
  const auto p = corpus::generate_speaker(5);
  const auto a = corpus::synthesize_utterance(p, 3.0, 11);
  EXPECT_EQ(a.size(), 48000u);
  EXPECT_EQ(a.samples, corpus::synthesize_utterance(p, 3.0, 11).samples);
  EXPECT_NE(a.samples, corpus::synthesize_utterance(p, 3.0, 12).samples);
  double peak = 0;
  for (double v : a.samples) peak = std::max(peak, std::fabs(v));
  EXPECT_NEAR(peak, 0.5, 1e-12);
}

TEST(Synthesize, DistinctSpeakersSoundDifferent) {
  const auto a = corpus::synthesize_utterance(corpus::generate_speaker(1), 2.0, 3);
  const auto b = corpus::synthesize_utterance(corpus::generate_speaker(2), 2.0, 3);
  EXPECT_NE(a.samples, b.samples);
}

TEST(SynthSource, RoundTrip) {
  const corpus::SynthSource s{123, 456, 789};
  const auto text = corpus::format_synth_source(s);
  EXPECT_TRUE(corpus::is_synth_source(text));
  EXPECT_FALSE(corpus::is_synth_source("spk/a.wav"));
  const auto back = corpus::parse_synth_source(text);
  EXPECT_EQ(back.speaker_seed, 123u);
  EXPECT_EQ(back.utt_seed, 456u);
  EXPECT_EQ(back.num_samples, 789u);
}

TEST(SyntheticCorpus, CountsAndDisjointTest) {
  const auto m = corpus::build_synthetic_corpus(small_spec());
  EXPECT_EQ(m.entries.size(), 600u);
  EXPECT_NO_THROW(corpus::validate_manifest(m));
  const auto test = m.speakers(Split::test);
  EXPECT_EQ(test.size(), 5u);
  std::set<std::string> train_val;
  for (const auto& e : m.entries) {
    if (e.split != Split::test) train_val.insert(e.speaker_id);
  }
  EXPECT_EQ(train_val.size(), 15u);
  for (const auto& s : test) EXPECT_EQ(train_val.count(s), 0u);
  for (const auto& s : m.speakers(Split::train)) {
    EXPECT_EQ(m.indices(Split::val, s).size(), 5u);
  }
}

TEST(SyntheticCorpus, DurationsWithinRange) {
  const auto m = corpus::build_synthetic_corpus(small_spec());
  for (const auto& e : m.entries) {
    const auto s = corpus::parse_synth_source(e.source);
    EXPECT_GE(s.num_samples, 3u * 16000u);
    EXPECT_LE(s.num_samples, 20u * 16000u);
  }
}

TEST(SyntheticCorpus, LongClipsForTestSpeakers) {
  const auto m = corpus::build_synthetic_corpus(small_spec());
  for (const auto& spk : m.speakers(Split::test)) {
    const auto idx = m.indices(Split::test, spk);
    for (std::size_t i = idx.size() - 8; i < idx.size(); ++i) {
      EXPECT_EQ(corpus::parse_synth_source(m.entries[idx[i]].source).num_samples, 320000u);
    }
  }
}

TEST(SyntheticCorpus, SameSeedSameFile) {
  const auto dir = fresh_dir("det");
  corpus::write_manifest(corpus::build_synthetic_corpus(small_spec()), dir / "a.tsv");
  corpus::write_manifest(corpus::build_synthetic_corpus(small_spec()), dir / "b.tsv");
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));
  auto other = small_spec();
  other.seed = 8;
  corpus::write_manifest(corpus::build_synthetic_corpus(other), dir / "c.tsv");
  EXPECT_NE(slurp(dir / "a.tsv"), slurp(dir / "c.tsv"));
}

TEST(SyntheticCorpus, InconsistentSpecThrows) {
  auto spec = small_spec();
  spec.test_speakers = {25};
  EXPECT_THROW(corpus::build_synthetic_corpus(spec), ConfigError);
  spec = small_spec();
  spec.test_speakers = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  EXPECT_THROW(corpus::build_synthetic_corpus(spec), ConfigError);
  spec = small_spec();
  spec.min_duration_s = 10;
  spec.max_duration_s = 5;
  EXPECT_THROW(corpus::build_synthetic_corpus(spec), ConfigError);
}

TEST(Manifest, RoundTripAndDisjointness) {
  const auto dir = fresh_dir("rt");
  const auto m = corpus::build_synthetic_corpus(small_spec());
  corpus::write_manifest(m, dir / "m.tsv");
  const auto back = corpus::read_manifest(dir / "m.tsv");
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].source, m.entries[i].source);
    EXPECT_EQ(back.entries[i].speaker_id, m.entries[i].speaker_id);
    EXPECT_EQ(back.entries[i].split, m.entries[i].split);
  }

  auto leaky = m;
  leaky.entries.push_back({m.entries.front().source, m.speakers(Split::test).front(), Split::train});
  EXPECT_THROW(corpus::validate_manifest(leaky), FormatError);
}

TEST(Manifest, ClipsPerSpeakerCheck) {
  const auto m = corpus::build_synthetic_corpus(small_spec());
  EXPECT_NO_THROW(corpus::require_clips_per_speaker(m, Split::test, 25));
  EXPECT_THROW(corpus::require_clips_per_speaker(m, Split::test, 31), ConfigError);
}

TEST(Ingest, CountsSkipsAndSortedOrder) {
  const auto root = fresh_dir("ingest");
  for (const char* spk : {"bob", "alice"}) {
    fs::create_directories(root / spk);
    for (const char* f : {"c.wav", "a.wav", "b.wav"}) write_tone(root / spk / f, 1.0, 300);
  }
  auto m = corpus::ingest_wav_corpus(root, {.test_fraction = 0.5});
  EXPECT_EQ(m.entries.size(), 6u);
  EXPECT_TRUE(m.skipped.empty());
  EXPECT_EQ(m.entries[0].speaker_id, "alice");
  EXPECT_EQ(fs::path(m.entries[0].source).filename(), "a.wav");
  EXPECT_EQ(fs::path(m.entries[2].source).filename(), "c.wav");
  EXPECT_EQ(m.speakers(Split::test), std::vector<std::string>{"bob"});

  // Replace one file with a stereo header.
  {
    std::ofstream f(root / "bob" / "b.wav", std::ios::binary);
    const unsigned char hdr[44] = {'R', 'I', 'F', 'F', 36, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ',
                                   16, 0, 0, 0, 1, 0, 2, 0, 0x80, 0x3e, 0, 0, 0, 0xfa, 0, 0, 4, 0, 16, 0,
                                   'd', 'a', 't', 'a', 0, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  }
  m = corpus::ingest_wav_corpus(root, {.test_fraction = 0.5});
  EXPECT_EQ(m.entries.size(), 5u);
  ASSERT_EQ(m.skipped.size(), 1u);
  EXPECT_NE(m.skipped[0].reason.find("mono"), std::string::npos);
}

TEST(Ingest, EmptyTreeThrows) {
  EXPECT_THROW(corpus::ingest_wav_corpus(fresh_dir("empty")), IoError);
}

TEST(Preprocess, PadsTrainOnlyAndNormalizes) {
  corpus::CorpusManifest m;
  const auto root = fresh_dir("prep");
  m.base_dir = root;
  const auto n7 = audio::seconds_to_samples(7.0);
  m.entries.push_back({corpus::format_synth_source({4, 1, n7}), "a", Split::train});
  m.entries.push_back({corpus::format_synth_source({4, 2, n7}), "a", Split::val});
  m.entries.push_back({corpus::format_synth_source({9, 3, n7}), "b", Split::test});
  const auto prepared = corpus::preprocess_corpus(m, {});
  ASSERT_EQ(prepared.clips.size(), 3u);
  EXPECT_EQ(prepared.clips[0].clip.size(), 320000u);
  EXPECT_TRUE(prepared.clips[0].clip.repeat_padded);
  EXPECT_EQ(prepared.clips[1].clip.size(), 112000u);
  EXPECT_EQ(prepared.clips[2].clip.size(), 112000u);
  EXPECT_FALSE(prepared.clips[2].clip.repeat_padded);
  for (const auto& c : prepared.clips) {
    EXPECT_NEAR(audio::measure_loudness(c.clip).integrated_lufs, -23.0, 0.5);
  }
  // The padded tail is the clip's own content again.
  const auto& padded = prepared.clips[0].clip.samples;
  for (std::size_t i = n7; i < padded.size(); i += 1231) EXPECT_EQ(padded[i], padded[i % n7]);
}

TEST(Preprocess, NoZeroRunsInPaddedClips) {
  corpus::CorpusManifest m;
  m.entries.push_back(
      {corpus::format_synth_source({2, 5, audio::seconds_to_samples(4.3)}), "a", Split::train});
  const auto prepared = corpus::preprocess_corpus(m, {});
  const auto& x = prepared.clips[0].clip.samples;
  const std::size_t w = audio::seconds_to_samples(0.2);
  for (std::size_t start = 0; start + w <= x.size(); start += w / 2) {
    double peak = 0;
    for (std::size_t i = start; i < start + w; ++i) peak = std::max(peak, std::fabs(x[i]));
    ASSERT_GT(peak, 0.0) << "silent window at " << start;
  }
}

TEST(Preprocess, FailureBudget) {
  const auto root = fresh_dir("fail");
  corpus::CorpusManifest m;
  m.base_dir = root;
  for (std::uint64_t i = 0; i < 9; ++i) {
    m.entries.push_back({corpus::format_synth_source({1, i, 16000}), "a", Split::train});
  }
  m.entries.push_back({"missing.wav", "a", Split::train});
  const auto ok = corpus::preprocess_corpus(m, {});
  EXPECT_EQ(ok.clips.size(), 9u);
  ASSERT_EQ(ok.failures.size(), 1u);
  EXPECT_EQ(ok.failures[0].entry, 9u);
  m.entries.push_back({"missing2.wav", "a", Split::train});
  EXPECT_THROW(corpus::preprocess_corpus(m, {}), Error);
}

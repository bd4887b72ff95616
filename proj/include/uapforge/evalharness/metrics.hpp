#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uapforge/audio/clip.hpp"
#include "uapforge/spkmodel/enroll.hpp"
#include "uapforge/spkmodel/model.hpp"
#include "uapforge/uaptrain/patch.hpp"

namespace uapforge::evalharness {

using ClipSpan = std::span<const audio::AudioClip* const>;

// x + tile(patch, len(x)).
std::vector<double> apply_patch(std::span<const double> samples, std::span<const double> patch);

struct FoolingResult {
  double fooling_rate = 0.0;  // percent
  std::size_t clips = 0;
  std::size_t flipped = 0;
};

// Percentage of clips whose identified speaker changes once the tiled patch
// is added. The reference is the model's clean prediction, not the label.
// Throws on an empty set, on repeat-padded clips, and on clips of speakers
// missing from the enrollment.
FoolingResult fooling_rate(const spkmodel::SpeakerModel& model,
                           const spkmodel::Enrollment& enrollment, ClipSpan clips,
                           std::span<const double> patch);

// Fooling rate against a fixed clip set with the clean predictions computed
// once up front. Same checks and result as fooling_rate().
class FoolingEvaluator {
 public:
  FoolingEvaluator(const spkmodel::SpeakerModel& model, const spkmodel::Enrollment& enrollment,
                   ClipSpan clips);
  FoolingResult operator()(std::span<const double> patch) const;

 private:
  const spkmodel::SpeakerModel* model_;
  const spkmodel::Enrollment* enrollment_;
  std::vector<const audio::AudioClip*> clips_;
  std::vector<std::size_t> clean_;
};

struct SweepRow {
  double length_s = 0.0;
  std::size_t clips = 0;
  double fooling_rate = 0.0;
  // Identity of the untruncated pool (equal on every row).
  std::string source_set_hash;
  // Hash of the truncated audio actually evaluated.
  std::string content_hash;
};

struct LengthSweepSpec {
  std::vector<double> lengths_s{3.0, 5.0, 10.0, 15.0, 20.0};
  // Pool size used at every length; 0 takes every eligible clip.
  std::size_t clips_per_length = 0;
};

// Truncates one pool of clips (each at least the longest length) to every
// length and measures the fooling rate. Throws ConfigError when the pool has
// too few long clips.
std::vector<SweepRow> length_sweep(const spkmodel::SpeakerModel& model,
                                   const spkmodel::Enrollment& enrollment, ClipSpan pool,
                                   std::span<const double> patch, const LengthSweepSpec& spec);

struct Histogram {
  std::string label;
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  double mean = 0.0;

  double bin_lo(std::size_t i) const;
  double bin_hi(std::size_t i) const;
};

Histogram make_histogram(std::string label, std::span<const double> values, std::size_t bins = 50);

struct SimilarityAnalysis {
  Histogram orig_enroll;
  Histogram anon_enroll;
  Histogram anon_anon;
};

// Per speaker: enrollment from its first enroll_count clips, then the next
// eval_count clips give rho(orig, e_k), rho(anon, e_k) and rho(anon_i,
// anon_j) over distinct pairs.
SimilarityAnalysis similarity_analysis(const spkmodel::SpeakerModel& model,
                                       const std::vector<spkmodel::SpeakerClips>& speakers,
                                       std::span<const double> patch, std::size_t enroll_count = 5,
                                       std::size_t eval_count = 20, std::size_t bins = 50);

struct SnrStats {
  double mean_db = 0.0;
  double std_db = 0.0;
  std::size_t clips = 0;
};

SnrStats snr_stats(ClipSpan clips, std::span<const double> patch);

struct VariantRow {
  std::string variant;
  double fooling_rate = 0.0;
  double snr_db = 0.0;
  double tv_proxy = 0.0;
  // 1 unless the patch was scaled down to match another variant's FR.
  double scale = 1.0;
};

struct NamedPatch {
  std::string name;
  uaptrain::Patch patch;
};

// One row per patch on the same clips. Patches must come from identical
// attack configs apart from the loss variant (ConfigError otherwise).
std::vector<VariantRow> compare_variants(const spkmodel::SpeakerModel& model,
                                         const spkmodel::Enrollment& enrollment, ClipSpan clips,
                                         const std::vector<NamedPatch>& patches);

// Scales `row`'s patch down by bisection until its FR is within tolerance of
// target_fr. Returns the row for the scaled patch.
VariantRow match_fooling_rate(const spkmodel::SpeakerModel& model,
                              const spkmodel::Enrollment& enrollment, ClipSpan clips,
                              const NamedPatch& patch, double target_fr, double tolerance,
                              std::size_t max_iterations = 12);

}  // namespace uapforge::evalharness

#include "uapforge/evalharness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "uapforge/audio/signal.hpp"
#include "uapforge/error.hpp"
#include "uapforge/hash.hpp"
#include "uapforge/parallel.hpp"
#include "uapforge/uaptrain/losses.hpp"

namespace uapforge::evalharness {

namespace {

void check_eval_clips(const spkmodel::Enrollment& enrollment, ClipSpan clips) {
  if (clips.empty()) throw std::invalid_argument("fooling_rate: empty clip set");
  const std::set<std::string> enrolled(enrollment.speakers.begin(), enrollment.speakers.end());
  for (const auto* c : clips) {
    if (c->repeat_padded) {
      throw std::logic_error("repeat-padded clip " + c->source.value_or("?") +
                             " reached evaluation; evaluation clips are never padded");
    }
    if (!c->speaker_id || !enrolled.count(*c->speaker_id)) {
      throw std::invalid_argument("clip " + c->source.value_or("?") +
                                  " belongs to a speaker that is not enrolled");
    }
  }
}

std::vector<std::size_t> predictions(const spkmodel::SpeakerModel& model,
                                     const spkmodel::Enrollment& enrollment, ClipSpan clips,
                                     std::span<const double> patch) {
  std::vector<std::size_t> ids(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    const auto& x = clips[i]->samples;
    const auto e = patch.empty() ? spkmodel::embed(model, x)
                                 : spkmodel::embed(model, apply_patch(x, patch));
    ids[i] = spkmodel::identify(enrollment, e).index;
  });
  return ids;
}

FoolingResult compare_predictions(const std::vector<std::size_t>& clean,
                                  const std::vector<std::size_t>& adv) {
  FoolingResult r;
  r.clips = clean.size();
  for (std::size_t i = 0; i < clean.size(); ++i) r.flipped += clean[i] != adv[i];
  r.fooling_rate = 100.0 * static_cast<double>(r.flipped) / static_cast<double>(r.clips);
  return r;
}

std::string hash_sources(ClipSpan clips) {
  Fnv1a h;
  for (const auto* c : clips) {
    h.update(c->source.value_or(""));
    h.update_u64(c->samples.size());
    h.update(c->samples);
  }
  return h.hex();
}

}  // namespace

std::vector<double> apply_patch(std::span<const double> samples, std::span<const double> patch) {
  std::vector<double> out(samples.begin(), samples.end());
  const std::size_t l = patch.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += patch[i % l];
  return out;
}

FoolingEvaluator::FoolingEvaluator(const spkmodel::SpeakerModel& model,
                                   const spkmodel::Enrollment& enrollment, ClipSpan clips)
    : model_(&model), enrollment_(&enrollment), clips_(clips.begin(), clips.end()) {
  check_eval_clips(enrollment, clips);
  clean_ = predictions(model, enrollment, clips, {});
}

FoolingResult FoolingEvaluator::operator()(std::span<const double> patch) const {
  if (patch.empty()) throw std::invalid_argument("fooling_rate: empty patch");
  // A zero patch leaves every input bit-identical.
  const bool zero = std::all_of(patch.begin(), patch.end(), [](double v) { return v == 0.0; });
  return compare_predictions(clean_,
                             zero ? clean_ : predictions(*model_, *enrollment_, clips_, patch));
}

FoolingResult fooling_rate(const spkmodel::SpeakerModel& model,
                           const spkmodel::Enrollment& enrollment, ClipSpan clips,
                           std::span<const double> patch) {
  return FoolingEvaluator(model, enrollment, clips)(patch);
}

std::vector<SweepRow> length_sweep(const spkmodel::SpeakerModel& model,
                                   const spkmodel::Enrollment& enrollment, ClipSpan pool,
                                   std::span<const double> patch, const LengthSweepSpec& spec) {
  if (spec.lengths_s.empty()) throw ConfigError("length sweep needs at least one length");
  for (double s : spec.lengths_s) {
    if (!(s > 0.0 && s <= 20.0)) throw ConfigError("sweep lengths must lie in (0, 20] s");
  }
  const double longest = *std::max_element(spec.lengths_s.begin(), spec.lengths_s.end());
  const std::size_t need = audio::seconds_to_samples(longest);
  std::vector<const audio::AudioClip*> eligible;
  for (const auto* c : pool) {
    if (c->size() >= need) eligible.push_back(c);
  }
  const std::size_t want = spec.clips_per_length ? spec.clips_per_length : eligible.size();
  if (eligible.empty() || eligible.size() < want) {
    throw ConfigError("length sweep needs " + std::to_string(std::max<std::size_t>(want, 1)) +
                      " clips of at least " + std::to_string(longest) + " s, found " +
                      std::to_string(eligible.size()));
  }
  eligible.resize(want);
  const std::string source_hash = hash_sources(eligible);

  std::vector<SweepRow> rows;
  for (double s : spec.lengths_s) {
    const std::size_t len = audio::seconds_to_samples(s);
    std::vector<audio::AudioClip> cut;
    cut.reserve(eligible.size());
    for (const auto* c : eligible) cut.push_back(audio::truncate(*c, len));
    std::vector<const audio::AudioClip*> ptrs;
    for (const auto& c : cut) ptrs.push_back(&c);
    SweepRow row;
    row.length_s = s;
    row.clips = cut.size();
    row.fooling_rate = fooling_rate(model, enrollment, ptrs, patch).fooling_rate;
    row.source_set_hash = source_hash;
    row.content_hash = hash_sources(ptrs);
    rows.push_back(std::move(row));
  }
  return rows;
}

double Histogram::bin_lo(std::size_t i) const {
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(counts.size());
}

double Histogram::bin_hi(std::size_t i) const {
  return lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(counts.size());
}

Histogram make_histogram(std::string label, std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  Histogram h;
  h.label = std::move(label);
  h.counts.assign(bins, 0);
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= h.lo - 1e-12 && v <= h.hi + 1e-12)) {
      throw std::domain_error("similarity " + std::to_string(v) + " outside [-1, 1]");
    }
    const double pos = (v - h.lo) / (h.hi - h.lo) * static_cast<double>(bins);
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    ++h.counts[bin];
    sum += v;
  }
  h.total = values.size();
  h.mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  return h;
}

SimilarityAnalysis similarity_analysis(const spkmodel::SpeakerModel& model,
                                       const std::vector<spkmodel::SpeakerClips>& speakers,
                                       std::span<const double> patch, std::size_t enroll_count,
                                       std::size_t eval_count, std::size_t bins) {
  if (speakers.empty()) throw ConfigError("similarity analysis needs at least one speaker");
  for (const auto& s : speakers) {
    if (s.clips.size() < enroll_count + eval_count) {
      throw ConfigError("speaker " + s.speaker_id + " has " + std::to_string(s.clips.size()) +
                        " clips, similarity analysis needs " +
                        std::to_string(enroll_count + eval_count));
    }
  }
  const spkmodel::Enrollment enrollment = spkmodel::build_enrollment(model, speakers, enroll_count);

  struct Job {
    const audio::AudioClip* clip;
    std::size_t speaker;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    for (std::size_t i = enroll_count; i < enroll_count + eval_count; ++i) {
      jobs.push_back({speakers[s].clips[i], s});
    }
  }
  std::vector<std::vector<double>> orig(jobs.size()), anon(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto* c = jobs[j].clip;
    if (c->repeat_padded) throw std::logic_error("repeat-padded clip in similarity analysis");
    orig[j] = spkmodel::embed(model, *c);
    anon[j] = spkmodel::embed(model, apply_patch(c->samples, patch));
  });

  std::vector<double> oe, ae, aa;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& ids = enrollment.speakers;
    const std::size_t k = static_cast<std::size_t>(
        std::find(ids.begin(), ids.end(), speakers[jobs[j].speaker].speaker_id) - ids.begin());
    oe.push_back(spkmodel::cosine(orig[j], enrollment.vectors[k]));
    ae.push_back(spkmodel::cosine(anon[j], enrollment.vectors[k]));
    for (std::size_t i = j + 1; i < jobs.size() && jobs[i].speaker == jobs[j].speaker; ++i) {
      aa.push_back(spkmodel::cosine(anon[j], anon[i]));
    }
  }
  return {make_histogram("orig_enroll", oe, bins), make_histogram("anon_enroll", ae, bins),
          make_histogram("anon_anon", aa, bins)};
}

SnrStats snr_stats(ClipSpan clips, std::span<const double> patch) {
  if (clips.empty()) throw std::invalid_argument("snr_stats: no clips");
  std::vector<double> snr(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    snr[i] = audio::snr_db(clips[i]->samples, audio::tile_patch(patch, clips[i]->size()));
  }
  SnrStats s;
  s.clips = snr.size();
  for (double v : snr) s.mean_db += v;
  s.mean_db /= static_cast<double>(snr.size());
  double var = 0.0;
  for (double v : snr) var += (v - s.mean_db) * (v - s.mean_db);
  s.std_db = std::sqrt(var / static_cast<double>(snr.size()));
  if (std::isinf(s.mean_db)) s.std_db = 0.0;
  return s;
}

std::vector<VariantRow> compare_variants(const spkmodel::SpeakerModel& model,
                                         const spkmodel::Enrollment& enrollment, ClipSpan clips,
                                         const std::vector<NamedPatch>& patches) {
  if (patches.empty()) throw std::invalid_argument("compare_variants: no patches");
  auto identity = [](const uaptrain::Patch& p) {
    if (p.config_json.empty()) return std::string();
    auto c = uaptrain::attack_config_from_json(p.config_json);
    c.weights.variant = uaptrain::LossVariant::exp_tv;
    return uaptrain::to_json(c);
  };
  const std::string ref = identity(patches.front().patch);
  for (const auto& p : patches) {
    if (identity(p.patch) != ref) {
      throw ConfigError("patch '" + p.name +
                        "' was trained under a different config (beyond the loss variant)");
    }
  }
  check_eval_clips(enrollment, clips);
  const auto clean = predictions(model, enrollment, clips, {});
  std::vector<VariantRow> rows;
  for (const auto& p : patches) {
    VariantRow row;
    row.variant = p.name;
    row.fooling_rate =
        compare_predictions(clean, predictions(model, enrollment, clips, p.patch.values))
            .fooling_rate;
    row.snr_db = snr_stats(clips, p.patch.values).mean_db;
    row.tv_proxy = uaptrain::tv_proxy(p.patch.values);
    rows.push_back(std::move(row));
  }
  return rows;
}

VariantRow match_fooling_rate(const spkmodel::SpeakerModel& model,
                              const spkmodel::Enrollment& enrollment, ClipSpan clips,
                              const NamedPatch& patch, double target_fr, double tolerance,
                              std::size_t max_iterations) {
  check_eval_clips(enrollment, clips);
  const auto clean = predictions(model, enrollment, clips, {});
  auto evaluate = [&](double scale) {
    std::vector<double> v = patch.patch.values;
    for (double& x : v) x *= scale;
    VariantRow row;
    row.variant = patch.name;
    row.scale = scale;
    row.fooling_rate =
        scale == 0.0 ? 0.0
                     : compare_predictions(clean, predictions(model, enrollment, clips, v)).fooling_rate;
    row.snr_db = snr_stats(clips, v).mean_db;
    row.tv_proxy = uaptrain::tv_proxy(v);
    return row;
  };
  VariantRow best = evaluate(1.0);
  if (std::fabs(best.fooling_rate - target_fr) <= tolerance || best.fooling_rate < target_fr) {
    return best;
  }
  double lo = 0.0, hi = 1.0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    VariantRow row = evaluate(mid);
    if (std::fabs(row.fooling_rate - target_fr) < std::fabs(best.fooling_rate - target_fr)) {
      best = row;
    }
    if (std::fabs(row.fooling_rate - target_fr) <= tolerance) return row;
    (row.fooling_rate > target_fr ? hi : lo) = mid;
  }
  return best;
}

}  // namespace uapforge::evalharness

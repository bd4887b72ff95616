#include "uapforge/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "uapforge/audio/wav.hpp"
#include "uapforge/corpus/preprocess.hpp"
#include "uapforge/error.hpp"
#include "uapforge/hash.hpp"
#include "uapforge/parallel.hpp"
#include "uapforge/spkmodel/enroll.hpp"
#include "uapforge/uaptrain/trainer.hpp"

namespace uapforge::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using corpus::Split;

std::filesystem::path Layout::patch(const std::string& loss) const {
  return uap_dir() / ("patch_" + loss + ".bin");
}
std::filesystem::path Layout::patch_wav(const std::string& loss) const {
  return uap_dir() / ("patch_" + loss + ".wav");
}
std::filesystem::path Layout::uap_log(const std::string& loss) const {
  return uap_dir() / ("train_log_" + loss + ".jsonl");
}
std::filesystem::path Layout::uap_checkpoint(const std::string& loss) const {
  return uap_dir() / ("checkpoint_" + loss + ".bin");
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

corpus::CorpusManifest load_manifest(const Layout& layout) {
  if (!fs::exists(layout.manifest())) {
    throw IoError("no manifest at " + layout.manifest().string() + "; run gen-data first");
  }
  return corpus::read_manifest(layout.manifest());
}

std::vector<const audio::AudioClip*> clip_ptrs(const corpus::PreparedCorpus& pc, Split split) {
  std::vector<const audio::AudioClip*> out;
  for (const auto* c : pc.in_split(split)) out.push_back(&c->clip);
  return out;
}

// Entries of one split picked round-robin across speakers (manifest order
// within each speaker); count 0 takes all.
std::vector<std::size_t> round_robin_entries(const corpus::CorpusManifest& m, Split split,
                                             std::size_t count, std::size_t skip_per_speaker = 0) {
  std::vector<std::vector<std::size_t>> lists;
  for (const auto& s : m.speakers(split)) {
    auto idx = m.indices(split, s);
    idx.erase(idx.begin(), idx.begin() + std::min(skip_per_speaker, idx.size()));
    lists.push_back(std::move(idx));
  }
  std::vector<std::size_t> out;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (const auto& l : lists) {
      if (round < l.size() && (count == 0 || out.size() < count)) {
        out.push_back(l[round]);
        any = true;
      }
    }
    if (!any || (count && out.size() >= count)) break;
  }
  return out;
}

corpus::PreprocessOptions prep_options(const RunConfig& c, std::vector<Split> splits, bool pad,
                                       std::vector<std::size_t> only = {}) {
  corpus::PreprocessOptions o = c.preprocess;
  o.splits = std::move(splits);
  o.pad_train = pad;
  o.only_entries = std::move(only);
  return o;
}

void report_failures(const corpus::PreparedCorpus& pc, std::ostream& log) {
  for (const auto& f : pc.failures) {
    log << "warning: preprocessing skipped " << f.source << ": " << f.reason << "\n";
  }
}

spkmodel::SpeakerModel load_model_for(const Layout& layout, std::ostream& log, bool missing_is_config) {
  if (!fs::exists(layout.model())) {
    const std::string msg = "no model at " + layout.model().string() + "; run train-model first";
    if (missing_is_config) throw ConfigError(msg);
    throw IoError(msg);
  }
  auto loaded = spkmodel::load_model(layout.model());
  for (const auto& w : loaded.warnings) log << "warning: " << w << "\n";
  return std::move(loaded.model);
}

void gate(const RunConfig& config, double accuracy, bool override_gate, std::ostream& log) {
  log << "held-out identification accuracy: " << evalharness::format9(accuracy) << "%\n";
  if (accuracy >= config.model.accuracy_gate) return;
  const std::string msg = "speaker model accuracy " + evalharness::format9(accuracy) +
                          "% is below the gate of " +
                          evalharness::format9(config.model.accuracy_gate) + "%";
  if (!override_gate) throw GateError(msg, accuracy);
  log << "warning: " << msg << " (gate overridden)\n";
}

Json num(double v) {
  if (std::isfinite(v)) return evalharness::round9(v);
  return nullptr;
}

}  // namespace

GenDataResult gen_data(const RunConfig& config, std::ostream& log) {
  const Layout layout{config.out};
  const fs::path parent = fs::absolute(config.out).parent_path();
  if (!fs::is_directory(parent)) {
    throw IoError("output parent directory " + parent.string() + " does not exist");
  }
  make_dir(layout.data_dir());

  corpus::CorpusManifest manifest;
  if (config.corpus.source == "synthetic") {
    manifest = corpus::build_synthetic_corpus(config.corpus.synthetic);
  } else {
    manifest = corpus::ingest_wav_corpus(config.corpus.source, config.corpus.ingest);
  }
  corpus::validate_manifest(manifest);
  corpus::write_manifest(manifest, layout.manifest());

  std::vector<fs::path> files{layout.manifest()};
  if (config.corpus.source == "synthetic" && config.corpus.write_wavs) {
    const fs::path wav_dir = layout.data_dir() / "wav";
    std::vector<fs::path> paths(manifest.entries.size());
    std::map<std::string, std::size_t> per_speaker;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      const auto& e = manifest.entries[i];
      char name[32];
      std::snprintf(name, sizeof name, "utt%03zu.wav", per_speaker[e.speaker_id]++);
      paths[i] = wav_dir / e.speaker_id / name;
      make_dir(paths[i].parent_path());
    }
    parallel_for(manifest.entries.size(), [&](std::size_t i) {
      audio::write_wav(corpus::load_clip(manifest, i), paths[i]);
    });
    files.insert(files.end(), paths.begin(), paths.end());
  }

  std::sort(files.begin(), files.end());
  Fnv1a tree;
  for (const auto& f : files) {
    tree.update(fs::relative(f, layout.data_dir()).generic_string());
    tree.update(hash_file(f.string()));
  }

  GenDataResult r;
  r.manifest = layout.manifest();
  r.clips = manifest.entries.size();
  std::set<std::string> all;
  for (const auto& e : manifest.entries) all.insert(e.speaker_id);
  r.speakers = all.size();
  r.test_speakers = manifest.speakers(Split::test).size();
  r.skipped = manifest.skipped.size();
  r.tree_hash = tree.hex();
  for (const auto& s : manifest.skipped) log << "skipped " << s.path << ": " << s.reason << "\n";
  log << "manifest: " << r.manifest.string() << "\n"
      << "clips: " << r.clips << " (train " << manifest.indices(Split::train).size() << ", val "
      << manifest.indices(Split::val).size() << ", test " << manifest.indices(Split::test).size()
      << ")\n"
      << "speakers: " << r.speakers << " (" << r.test_speakers << " held out)\n"
      << "tree hash: " << r.tree_hash << "\n";
  return r;
}

double held_out_accuracy(const RunConfig& config, const spkmodel::SpeakerModel& model) {
  const Layout layout{config.out};
  const auto manifest = load_manifest(layout);
  corpus::require_clips_per_speaker(manifest, Split::test, config.eval.enroll_count + 1);
  const auto pc = corpus::preprocess_corpus(manifest, prep_options(config, {Split::test}, false));
  const auto clips = clip_ptrs(pc, Split::test);
  return 100.0 * spkmodel::identification_accuracy(model, spkmodel::group_by_speaker(clips),
                                                   config.eval.enroll_count)
                     .accuracy;
}

TrainModelResult train_model_stage(const RunConfig& config, bool resume, std::ostream& log) {
  const Layout layout{config.out};
  const auto manifest = load_manifest(layout);
  make_dir(layout.model_dir());

  // Crops are drawn cyclically from the unpadded clips, which is the same
  // audio as cropping the repeat-padded clip.
  const auto pc = corpus::preprocess_corpus(manifest, prep_options(config, {Split::train}, false));
  report_failures(pc, log);
  const auto clips = clip_ptrs(pc, Split::train);
  log << "training clips: " << clips.size() << "\n";

  std::optional<spkmodel::ModelTrainState> state;
  if (resume) {
    if (!fs::exists(layout.model_state())) {
      throw IoError("nothing to resume: " + layout.model_state().string() + " is missing");
    }
    state = spkmodel::load_train_state(layout.model_state());
    log << "resuming after epoch " << state->epochs_done << "\n";
  }

  auto on_epoch = [&](const spkmodel::ModelTrainState& s) {
    std::string lines;
    for (const auto& r : s.curve) {
      Json j;
      j["epoch"] = r.epoch;
      j["mean_loss"] = num(r.mean_loss);
      j["train_accuracy"] = num(r.train_accuracy);
      lines += j.dump() + "\n";
    }
    write_text(layout.model_log(), lines);
    spkmodel::save_train_state(s, layout.model_state());
    const auto& r = s.curve.back();
    log << "epoch " << r.epoch << "  loss " << evalharness::format9(r.mean_loss) << "  train acc "
        << evalharness::format9(100.0 * r.train_accuracy) << "%\n";
  };
  const auto final_state =
      spkmodel::train_model(clips, config.model.train, state ? &*state : nullptr, on_epoch);
  spkmodel::save_model(final_state.model, layout.model());

  TrainModelResult r;
  r.model = layout.model();
  r.epochs = final_state.epochs_done;
  r.held_out_accuracy = held_out_accuracy(config, final_state.model);
  write_text(layout.model_dir() / "accuracy.json",
             Json{{"held_out_accuracy", num(r.held_out_accuracy)},
                  {"model_hash", spkmodel::model_hash(final_state.model)}}
                     .dump(2) +
                 "\n");
  log << "model: " << r.model.string() << "\n"
      << "held-out identification accuracy: " << evalharness::format9(r.held_out_accuracy)
      << "%\n";
  return r;
}

TrainUapResult train_uap_stage(const RunConfig& config, const TrainUapOptions& options,
                               std::ostream& log) {
  const Layout layout{config.out};
  const auto model = load_model_for(layout, log, false);
  gate(config, held_out_accuracy(config, model), options.override_gate, log);
  const auto manifest = load_manifest(layout);
  make_dir(layout.uap_dir());
  const auto& attack = config.attack.config;
  const std::string loss = uaptrain::to_string(attack.weights.variant);

  // Only the selected clips are padded: 20 s of every training clip would
  // not fit comfortably in memory.
  const auto train_entries =
      round_robin_entries(manifest, Split::train, attack.max_train_clips);
  const auto train_pc = corpus::preprocess_corpus(
      manifest, prep_options(config, {Split::train}, true, train_entries));
  report_failures(train_pc, log);
  // Keep the round-robin order rather than manifest order.
  std::map<std::size_t, const audio::AudioClip*> by_entry;
  for (const auto& c : train_pc.clips) by_entry[c.entry] = &c.clip;
  std::vector<const audio::AudioClip*> train;
  for (auto e : train_entries) {
    if (auto it = by_entry.find(e); it != by_entry.end()) train.push_back(it->second);
  }
  log << "patch training clips: " << train.size() << " (" << loss << ")\n";

  // Validation: held-back utterances of the training speakers, identified
  // against enrollments built from their first training clips.
  std::optional<corpus::PreparedCorpus> val_pc;
  std::optional<spkmodel::Enrollment> val_enroll;
  std::optional<evalharness::FoolingEvaluator> val_eval;
  std::vector<const audio::AudioClip*> val_clips;
  if (config.attack.val_clips > 0 && !manifest.indices(Split::val).empty()) {
    std::vector<std::size_t> enroll_entries;
    for (const auto& s : manifest.speakers(Split::train)) {
      auto idx = manifest.indices(Split::train, s);
      idx.resize(std::min(idx.size(), config.eval.enroll_count));
      enroll_entries.insert(enroll_entries.end(), idx.begin(), idx.end());
    }
    auto val_entries = round_robin_entries(manifest, Split::val, config.attack.val_clips);
    std::vector<std::size_t> all = enroll_entries;
    all.insert(all.end(), val_entries.begin(), val_entries.end());
    val_pc = corpus::preprocess_corpus(
        manifest, prep_options(config, {Split::train, Split::val}, false, all));
    const auto groups = spkmodel::group_by_speaker(clip_ptrs(*val_pc, Split::train));
    val_enroll = spkmodel::build_enrollment(model, groups, config.eval.enroll_count);
    val_clips = clip_ptrs(*val_pc, Split::val);
    val_eval.emplace(model, *val_enroll, val_clips);
    log << "validation clips: " << val_clips.size() << "\n";
  }

  std::optional<uaptrain::UapTrainState> resume_state;
  if (options.resume) {
    if (!fs::exists(layout.uap_checkpoint(loss))) {
      throw IoError("nothing to resume: " + layout.uap_checkpoint(loss).string() + " is missing");
    }
    resume_state = uaptrain::load_uap_state(layout.uap_checkpoint(loss));
    log << "resuming at epoch " << resume_state->epoch << ", batch " << resume_state->batch_index
        << "\n";
  }

  auto write_log = [&](const uaptrain::UapTrainState& s) {
    std::string lines;
    for (const auto& r : s.records) {
      Json j;
      j["epoch"] = r.epoch;
      j["mean_fooling"] = num(r.mean_fooling);
      j["mean_regularizer"] = num(r.mean_regularizer);
      j["mean_total"] = num(r.mean_total);
      j["val_fr"] = num(r.val_fr);
      j["max_abs"] = num(r.max_abs);
      lines += j.dump() + "\n";
    }
    if (std::isfinite(s.final_val_fr)) lines += Json{{"final_val_fr", num(s.final_val_fr)}}.dump() + "\n";
    write_text(layout.uap_log(loss), lines);
  };

  uaptrain::UapHooks hooks;
  if (val_eval) {
    hooks.validate = [&](const std::vector<double>& p) { return (*val_eval)(p).fooling_rate; };
  }
  hooks.on_epoch = [&](const uaptrain::UapTrainState& s) {
    write_log(s);
    uaptrain::save_uap_state(s, layout.uap_checkpoint(loss));
    const auto& r = s.records.back();
    log << "epoch " << r.epoch << "  fooling " << evalharness::format9(r.mean_fooling)
        << "  reg " << evalharness::format9(r.mean_regularizer) << "  val FR "
        << evalharness::format9(r.val_fr) << "%\n";
  };
  hooks.on_interrupt = [&](const uaptrain::UapTrainState& s) {
    uaptrain::save_uap_state(s, layout.uap_checkpoint(loss));
    write_log(s);
    log << "checkpoint written to " << layout.uap_checkpoint(loss).string() << "\n";
  };
  hooks.stop = options.stop;
  hooks.stop_after_batches = options.stop_after_batches;

  auto result = uaptrain::train_uap(model, train, attack, hooks,
                                    resume_state ? &*resume_state : nullptr);
  write_log(result.state);
  uaptrain::save_uap_state(result.state, layout.uap_checkpoint(loss));
  uaptrain::save_patch(result.patch, layout.patch(loss));
  uaptrain::export_patch_wav(result.patch, layout.patch_wav(loss));

  TrainUapResult r;
  r.patch = layout.patch(loss);
  r.epochs = result.state.epoch;
  r.final_val_fr = result.state.final_val_fr;
  log << "patch: " << r.patch.string() << "  hash " << uaptrain::patch_hash(result.patch) << "\n";
  if (std::isfinite(r.final_val_fr)) {
    log << "final validation FR: " << evalharness::format9(r.final_val_fr) << "%\n";
  }
  return r;
}

evalharness::EvalReport evaluate_stage(const RunConfig& config, const EvaluateOptions& options,
                                       std::ostream& log) {
  const Layout layout{config.out};
  const auto model = load_model_for(layout, log, true);
  const fs::path patch_path =
      options.patch.value_or(layout.patch(uaptrain::to_string(config.attack.config.weights.variant)));
  auto load = [](const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("patch file " + p.string() + " does not exist");
    return uaptrain::load_patch(p);
  };
  const uaptrain::Patch patch = load(patch_path);
  std::optional<uaptrain::Patch> baseline;
  if (options.baseline_patch) baseline = load(*options.baseline_patch);

  const auto manifest = load_manifest(layout);
  const std::size_t k = config.eval.enroll_count;
  corpus::require_clips_per_speaker(manifest, Split::test, k + 1);
  const auto pc = corpus::preprocess_corpus(manifest, prep_options(config, {Split::test}, false));
  report_failures(pc, log);
  const auto groups = spkmodel::group_by_speaker(clip_ptrs(pc, Split::test));

  // Enrollment uses each speaker's first k clips, evaluation the rest.
  std::vector<audio::AudioClip> raw_enroll;
  if (!config.eval.normalize_enrollment) {
    for (const auto& s : manifest.speakers(Split::test)) {
      const auto idx = manifest.indices(Split::test, s);
      for (std::size_t i = 0; i < k && i < idx.size(); ++i) {
        raw_enroll.push_back(corpus::load_clip(manifest, idx[i]));
      }
    }
  }
  std::vector<spkmodel::SpeakerClips> enroll_groups, full_groups;
  std::vector<const audio::AudioClip*> eval_clips;
  std::size_t raw_pos = 0;
  for (const auto& g : groups) {
    if (g.clips.size() <= k) {
      throw ConfigError("test speaker " + g.speaker_id + " has too few clips after preprocessing");
    }
    spkmodel::SpeakerClips e{g.speaker_id, {}}, f{g.speaker_id, {}};
    for (std::size_t i = 0; i < g.clips.size(); ++i) {
      const audio::AudioClip* c = g.clips[i];
      if (i < k) {
        if (!config.eval.normalize_enrollment) c = &raw_enroll.at(raw_pos++);
        e.clips.push_back(c);
      } else {
        eval_clips.push_back(c);
      }
      f.clips.push_back(c);
    }
    enroll_groups.push_back(std::move(e));
    full_groups.push_back(std::move(f));
  }
  const auto enrollment = spkmodel::build_enrollment(model, enroll_groups, k);

  evalharness::EvalReport report;
  report.enroll_count = k;
  report.enrollment_normalized = config.eval.normalize_enrollment;
  report.held_out_accuracy =
      100.0 * spkmodel::identification_accuracy(model, full_groups, k).accuracy;
  gate(config, report.held_out_accuracy, options.override_gate, log);

  report.fooling = evalharness::fooling_rate(model, enrollment, eval_clips, patch.values);
  report.snr = evalharness::snr_stats(eval_clips, patch.values);
  report.tv_proxy = uaptrain::tv_proxy(patch.values);
  log << "fooling rate: " << evalharness::format9(report.fooling.fooling_rate) << "% ("
      << report.fooling.flipped << " of " << report.fooling.clips << ")\n"
      << "SNR: " << evalharness::format9(report.snr.mean_db) << " +- "
      << evalharness::format9(report.snr.std_db) << " dB\n";

  evalharness::LengthSweepSpec sweep;
  sweep.lengths_s = config.eval.lengths_s;
  sweep.clips_per_length = config.eval.clips_per_length;
  report.sweep = evalharness::length_sweep(model, enrollment, eval_clips, patch.values, sweep);
  for (const auto& row : report.sweep) {
    log << "  " << evalharness::format9(row.length_s) << " s: FR "
        << evalharness::format9(row.fooling_rate) << "% over " << row.clips << " clips\n";
  }

  report.similarity = evalharness::similarity_analysis(model, full_groups, patch.values, k,
                                                       config.eval.eval_count, config.eval.bins);
  log << "mean similarity orig-enroll " << evalharness::format9(report.similarity->orig_enroll.mean)
      << ", anon-enroll " << evalharness::format9(report.similarity->anon_enroll.mean)
      << ", anon-anon " << evalharness::format9(report.similarity->anon_anon.mean) << "\n";

  auto variant_name = [](const uaptrain::Patch& p, const std::string& fallback) {
    if (p.config_json.empty()) return fallback;
    return uaptrain::to_string(uaptrain::attack_config_from_json(p.config_json).weights.variant);
  };
  if (baseline) {
    std::vector<evalharness::NamedPatch> named{{variant_name(patch, "patch"), patch},
                                               {variant_name(*baseline, "baseline"), *baseline}};
    if (named[0].name == named[1].name) {
      named[0].name += "_patch";
      named[1].name += "_baseline";
    }
    report.comparison = evalharness::compare_variants(model, enrollment, eval_clips, named);
    const auto& a = report.comparison[0];
    const auto& b = report.comparison[1];
    const double tol = config.eval.match_tolerance;
    if (std::fabs(a.fooling_rate - b.fooling_rate) <= tol) {
      report.matched = report.comparison;
    } else {
      // Scale the stronger patch down to the weaker one's fooling rate.
      const bool a_stronger = a.fooling_rate > b.fooling_rate;
      const auto& strong = named[a_stronger ? 0 : 1];
      const double target = a_stronger ? b.fooling_rate : a.fooling_rate;
      auto scaled =
          evalharness::match_fooling_rate(model, enrollment, eval_clips, strong, target, tol);
      report.matched = a_stronger ? std::vector{scaled, b} : std::vector{a, scaled};
    }
    for (const auto& row : report.matched) {
      log << "  " << row.variant << ": FR " << evalharness::format9(row.fooling_rate) << "%  SNR "
          << evalharness::format9(row.snr_db) << " dB  TV " << evalharness::format9(row.tv_proxy)
          << "  scale " << evalharness::format9(row.scale) << "\n";
    }
    report.provenance.inputs["baseline_patch_hash"] = uaptrain::patch_hash(*baseline);
  }

  report.provenance.model_hash = spkmodel::model_hash(model);
  report.provenance.patch_hash = uaptrain::patch_hash(patch);
  report.provenance.manifest_hash = hash_file(layout.manifest().string());
  for (const auto& [key, value] : config_entries(config)) report.provenance.flags[key] = value;
  evalharness::emit_report(report, layout.eval_dir());
  log << "report: " << (layout.eval_dir() / "report.json").string() << "\n";
  return report;
}

}  // namespace uapforge::cli

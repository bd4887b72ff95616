#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uapforge/evalharness/metrics.hpp"

namespace uapforge::evalharness {

inline constexpr int kReportVersion = 1;

struct Provenance {
  std::string model_hash;
  std::string patch_hash;
  std::string manifest_hash;
  // Resolved run settings (flag name -> value), written in key order.
  std::map<std::string, std::string> flags;
  // Extra input hashes, e.g. a baseline patch.
  std::map<std::string, std::string> inputs;
};

struct EvalReport {
  double held_out_accuracy = 0.0;  // percent
  FoolingResult fooling;
  SnrStats snr;
  double tv_proxy = 0.0;
  std::size_t enroll_count = 5;
  bool enrollment_normalized = true;
  std::vector<SweepRow> sweep;
  std::optional<SimilarityAnalysis> similarity;
  // Side-by-side variants on the same clips, plus the FR-matched rows.
  std::vector<VariantRow> comparison;
  std::vector<VariantRow> matched;
  Provenance provenance;
};

// %.9g round trip.
double round9(double v);
std::string format9(double v);

std::string report_json(const EvalReport& report);

// Writes report.json, metrics.csv, sweep.csv, histograms.csv and, when the
// report has variant rows, comparison.csv. Refuses (std::invalid_argument)
// when any provenance hash is empty; throws IoError when out_dir cannot be
// written.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace uapforge::evalharness

#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "uapforge/audio/loudness.hpp"

namespace uapforge::cli {

struct SelftestOptions {
  // Replaces the K-weighting filters used by the loudness check.
  std::optional<audio::KWeighting> k_weighting;
};

struct SelftestResult {
  std::vector<std::string> passed;
  std::vector<std::string> failed;
  bool ok() const { return failed.empty(); }
};

// Fast invariant suite: gradient checks, phi table, tiling comb, SNR
// identities and the loudness anchor. Prints one PASS/FAIL line per check;
// the output is identical between runs.
SelftestResult run_selftest(std::ostream& out, const SelftestOptions& options = {});

}  // namespace uapforge::cli

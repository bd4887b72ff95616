#include "uapforge/evalharness/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "uapforge/error.hpp"

namespace uapforge::evalharness {

using Json = nlohmann::ordered_json;

double round9(double v) {
  if (!std::isfinite(v)) return v;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string format9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

// Non-finite values (an all-zero patch has SNR +inf) become strings so the
// JSON stays valid and lossless.
Json num(double v) {
  if (std::isfinite(v)) return round9(v);
  return format9(v);
}

Json histogram_json(const Histogram& h) {
  Json j;
  j["label"] = h.label;
  j["lo"] = num(h.lo);
  j["hi"] = num(h.hi);
  j["bins"] = h.counts.size();
  j["total"] = h.total;
  j["mean"] = num(h.mean);
  j["counts"] = h.counts;
  return j;
}

Json variant_json(const VariantRow& r) {
  Json j;
  j["variant"] = r.variant;
  j["fooling_rate"] = num(r.fooling_rate);
  j["snr_db"] = num(r.snr_db);
  j["tv_proxy"] = num(r.tv_proxy);
  j["scale"] = num(r.scale);
  return j;
}

void check(const EvalReport& r) {
  const auto& p = r.provenance;
  if (p.model_hash.empty() || p.patch_hash.empty() || p.manifest_hash.empty()) {
    throw std::invalid_argument("report provenance is incomplete; refusing to emit");
  }
  for (const auto& [k, v] : p.inputs) {
    if (v.empty()) throw std::invalid_argument("report provenance input '" + k + "' has no hash");
  }
  if (!(r.fooling.fooling_rate >= 0.0 && r.fooling.fooling_rate <= 100.0)) {
    throw std::invalid_argument("fooling rate outside [0, 100]");
  }
  if (r.similarity) {
    for (const Histogram* h :
         {&r.similarity->orig_enroll, &r.similarity->anon_enroll, &r.similarity->anon_anon}) {
      std::size_t sum = 0;
      for (auto c : h->counts) sum += c;
      if (sum != h->total) throw std::invalid_argument("histogram " + h->label + " does not add up");
    }
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string variants_csv(const EvalReport& r) {
  std::ostringstream o;
  o << "set,variant,fooling_rate,snr_db,tv_proxy,scale\n";
  auto rows = [&](const char* set, const std::vector<VariantRow>& v) {
    for (const auto& x : v) {
      o << set << ',' << x.variant << ',' << format9(x.fooling_rate) << ',' << format9(x.snr_db)
        << ',' << format9(x.tv_proxy) << ',' << format9(x.scale) << '\n';
    }
  };
  rows("raw", r.comparison);
  rows("matched", r.matched);
  return o.str();
}

}  // namespace

std::string report_json(const EvalReport& r) {
  Json j;
  j["format"] = "uapforge-report";
  j["version"] = kReportVersion;
  Json prov;
  prov["model_hash"] = r.provenance.model_hash;
  prov["patch_hash"] = r.provenance.patch_hash;
  prov["manifest_hash"] = r.provenance.manifest_hash;
  prov["inputs"] = Json::object();
  for (const auto& [k, v] : r.provenance.inputs) prov["inputs"][k] = v;
  prov["enrollment_normalized"] = r.enrollment_normalized;
  prov["enroll_count"] = r.enroll_count;
  prov["flags"] = Json::object();
  for (const auto& [k, v] : r.provenance.flags) prov["flags"][k] = v;
  j["provenance"] = prov;

  Json m;
  m["held_out_accuracy"] = num(r.held_out_accuracy);
  m["fooling_rate"] = num(r.fooling.fooling_rate);
  m["clips"] = r.fooling.clips;
  m["flipped"] = r.fooling.flipped;
  m["snr_mean_db"] = num(r.snr.mean_db);
  m["snr_std_db"] = num(r.snr.std_db);
  m["tv_proxy"] = num(r.tv_proxy);
  j["metrics"] = m;

  Json sweep = Json::array();
  for (const auto& s : r.sweep) {
    Json row;
    row["length_s"] = num(s.length_s);
    row["clips"] = s.clips;
    row["fooling_rate"] = num(s.fooling_rate);
    row["source_set_hash"] = s.source_set_hash;
    row["content_hash"] = s.content_hash;
    sweep.push_back(row);
  }
  j["per_length_fr"] = sweep;

  Json hist = Json::array();
  if (r.similarity) {
    hist.push_back(histogram_json(r.similarity->orig_enroll));
    hist.push_back(histogram_json(r.similarity->anon_enroll));
    hist.push_back(histogram_json(r.similarity->anon_anon));
  }
  j["similarity_histograms"] = hist;

  Json cmp = Json::array(), matched = Json::array();
  for (const auto& v : r.comparison) cmp.push_back(variant_json(v));
  for (const auto& v : r.matched) matched.push_back(variant_json(v));
  j["comparison"] = cmp;
  j["comparison_matched"] = matched;
  return j.dump(2) + "\n";
}

void emit_report(const EvalReport& r, const std::filesystem::path& out_dir) {
  check(r);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create report directory " + out_dir.string());
  }

  write_text(out_dir / "report.json", report_json(r));

  std::ostringstream metrics;
  metrics << "metric,value\n";
  metrics << "held_out_accuracy," << format9(r.held_out_accuracy) << '\n';
  metrics << "fooling_rate," << format9(r.fooling.fooling_rate) << '\n';
  metrics << "clips," << r.fooling.clips << '\n';
  metrics << "flipped," << r.fooling.flipped << '\n';
  metrics << "snr_mean_db," << format9(r.snr.mean_db) << '\n';
  metrics << "snr_std_db," << format9(r.snr.std_db) << '\n';
  metrics << "tv_proxy," << format9(r.tv_proxy) << '\n';
  if (r.similarity) {
    metrics << "mean_orig_enroll," << format9(r.similarity->orig_enroll.mean) << '\n';
    metrics << "mean_anon_enroll," << format9(r.similarity->anon_enroll.mean) << '\n';
    metrics << "mean_anon_anon," << format9(r.similarity->anon_anon.mean) << '\n';
  }
  metrics << "model_hash," << r.provenance.model_hash << '\n';
  metrics << "patch_hash," << r.provenance.patch_hash << '\n';
  metrics << "manifest_hash," << r.provenance.manifest_hash << '\n';
  write_text(out_dir / "metrics.csv", metrics.str());

  std::ostringstream sweep;
  sweep << "length_s,clips,fooling_rate,source_set_hash,content_hash\n";
  for (const auto& s : r.sweep) {
    sweep << format9(s.length_s) << ',' << s.clips << ',' << format9(s.fooling_rate) << ','
          << s.source_set_hash << ',' << s.content_hash << '\n';
  }
  write_text(out_dir / "sweep.csv", sweep.str());

  std::ostringstream hist;
  hist << "label,bin,bin_lo,bin_hi,count\n";
  if (r.similarity) {
    for (const Histogram* h :
         {&r.similarity->orig_enroll, &r.similarity->anon_enroll, &r.similarity->anon_anon}) {
      for (std::size_t i = 0; i < h->counts.size(); ++i) {
        hist << h->label << ',' << i << ',' << format9(h->bin_lo(i)) << ','
             << format9(h->bin_hi(i)) << ',' << h->counts[i] << '\n';
      }
    }
  }
  write_text(out_dir / "histograms.csv", hist.str());

  if (!r.comparison.empty()) write_text(out_dir / "comparison.csv", variants_csv(r));
}

}  // namespace uapforge::evalharness

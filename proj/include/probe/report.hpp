#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "probe/distill.hpp"
#include "probe/eval.hpp"
#include "probe/probing.hpp"

namespace probe {

// Fixed-width printf formatting so reruns produce byte-identical artifacts.
inline std::string fmt_f(double x, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, x);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ArtifactError("cannot write " + path.string());
  os << content;
}

inline std::string trace_csv(const ProbeResult& res) {
  std::string out = "step,l_rec,l_align,l_total,lr\n";
  for (const auto& row : res.trace) {
    out += std::to_string(row.step) + "," + fmt_f(row.l_rec, 9) + "," + fmt_f(row.l_align, 9) +
           "," + fmt_f(row.l_total, 9) + "," + fmt_f(row.lr, 9) + "\n";
  }
  return out;
}

inline std::string curves_csv(const ThreePointReport& rep, ScoreMode mode) {
  std::string out = "condition,frame_index,R,mode\n";
  auto rows = [&](const ConditionEval& ce) {
    for (std::size_t j = 0; j < ce.curve.r.size(); ++j)
      out += ce.condition + "," + std::to_string(j) + "," + fmt_f(ce.curve.r[j], 6) + "," +
             to_string(mode) + "\n";
  };
  rows(rep.original);
  rows(rep.erased);
  rows(rep.probed);
  return out;
}

// Minimal polyline chart of the three per-frame reactivation curves.
inline std::string curves_svg(const ThreePointReport& rep) {
  const double W = 480.0, H = 240.0, pad = 32.0;
  const std::size_t n = rep.original.curve.r.size();
  auto poly = [&](const ConditionEval& ce, const char* color) {
    std::string pts;
    for (std::size_t j = 0; j < ce.curve.r.size(); ++j) {
      const double x = n > 1 ? pad + (W - 2 * pad) * static_cast<double>(j) /
                                         static_cast<double>(n - 1)
                             : W / 2;
      const double y = H - pad - (H - 2 * pad) * std::min(1.0, std::max(0.0, ce.curve.r[j]));
      pts += fmt_f(x, 1) + "," + fmt_f(y, 1) + " ";
    }
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  };
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"240\">\n";
  svg += "  <rect width=\"480\" height=\"240\" fill=\"white\"/>\n";
  svg += "  <line x1=\"32\" y1=\"208\" x2=\"448\" y2=\"208\" stroke=\"black\"/>\n";
  svg += "  <line x1=\"32\" y1=\"32\" x2=\"32\" y2=\"208\" stroke=\"black\"/>\n";
  svg += poly(rep.original, "#2b6cb0");
  svg += poly(rep.erased, "#c53030");
  svg += poly(rep.probed, "#2f855a");
  svg += "  <text x=\"40\" y=\"24\" font-size=\"11\">per-frame reactivation score "
         "(blue original, red erased, green probed)</text>\n";
  svg += "</svg>\n";
  return svg;
}

inline std::string condition_block(const ConditionEval& ce) {
  std::string out;
  out += "condition " + ce.condition + "\n";
  out += "  detection_rate  " + fmt_f(ce.detection_rate, 6) + "\n";
  out += "  semantic_sim    " + fmt_f(ce.semantic_sim, 6) + "\n";
  out += "  signature       " + to_string(ce.curve.signature) + "\n";
  double lo = ce.curve.r.empty() ? 0.0 : ce.curve.r[0], hi = lo;
  for (double x : ce.curve.r) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  out += "  curve_range     " + fmt_f(hi - lo, 6) + "\n";
  out += "  curve_spearman  " + fmt_f(spearman_index_corr(ce.curve.r), 6) + "\n";
  return out;
}

inline std::string eval_report_text(const ThreePointReport& rep, const std::string& cfg_digest,
                                    const std::string& build_id) {
  std::string out;
  out += "three-point evaluation: original vs erased vs probed\n";
  out += "config_digest " + cfg_digest + "\n";
  out += "build " + build_id + "\n";
  out += "target_concept " + std::to_string(rep.target_concept) + "\n";
  out += "base_digest " + rep.base_digest + "\n";
  out += "erased_digest " + rep.erased_digest + "\n";
  out += "provenance " + rep.probed_provenance + "\n\n";
  out += condition_block(rep.original) + "\n";
  out += condition_block(rep.erased) + "\n";
  out += condition_block(rep.probed) + "\n";
  out += "reactivation_potential_detection " + fmt_f(rep.potential_detection, 6) + "\n";
  out += "reactivation_potential_semantic  " + fmt_f(rep.potential_semantic, 6) + "\n";
  if (!rep.transfer_note.empty()) out += "transfer: " + rep.transfer_note + "\n";
  out += "\nScores come from the synthetic frame classifier and embedder only;\n";
  out += "human validation of generated clips is out of scope for this harness.\n";
  return out;
}

inline std::string alignment_csv(const AlignmentMeasurement& m) {
  std::string out = "sample,t,cosine,excluded\n";
  for (const auto& s : m.samples)
    out += std::to_string(s.index) + "," + fmt_f(s.t, 6) + "," + fmt_f(s.cosine, 9) + "," +
           (s.excluded ? "1" : "0") + "\n";
  return out;
}

inline std::string alignment_summary_line(const AlignmentMeasurement& m) {
  return "model=" + m.model_tag + " t_batch=" + std::to_string(m.t_batch) +
         " mean_cosine=" + fmt_f(m.mean_cosine, 9) + " excluded=" + std::to_string(m.excluded) +
         " samples=" + std::to_string(m.samples.size()) + "\n";
}

}  // namespace probe

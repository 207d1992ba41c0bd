#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "estimand/bench.hpp"
#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/png.hpp"

namespace estimand {

inline void write_bench_csv_header(std::ostream& os) {
  os << "pairing,ac_method,bc_reporting,estimand_label,scale,truth,replications,failures,mean_est,bias,"
        "empirical_se,mc_se,coverage_95\n";
}

inline void write_bench_csv_row(std::ostream& os, const BenchRow& r) {
  os << r.pairing << ',' << method_name(r.ac_method) << ',' << bc_reporting_name(r.bc_reporting) << ','
     << r.label.to_string() << ',' << scale_name(r.scale) << ',' << format_double(r.truth) << ',' << r.replications
     << ',' << r.failures << ',' << format_double(r.mean_est) << ',' << format_double(r.bias) << ','
     << format_double(r.empirical_se) << ',' << format_double(r.mc_se) << ',' << format_double(r.coverage_95)
     << '\n';
}

inline void write_truth_csv(std::ostream& os, const BenchReport& report) {
  os << "population,model,estimand,value\n";
  auto block = [&](const char* model, const TrueEstimands& t) {
    os << "BC," << model << ",MTE," << format_double(t.mte_bc) << '\n';
    os << "BC," << model << ",CTEM," << format_double(t.ctem_bc) << '\n';
    os << "BC," << model << ",PACTE," << format_double(t.pacte_bc) << '\n';
  };
  block("BC", report.truth_bc);
  block("AC", report.truth_ac);
}

/// Bias bars with +/- mc_se whiskers, one bar per report row in row order.
/// Bars for pairings whose BC side reports a marginal estimate are blue,
/// conditional-coefficient pairings orange.
inline Canvas render_bias_plot(const BenchReport& report) {
  constexpr int W = 480, H = 320, margin = 30;
  Canvas canvas(W, H);
  const Rgb axis{60, 60, 60}, grid{200, 200, 200}, blue{52, 101, 164}, orange{230, 140, 40}, black{0, 0, 0};
  double span = 0.0;
  for (const auto& r : report.rows) span = std::max(span, std::abs(r.bias) + r.mc_se);
  if (!(span > 0.0)) span = 1.0;
  span *= 1.1;
  const int zero_y = H / 2;
  auto to_y = [&](double v) { return zero_y - static_cast<int>(std::lround(v / span * (H / 2 - margin))); };
  canvas.vline(margin, margin / 2, H - margin / 2, axis);
  for (int k = -4; k <= 4; ++k) canvas.hline(margin - 4, margin, to_y(span * k / 4.0 / 1.1), axis);
  canvas.hline(margin, W - margin / 2, zero_y, grid);
  const int n = static_cast<int>(report.rows.size());
  if (n > 0) {
    const int slot = (W - 2 * margin) / n;
    const int bar = std::max(4, slot / 2);
    for (int i = 0; i < n; ++i) {
      const auto& r = report.rows[static_cast<std::size_t>(i)];
      const int cx = margin + slot * i + slot / 2;
      const Rgb colour = r.bc_reporting == BcReporting::MarginalCrude ? blue : orange;
      canvas.fill_rect(cx - bar / 2, zero_y, cx + bar / 2, to_y(r.bias), colour);
      const int lo = to_y(r.bias - r.mc_se), hi = to_y(r.bias + r.mc_se);
      canvas.vline(cx, hi, lo, black);
      canvas.hline(cx - bar / 4, cx + bar / 4, hi, black);
      canvas.hline(cx - bar / 4, cx + bar / 4, lo, black);
    }
  }
  canvas.hline(margin, W - margin / 2, zero_y, axis);
  return canvas;
}

/// Writes results.csv, truth.csv, matrix.txt and bias.png into `dir`
/// (created if needed) and returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const BenchReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto open = [&](const char* name) {
    const auto path = dir / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    written.push_back(path);
    return os;
  };
  {
    auto os = open("results.csv");
    write_bench_csv_header(os);
    for (const auto& r : report.rows) write_bench_csv_row(os, r);
    if (!os) throw IoError("write failed for '" + (dir / "results.csv").string() + "'");
  }
  {
    auto os = open("truth.csv");
    write_truth_csv(os, report);
    if (!os) throw IoError("write failed for '" + (dir / "truth.csv").string() + "'");
  }
  {
    auto os = open("matrix.txt");
    if (report.matrix) os << render_matrix(*report.matrix, report.matrix_title);
    if (!os) throw IoError("write failed for '" + (dir / "matrix.txt").string() + "'");
  }
  const auto png = dir / "bias.png";
  render_bias_plot(report).write_png(png.string());
  written.push_back(png);
  return written;
}

}  // namespace estimand

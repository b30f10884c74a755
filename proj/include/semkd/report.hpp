#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "semkd/version.hpp"

namespace semkd {

// Experiment reports: per-device rows for each method, per-device
// normalization against the no-distillation baseline, aggregates, and
// deterministic CSV emission (shortest round-trip number formatting, fixed
// row order, no timestamps — identical runs produce identical bytes).

enum class Method { NoKd, StaticKd, Proposed };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::NoKd: return "no_kd";
    case Method::StaticKd: return "static_kd";
    case Method::Proposed: return "proposed";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  if (name == "no_kd") return Method::NoKd;
  if (name == "static_kd") return Method::StaticKd;
  if (name == "proposed") return Method::Proposed;
  throw std::invalid_argument("unknown method: " + name);
}

struct ReportRow {
  Method method = Method::NoKd;
  std::size_t device = 0;
  std::size_t n_distilled = 0;
  double omega = 0.0;
  double flops = 0.0;
  double eta = 0.0;           // compression ratio
  double payload_bits = 0.0;  // compressed payload
  double comm_time_s = 0.0;
  double compute_time_s = 0.0;
  double comm_energy_j = 0.0;
  double compute_energy_j = 0.0;
  double total_time_s = 0.0;
  double total_energy_j = 0.0;
  bool feasible = false;
  // Per-device value divided by the no_kd value; NaN when no base row exists.
  double norm_compute_time = std::numeric_limits<double>::quiet_NaN();
  double norm_transmit_energy = std::numeric_limits<double>::quiet_NaN();
};

struct MethodAggregate {
  Method method = Method::NoKd;
  double mean_omega = 0.0;
  double mean_flops = 0.0;
  double mean_norm_compute_time = 0.0;
  double mean_norm_transmit_energy = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  double teacher_omega = std::numeric_limits<double>::quiet_NaN();
  std::vector<ReportRow> rows;           // ordered by (method, device)
  std::vector<MethodAggregate> aggregates;
  double bandwidth_share_hz = 0.0;       // B/U, asserted to respect B
  double total_bandwidth_hz = 0.0;
};

// Fills the norm_* columns in place: each row's compute time and transmit
// energy divided by the no_kd row of the same device. no_kd rows come out
// exactly 1.0 by construction.
inline void normalize_rows(std::vector<ReportRow>& rows) {
  std::map<std::size_t, const ReportRow*> base;
  for (const ReportRow& r : rows)
    if (r.method == Method::NoKd) base[r.device] = &r;
  for (ReportRow& r : rows) {
    auto it = base.find(r.device);
    if (it == base.end()) continue;
    r.norm_compute_time = r.compute_time_s / it->second->compute_time_s;
    r.norm_transmit_energy = r.comm_energy_j / it->second->comm_energy_j;
  }
}

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

}  // namespace detail

inline constexpr const char* kReportHeader =
    "method,device,n_distilled,omega,flops,eta,payload_bits,comm_time_s,"
    "compute_time_s,comm_energy_j,compute_energy_j,total_time_s,"
    "total_energy_j,feasible,norm_compute_time,norm_transmit_energy";

inline std::string render_report_csv(const ExperimentReport& report) {
  std::string out;
  out += "# semkd report schema v" + std::to_string(kReportSchemaVersion) +
         " generator v" + kVersion + "\n";
  out += "# seed=" + std::to_string(report.seed) +
         " config=" + report.config_hash +
         " teacher_omega=" + detail::fmt(report.teacher_omega) +
         " bandwidth_share_hz=" + detail::fmt(report.bandwidth_share_hz) + "\n";
  for (const MethodAggregate& a : report.aggregates) {
    out += std::string("# aggregate method=") + method_name(a.method) +
           " mean_omega=" + detail::fmt(a.mean_omega) +
           " mean_flops=" + detail::fmt(a.mean_flops) +
           " mean_norm_compute_time=" + detail::fmt(a.mean_norm_compute_time) +
           " mean_norm_transmit_energy=" +
           detail::fmt(a.mean_norm_transmit_energy) +
           " objective=" + detail::fmt(a.objective) + "\n";
  }
  out += kReportHeader;
  out += "\n";
  for (const ReportRow& r : report.rows) {
    out += std::string(method_name(r.method)) + "," + detail::fmt(r.device) +
           "," + detail::fmt(r.n_distilled) + "," + detail::fmt(r.omega) + "," +
           detail::fmt(r.flops) + "," + detail::fmt(r.eta) + "," +
           detail::fmt(r.payload_bits) + "," + detail::fmt(r.comm_time_s) +
           "," + detail::fmt(r.compute_time_s) + "," +
           detail::fmt(r.comm_energy_j) + "," +
           detail::fmt(r.compute_energy_j) + "," +
           detail::fmt(r.total_time_s) + "," + detail::fmt(r.total_energy_j) +
           "," + (r.feasible ? "1" : "0") + "," +
           detail::fmt(r.norm_compute_time) + "," +
           detail::fmt(r.norm_transmit_energy) + "\n";
  }
  return out;
}

inline constexpr const char* kPlotHeader =
    "device,first_five,method,omega,norm_compute_time,norm_transmit_energy";

// Plot data grouped per device: one row per (device, method), with the first
// five devices marked for small-fleet figures.
inline std::string render_plot_csv(const ExperimentReport& report) {
  std::string out;
  out += "# semkd plot-data schema v" + std::to_string(kPlotSchemaVersion) +
         " generator v" + kVersion + "\n";
  out += kPlotHeader;
  out += "\n";
  std::map<std::size_t, std::vector<const ReportRow*>> by_device;
  for (const ReportRow& r : report.rows) by_device[r.device].push_back(&r);
  for (const auto& [device, rows] : by_device) {
    for (const ReportRow* r : rows) {
      out += detail::fmt(device) + "," + (device < 5 ? "1" : "0") + "," +
             method_name(r->method) + "," + detail::fmt(r->omega) + "," +
             detail::fmt(r->norm_compute_time) + "," +
             detail::fmt(r->norm_transmit_energy) + "\n";
    }
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace semkd

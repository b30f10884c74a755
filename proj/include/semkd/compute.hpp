#pragma once

#include <stdexcept>

#include "semkd/nn.hpp"
#include "semkd/scenario.hpp"

namespace semkd {

// Device-side computation: sensor capture plus semantic extraction.

struct ComputeCost {
  double capture_s = 0.0;     // T_cap
  double extraction_s = 0.0;  // T_ext
  double total_s = 0.0;       // T_cmp = T_cap + T_ext
  double energy_j = 0.0;      // P_cap*T_cap + P_ext*T_ext
  double flops = 0.0;         // A(theta)

  bool operator==(const ComputeCost&) const = default;
};

inline double capture_time(double pixels, double readout_rate_pps,
                           double pipeline_efficiency) {
  if (pixels <= 0.0 || readout_rate_pps <= 0.0)
    throw std::domain_error("capture_time: pixels and readout rate must be > 0");
  if (!(pipeline_efficiency > 0.0 && pipeline_efficiency <= 1.0))
    throw std::domain_error("capture_time: efficiency out of (0,1]");
  return pixels / (readout_rate_pps * pipeline_efficiency);
}

// FLOPs per inference. Counting rule: each dense layer costs
// 2*fan_in*fan_out (multiply-accumulate) + fan_out (bias add); each residual
// block additionally pays one add per feature for the skip connection.
// Depends on the architecture only, never on the weights.
inline double model_complexity(const Architecture& arch) {
  auto dense = [](std::size_t fan_in, std::size_t fan_out) {
    return static_cast<double>(2 * fan_in * fan_out + fan_out);
  };
  double flops = 0.0;
  if (arch.has_stem()) flops += dense(arch.input_dim, arch.width);
  flops += static_cast<double>(arch.blocks) *
           (dense(arch.width, arch.width) + static_cast<double>(arch.width));
  flops += dense(arch.width, arch.classes);
  return flops;
}

inline double model_complexity(const MicroNet& net) {
  return model_complexity(net.arch);
}

// inference_count is the number of SemEx passes per slot (one per captured
// image). Under the per-bit cost model the caller passes the payload bit
// count instead.
inline double extraction_time(double flops, double compute_speed_flops,
                              double inference_count = 1.0) {
  if (compute_speed_flops <= 0.0)
    throw std::domain_error("extraction_time: compute speed must be > 0");
  if (flops < 0.0 || inference_count < 0.0)
    throw std::domain_error("extraction_time: negative workload");
  return flops * inference_count / compute_speed_flops;
}

inline ComputeCost compute_cost(
    const DeviceProfile& profile, const MicroNet& net,
    ExtractionCostModel model = ExtractionCostModel::PerInference) {
  ComputeCost cost;
  cost.flops = model_complexity(net);
  cost.capture_s = capture_time(profile.sensor_pixels, profile.readout_rate_pps,
                                profile.pipeline_efficiency);
  const double count =
      model == ExtractionCostModel::PerInference ? 1.0 : profile.payload_bits;
  cost.extraction_s =
      extraction_time(cost.flops, profile.compute_speed_flops, count);
  cost.total_s = cost.capture_s + cost.extraction_s;
  cost.energy_j = profile.capture_power_w * cost.capture_s +
                  profile.extraction_power_w * cost.extraction_s;
  return cost;
}

}  // namespace semkd

#pragma once

#include <cmath>
#include <stdexcept>

#include "semkd/rng.hpp"
#include "semkd/scenario.hpp"

namespace semkd {

// Wireless link model: Rayleigh fading over a deterministic large-scale
// component, Shannon rate, and the resulting upload time and energy.

struct ChannelDraw {
  double small_scale = 0.0;  // g, squared magnitude of the fading coefficient
  double large_scale = 0.0;  // alpha = G * beta * d^-phi
  double gain = 0.0;         // h = alpha * g
};

inline double large_scale_fading(double path_gain_const, double shadowing,
                                 double distance_m, double pathloss_exp) {
  if (distance_m <= 0.0)
    throw std::domain_error("large_scale_fading: distance must be > 0");
  if (path_gain_const <= 0.0 || shadowing <= 0.0)
    throw std::domain_error("large_scale_fading: gain factors must be > 0");
  if (pathloss_exp < 0.0)
    throw std::domain_error("large_scale_fading: pathloss exponent must be >= 0");
  return path_gain_const * shadowing * std::pow(distance_m, -pathloss_exp);
}

// g is the squared magnitude of a unit-variance complex Gaussian, i.e.
// exponential with mean 1.
inline ChannelDraw sample_channel(const DeviceProfile& profile, RngStream& rng) {
  ChannelDraw draw;
  draw.large_scale =
      large_scale_fading(profile.path_gain_const, profile.shadowing,
                         profile.distance_m, profile.pathloss_exp);
  const double re = rng.normal() / std::sqrt(2.0);
  const double im = rng.normal() / std::sqrt(2.0);
  draw.small_scale = re * re + im * im;
  draw.gain = draw.large_scale * draw.small_scale;
  return draw;
}

// Shannon rate in bit/s; base-2 logarithm so payloads in bits divide evenly.
inline double transmission_rate(double bandwidth_hz, double power_w,
                                double gain, double noise_power_w) {
  if (noise_power_w <= 0.0)
    throw std::domain_error("transmission_rate: noise power must be > 0");
  if (bandwidth_hz <= 0.0)
    throw std::domain_error("transmission_rate: bandwidth must be > 0");
  if (power_w < 0.0 || gain < 0.0)
    throw std::domain_error("transmission_rate: power and gain must be >= 0");
  return bandwidth_hz * std::log2(1.0 + power_w * gain / noise_power_w);
}

inline double comm_time(double payload_bits, double rate_bps) {
  if (payload_bits < 0.0)
    throw std::domain_error("comm_time: payload must be >= 0");
  if (rate_bps <= 0.0) throw std::domain_error("comm_time: zero rate");
  return payload_bits / rate_bps;
}

inline double comm_energy(double comm_time_s, double power_w) {
  if (comm_time_s < 0.0 || power_w < 0.0)
    throw std::domain_error("comm_energy: negative input");
  return comm_time_s * power_w;
}

}  // namespace semkd

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "semkd/matrix.hpp"
#include "semkd/version.hpp"

namespace semkd {

// Transmitter-side semantic pipeline: per-map importance weights, the ranked
// importance list, threshold compression and the encoded wire frame.

struct FeatureMapStack {
  std::vector<Matrix> maps;  // K maps, all H x W
  int class_context = -1;    // class the weights refer to; -1 = aggregate

  std::size_t count() const { return maps.size(); }
};

inline void check_stack(const FeatureMapStack& stack) {
  if (stack.maps.empty())
    throw std::invalid_argument("feature map stack is empty");
  const std::size_t h = stack.maps.front().rows;
  const std::size_t w = stack.maps.front().cols;
  if (h == 0 || w == 0) throw std::invalid_argument("empty feature map");
  for (const Matrix& m : stack.maps)
    if (m.rows != h || m.cols != w)
      throw std::invalid_argument("feature maps differ in shape");
}

// w_k = mean of map k's activations.
inline std::vector<double> feature_map_weights(const FeatureMapStack& stack) {
  check_stack(stack);
  std::vector<double> weights(stack.count());
  for (std::size_t k = 0; k < stack.count(); ++k) {
    const Matrix& m = stack.maps[k];
    const double sum = std::accumulate(m.a.begin(), m.a.end(), 0.0);
    weights[k] = sum / static_cast<double>(m.a.size());
  }
  return weights;
}

// Importance list: map indices ordered by |w| descending, ties by index.
inline std::vector<std::size_t> build_ilfm(const std::vector<double>& weights) {
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return std::fabs(weights[a]) > std::fabs(weights[b]);
                   });
  return order;
}

struct CompressedSemantics {
  std::size_t total_maps = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> kept;  // indices with |w_k| >= eta, ascending
  std::vector<Matrix> kept_maps;
  std::size_t zeroed = 0;
  double ratio = 0.0;         // eta_t^u = zeroed / K
  double payload_bits = 0.0;  // (1 - ratio) * nominal payload
};

// Threshold rule: keep map k iff |w_k| >= eta. `nominal_payload_bits` is the
// uncompressed semantics size the payload accounting scales down.
inline CompressedSemantics compress(const FeatureMapStack& stack,
                                    const std::vector<double>& weights,
                                    double eta, double nominal_payload_bits) {
  if (!(eta >= 0.0 && eta < 1.0))
    throw std::invalid_argument("compress: eta out of [0,1)");
  check_stack(stack);
  if (weights.size() != stack.count())
    throw std::invalid_argument("compress: weight count mismatch");
  CompressedSemantics cs;
  cs.total_maps = stack.count();
  cs.rows = stack.maps.front().rows;
  cs.cols = stack.maps.front().cols;
  for (std::size_t k = 0; k < stack.count(); ++k) {
    if (std::fabs(weights[k]) >= eta) {
      cs.kept.push_back(k);
      cs.kept_maps.push_back(stack.maps[k]);
    }
  }
  cs.zeroed = cs.total_maps - cs.kept.size();
  cs.ratio = static_cast<double>(cs.zeroed) / static_cast<double>(cs.total_maps);
  cs.payload_bits = (1.0 - cs.ratio) * nominal_payload_bits;
  return cs;
}

inline CompressedSemantics compress(const FeatureMapStack& stack, double eta,
                                    double nominal_payload_bits) {
  return compress(stack, feature_map_weights(stack), eta, nominal_payload_bits);
}

// Wire frame, version 1, little-endian throughout:
//   magic "SMKF" | u8 version | u32 K | u32 H | u32 W
//   | ceil(K/8) bytes kept-index bitmap (bit k of byte k/8, LSB first)
//   | kept maps in ascending index order, row-major, IEEE-754 binary32.
// Header overhead in bits: frame_header_bits(K).
inline std::size_t frame_header_bits(std::size_t total_maps) {
  return 8 * (4 + 1 + 12 + (total_maps + 7) / 8);
}

inline std::vector<std::uint8_t> channel_encode(const CompressedSemantics& cs) {
  std::vector<std::uint8_t> out;
  out.reserve(frame_header_bits(cs.total_maps) / 8 +
              cs.kept_maps.size() * cs.rows * cs.cols * 4);
  const char magic[4] = {'S', 'M', 'K', 'F'};
  out.insert(out.end(), magic, magic + 4);
  out.push_back(static_cast<std::uint8_t>(kFrameVersion));
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u32(static_cast<std::uint32_t>(cs.total_maps));
  put_u32(static_cast<std::uint32_t>(cs.rows));
  put_u32(static_cast<std::uint32_t>(cs.cols));
  std::vector<std::uint8_t> bitmap((cs.total_maps + 7) / 8, 0);
  for (std::size_t k : cs.kept) bitmap[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  out.insert(out.end(), bitmap.begin(), bitmap.end());
  for (const Matrix& m : cs.kept_maps) {
    for (double v : m.a) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(bits);
    }
  }
  return out;
}

// Parses a frame back into a full stack: kept maps restored, pruned maps all
// zero. This is frame parsing only, not the receiver's semantic inverse.
inline FeatureMapStack channel_decode(const std::vector<std::uint8_t>& frame) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > frame.size())
      throw std::invalid_argument("channel_decode: truncated frame");
  };
  need(5);
  if (std::memcmp(frame.data(), "SMKF", 4) != 0)
    throw std::invalid_argument("channel_decode: bad magic");
  pos = 4;
  if (frame[pos++] != static_cast<std::uint8_t>(kFrameVersion))
    throw std::invalid_argument("channel_decode: unsupported frame version");
  auto get_u32 = [&]() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(frame[pos++]) << (8 * i);
    return v;
  };
  const std::size_t total = get_u32();
  const std::size_t rows = get_u32();
  const std::size_t cols = get_u32();
  const std::size_t bitmap_bytes = (total + 7) / 8;
  need(bitmap_bytes);
  const std::size_t bitmap_pos = pos;
  pos += bitmap_bytes;
  FeatureMapStack stack;
  stack.maps.assign(total, Matrix(rows, cols));
  for (std::size_t k = 0; k < total; ++k) {
    const bool kept = (frame[bitmap_pos + k / 8] >> (k % 8)) & 1u;
    if (!kept) continue;
    for (double& v : stack.maps[k].a) {
      const std::uint32_t bits = get_u32();
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
  }
  if (pos != frame.size())
    throw std::invalid_argument("channel_decode: trailing bytes");
  return stack;
}

inline std::size_t encoded_bits(const CompressedSemantics& cs) {
  return frame_header_bits(cs.total_maps) +
         32 * cs.kept.size() * cs.rows * cs.cols;
}

}  // namespace semkd

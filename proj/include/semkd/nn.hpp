#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "semkd/data.hpp"
#include "semkd/matrix.hpp"
#include "semkd/rng.hpp"
#include "semkd/version.hpp"

namespace semkd {

// Residual MLP classifier. An input projection ("stem") lifts the input to
// the block width when the two differ; each residual block adds a rectified
// dense transform onto its input; a linear head maps the final features to
// class logits.
//
//   x -> [stem: relu(Ws x + bs)] -> a0
//   a_i = a_{i-1} + relu(W_i a_{i-1} + b_i)      i = 1..blocks
//   logits = Wh a_blocks + bh
struct Architecture {
  std::size_t input_dim = 16;
  std::size_t width = 64;
  std::size_t blocks = 4;
  std::size_t classes = 10;

  bool operator==(const Architecture&) const = default;

  bool has_stem() const { return input_dim != width; }

  std::size_t stem_params() const {
    return has_stem() ? width * input_dim + width : 0;
  }
  std::size_t block_params() const { return width * width + width; }
  std::size_t head_params() const { return classes * width + classes; }

  std::size_t param_count() const {
    return stem_params() + blocks * block_params() + head_params();
  }

  // Offset of block i's weights in the flat parameter vector.
  std::size_t block_offset(std::size_t i) const {
    return stem_params() + i * block_params();
  }
  std::size_t head_offset() const { return block_offset(blocks); }

  std::string id() const {
    return "res-mlp/in" + std::to_string(input_dim) + "-w" +
           std::to_string(width) + "-b" + std::to_string(blocks) + "-c" +
           std::to_string(classes);
  }
};

struct MicroNet {
  Architecture arch;
  std::vector<double> theta;

  bool operator==(const MicroNet&) const = default;
};

// Residual blocks start close to the identity: their transform weights are
// drawn at a fraction of the stem/head bound so feature magnitudes stay on
// one scale regardless of depth and a single learning rate fits every
// student size.
inline constexpr double kBlockInitScale = 0.3;

namespace detail {

// Weights uniform on +-scale*sqrt(3/fan_in), biases zero.
inline void init_dense(double* w, double* b, std::size_t out, std::size_t in,
                       RngStream& rng, double scale = 1.0) {
  const double bound = scale * std::sqrt(3.0 / static_cast<double>(in));
  for (std::size_t i = 0; i < out * in; ++i) w[i] = rng.uniform(-bound, bound);
  for (std::size_t i = 0; i < out; ++i) b[i] = 0.0;
}

inline Matrix weights_view(const std::vector<double>& theta, std::size_t off,
                           std::size_t out, std::size_t in) {
  Matrix w(out, in);
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
            theta.begin() + static_cast<std::ptrdiff_t>(off + out * in),
            w.a.begin());
  return w;
}

}  // namespace detail

inline MicroNet make_micronet(const Architecture& arch, RngStream& rng) {
  MicroNet net;
  net.arch = arch;
  net.theta.resize(arch.param_count());
  double* p = net.theta.data();
  if (arch.has_stem()) {
    detail::init_dense(p, p + arch.width * arch.input_dim, arch.width,
                       arch.input_dim, rng);
    p += arch.stem_params();
  }
  for (std::size_t i = 0; i < arch.blocks; ++i) {
    detail::init_dense(p, p + arch.width * arch.width, arch.width, arch.width,
                       rng, kBlockInitScale);
    p += arch.block_params();
  }
  detail::init_dense(p, p + arch.classes * arch.width, arch.classes,
                     arch.width, rng);
  return net;
}

struct ForwardTrace {
  Matrix stem_pre;                // batch x width, only if the net has a stem
  std::vector<Matrix> block_pre;  // pre-activation of each block
  std::vector<Matrix> acts;       // acts[0] = stem output (or the input),
                                  // acts[i] = output of block i
  Matrix logits;

  const Matrix& features() const { return acts.back(); }
};

inline ForwardTrace forward(const MicroNet& net, const Matrix& x) {
  const Architecture& arch = net.arch;
  if (x.cols != arch.input_dim)
    throw std::invalid_argument("forward: input width " +
                                std::to_string(x.cols) + " != input_dim " +
                                std::to_string(arch.input_dim));
  ForwardTrace t;
  t.acts.reserve(arch.blocks + 1);
  if (arch.has_stem()) {
    Matrix ws = detail::weights_view(net.theta, 0, arch.width, arch.input_dim);
    std::vector<double> bs(net.theta.begin() + arch.width * arch.input_dim,
                           net.theta.begin() + arch.stem_params());
    t.stem_pre = affine(x, ws, bs);
    Matrix a = t.stem_pre;
    for (double& v : a.a) v = std::max(v, 0.0);
    t.acts.push_back(std::move(a));
  } else {
    t.acts.push_back(x);
  }
  for (std::size_t i = 0; i < arch.blocks; ++i) {
    const std::size_t off = arch.block_offset(i);
    Matrix w = detail::weights_view(net.theta, off, arch.width, arch.width);
    std::vector<double> b(
        net.theta.begin() + static_cast<std::ptrdiff_t>(off + arch.width * arch.width),
        net.theta.begin() + static_cast<std::ptrdiff_t>(off + arch.block_params()));
    t.block_pre.push_back(affine(t.acts.back(), w, b));
    Matrix a = t.acts.back();
    const Matrix& pre = t.block_pre.back();
    for (std::size_t k = 0; k < a.a.size(); ++k)
      a.a[k] += std::max(pre.a[k], 0.0);
    t.acts.push_back(std::move(a));
  }
  const std::size_t hoff = arch.head_offset();
  Matrix wh = detail::weights_view(net.theta, hoff, arch.classes, arch.width);
  std::vector<double> bh(
      net.theta.begin() + static_cast<std::ptrdiff_t>(hoff + arch.classes * arch.width),
      net.theta.end());
  t.logits = affine(t.acts.back(), wh, bh);
  return t;
}

inline Matrix logits(const MicroNet& net, const Matrix& x) {
  return forward(net, x).logits;
}

// Exact gradient of the loss recorded by `trace` under upstream dL/dlogits.
// The caller folds any 1/batch factor into dlogits.
inline std::vector<double> backward(const MicroNet& net, const Matrix& x,
                                    const ForwardTrace& trace,
                                    const Matrix& dlogits) {
  const Architecture& arch = net.arch;
  if (dlogits.rows != trace.logits.rows || dlogits.cols != trace.logits.cols)
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  if (trace.acts.empty() || trace.acts.front().rows != x.rows)
    throw std::invalid_argument("backward: trace does not match input batch");

  std::vector<double> grad(net.theta.size(), 0.0);

  const std::size_t hoff = arch.head_offset();
  Matrix wh = detail::weights_view(net.theta, hoff, arch.classes, arch.width);
  affine_backward_params(trace.features(), dlogits, grad.data() + hoff,
                         grad.data() + hoff + arch.classes * arch.width);
  Matrix da = affine_backward_input(dlogits, wh);

  for (std::size_t i = arch.blocks; i-- > 0;) {
    const Matrix& pre = trace.block_pre[i];
    Matrix dz = da;
    for (std::size_t k = 0; k < dz.a.size(); ++k)
      if (pre.a[k] <= 0.0) dz.a[k] = 0.0;
    const std::size_t off = arch.block_offset(i);
    affine_backward_params(trace.acts[i], dz, grad.data() + off,
                           grad.data() + off + arch.width * arch.width);
    Matrix w = detail::weights_view(net.theta, off, arch.width, arch.width);
    Matrix dskip = affine_backward_input(dz, w);
    for (std::size_t k = 0; k < da.a.size(); ++k) da.a[k] += dskip.a[k];
  }

  if (arch.has_stem()) {
    Matrix dz = da;
    for (std::size_t k = 0; k < dz.a.size(); ++k)
      if (trace.stem_pre.a[k] <= 0.0) dz.a[k] = 0.0;
    affine_backward_params(x, dz, grad.data(),
                           grad.data() + arch.width * arch.input_dim);
  }
  return grad;
}

inline void sgd_step(std::vector<double>& theta,
                     const std::vector<double>& grad, double lr) {
  if (theta.size() != grad.size())
    throw std::invalid_argument("sgd_step: length mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
}

inline Matrix softmax_rows(const Matrix& logits_mat) {
  Matrix p = logits_mat;
  for (std::size_t r = 0; r < p.rows; ++r) {
    double* row = p.row(r);
    double m = row[0];
    for (std::size_t c = 1; c < p.cols; ++c) m = std::max(m, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < p.cols; ++c) {
      row[c] = std::exp(row[c] - m);
      sum += row[c];
    }
    for (std::size_t c = 0; c < p.cols; ++c) row[c] /= sum;
  }
  return p;
}

struct LossGrad {
  double loss = 0.0;
  Matrix dlogits;  // includes the 1/batch factor
};

inline LossGrad cross_entropy(const Matrix& logits_mat,
                              const std::vector<int>& labels) {
  if (logits_mat.rows != labels.size())
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  LossGrad out;
  out.dlogits = softmax_rows(logits_mat);
  const double inv_n = 1.0 / static_cast<double>(logits_mat.rows);
  for (std::size_t r = 0; r < logits_mat.rows; ++r) {
    double* row = out.dlogits.row(r);
    const int y = labels[r];
    out.loss -= std::log(std::max(row[y], 1e-300));
    row[y] -= 1.0;
    for (std::size_t c = 0; c < logits_mat.cols; ++c) row[c] *= inv_n;
  }
  out.loss *= inv_n;
  return out;
}

// Ties broken toward the lowest class index.
inline int argmax_row(const double* row, std::size_t n) {
  int best = 0;
  for (std::size_t c = 1; c < n; ++c)
    if (row[c] > row[best]) best = static_cast<int>(c);
  return best;
}

inline double evaluate_accuracy(const MicroNet& net, const LabeledSet& set) {
  if (set.size() == 0)
    throw std::invalid_argument("evaluate_accuracy: empty set");
  Matrix out = logits(net, set.inputs);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < out.rows; ++r)
    if (argmax_row(out.row(r), out.cols) == set.labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

// Checkpoint: architecture header + flat little-endian parameter dump.
inline void save_net(const MicroNet& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_net: cannot open " + path);
  const char magic[4] = {'S', 'M', 'K', 'N'};
  f.write(magic, 4);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(kCheckpointVersion));
  put_u32(static_cast<std::uint32_t>(net.arch.input_dim));
  put_u32(static_cast<std::uint32_t>(net.arch.width));
  put_u32(static_cast<std::uint32_t>(net.arch.blocks));
  put_u32(static_cast<std::uint32_t>(net.arch.classes));
  for (double v : net.theta) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!f) throw std::runtime_error("save_net: write failed for " + path);
}

inline MicroNet load_net(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_net: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "SMKN", 4) != 0)
    throw std::runtime_error("load_net: bad magic in " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t version = get_u32();
  if (version != static_cast<std::uint32_t>(kCheckpointVersion))
    throw std::runtime_error("load_net: unsupported checkpoint version");
  MicroNet net;
  net.arch.input_dim = get_u32();
  net.arch.width = get_u32();
  net.arch.blocks = get_u32();
  net.arch.classes = get_u32();
  net.theta.resize(net.arch.param_count());
  for (double& v : net.theta) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  if (!f) throw std::runtime_error("load_net: truncated file " + path);
  return net;
}

}  // namespace semkd

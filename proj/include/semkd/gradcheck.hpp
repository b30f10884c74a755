#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "semkd/distill.hpp"
#include "semkd/nn.hpp"

namespace semkd {

// Central finite-difference oracle for the analytic backward pass. Relies on
// forward() only, never on backward(), so the two routes stay independent.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t nets_checked = 0;
};

inline double finite_difference(MicroNet& net,
                                const std::function<double(const MicroNet&)>& loss,
                                std::size_t index, double step) {
  const double saved = net.theta[index];
  net.theta[index] = saved + step;
  const double up = loss(net);
  net.theta[index] = saved - step;
  const double down = loss(net);
  net.theta[index] = saved;
  return (up - down) / (2.0 * step);
}

inline void accumulate_check(GradCheckResult& result, MicroNet net,
                             const std::function<double(const MicroNet&)>& loss,
                             const std::vector<double>& analytic,
                             double step = 1e-5) {
  for (std::size_t i = 0; i < net.theta.size(); ++i) {
    const double fd = finite_difference(net, loss, i, step);
    const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
    const double rel = std::fabs(fd - analytic[i]) / denom;
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.parameters_checked;
  }
}

// Checks `nets` random two-block networks against the oracle, once with a
// linear functional of the logits and once with the softened divergence
// against a random teacher.
inline GradCheckResult run_gradcheck(std::size_t nets, std::uint64_t seed = 12345) {
  GradCheckResult result;
  for (std::size_t trial = 0; trial < nets; ++trial) {
    RngStream rng = RngStream::derive(seed, 0xFD, trial);
    const Architecture arch{4 + rng.uniform_index(4), 8, 2,
                            3 + rng.uniform_index(3)};
    MicroNet net = make_micronet(arch, rng);
    MicroNet teacher = make_micronet(arch, rng);
    const std::size_t batch = 3;
    Matrix x(batch, arch.input_dim);
    for (double& v : x.a) v = rng.normal();

    Matrix upstream(batch, arch.classes);
    for (double& v : upstream.a) v = rng.normal();
    {
      ForwardTrace trace = forward(net, x);
      std::vector<double> analytic = backward(net, x, trace, upstream);
      auto loss = [&](const MicroNet& n) {
        const Matrix out = logits(n, x);
        double sum = 0.0;
        for (std::size_t k = 0; k < out.a.size(); ++k)
          sum += upstream.a[k] * out.a[k];
        return sum;
      };
      accumulate_check(result, net, loss, analytic);
    }
    {
      const double zeta = 1.0 + rng.uniform();
      ForwardTrace trace = forward(net, x);
      const Matrix teacher_logits = logits(teacher, x);
      LossGrad lg = kl_loss_grad(trace.logits, teacher_logits, zeta);
      std::vector<double> analytic = backward(net, x, trace, lg.dlogits);
      auto loss = [&](const MicroNet& n) {
        return kl_loss(logits(n, x), teacher_logits, zeta);
      };
      accumulate_check(result, net, loss, analytic);
    }
    ++result.nets_checked;
  }
  return result;
}

}  // namespace semkd

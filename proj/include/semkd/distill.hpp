#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semkd/nn.hpp"

namespace semkd {

// Which softened distribution weights the log-ratio terms of the divergence.
// `Student` matches the loss as used throughout the three stages; the
// conventional teacher-weighted form is available as an alternative.
enum class KlWeighting { Student, Teacher };

enum class AlphaSchedule { Linear };

struct DistillSchedule {
  double temperature = 2.0;                      // zeta
  std::array<std::size_t, 3> stage_epochs{5, 5, 10};
  AlphaSchedule alpha = AlphaSchedule::Linear;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t warmup_epochs = 2;  // teacher snapshot taken after this many
  KlWeighting weighting = KlWeighting::Student;
  // The fresh head starts near zero so the softened student distribution
  // opens uniform; a confidently wrong start stalls the student-weighted
  // divergence.
  double head_init_scale = 0.01;

  bool operator==(const DistillSchedule&) const = default;
};

// Shift parameter as a function of stage-2 progress in [0, 1]:
// alpha(0) = 1, alpha(1) = 0, monotone non-increasing.
inline double alpha_at(AlphaSchedule sched, double progress) {
  if (progress < 0.0 || progress > 1.0)
    throw std::invalid_argument("alpha_at: progress outside [0,1]");
  switch (sched) {
    case AlphaSchedule::Linear:
      return 1.0 - progress;
  }
  throw std::logic_error("alpha_at: unknown schedule");
}

inline void check_finite(const Matrix& m, const char* what) {
  for (double v : m.a)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(what) + ": non-finite value");
}

// Temperature-softened softmax of one logit row, max-subtracted.
inline std::vector<double> softened_distribution(
    const std::vector<double>& logit_row, double zeta) {
  if (zeta <= 0.0) throw std::invalid_argument("temperature must be > 0");
  if (logit_row.empty())
    throw std::invalid_argument("softened_distribution: empty logits");
  double m = logit_row[0];
  for (double v : logit_row) {
    if (!std::isfinite(v))
      throw std::invalid_argument("softened_distribution: non-finite logit");
    m = std::max(m, v);
  }
  std::vector<double> p(logit_row.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logit_row[i] - m) / zeta);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace detail {

// Row-wise softened log-probabilities: z/zeta - logsumexp(z/zeta).
inline Matrix softened_log_rows(const Matrix& logits_mat, double zeta) {
  Matrix lp = logits_mat;
  for (std::size_t r = 0; r < lp.rows; ++r) {
    double* row = lp.row(r);
    double m = row[0];
    for (std::size_t c = 0; c < lp.cols; ++c) m = std::max(m, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < lp.cols; ++c)
      sum += std::exp((row[c] - m) / zeta);
    const double lse = m / zeta + std::log(sum);
    for (std::size_t c = 0; c < lp.cols; ++c) row[c] = row[c] / zeta - lse;
  }
  return lp;
}

}  // namespace detail

// Batch-mean KL divergence between softened student and teacher
// distributions. Student weighting puts the student distribution in both the
// weight and the numerator of the log ratio:
//   L = sum_i p_i log(p_i / q_i),  p = softened(student), q = softened(teacher)
inline double kl_loss(const Matrix& student_logits, const Matrix& teacher_logits,
                      double zeta, KlWeighting weighting = KlWeighting::Student) {
  if (zeta <= 0.0) throw std::invalid_argument("temperature must be > 0");
  if (student_logits.rows != teacher_logits.rows ||
      student_logits.cols != teacher_logits.cols)
    throw std::invalid_argument("kl_loss: shape mismatch");
  check_finite(student_logits, "kl_loss(student)");
  check_finite(teacher_logits, "kl_loss(teacher)");
  Matrix lp = detail::softened_log_rows(student_logits, zeta);
  Matrix lq = detail::softened_log_rows(teacher_logits, zeta);
  double total = 0.0;
  for (std::size_t r = 0; r < lp.rows; ++r) {
    const double* prow = lp.row(r);
    const double* qrow = lq.row(r);
    for (std::size_t c = 0; c < lp.cols; ++c) {
      if (weighting == KlWeighting::Student)
        total += std::exp(prow[c]) * (prow[c] - qrow[c]);
      else
        total += std::exp(qrow[c]) * (qrow[c] - prow[c]);
    }
  }
  return total / static_cast<double>(lp.rows);
}

// Gradient of kl_loss w.r.t. the student logits (1/batch folded in).
// Student weighting: dL/ds_j = (p_j / zeta) * (log(p_j/q_j) - L_row)
// Teacher weighting: dL/ds_j = (p_j - q_j) / zeta
inline LossGrad kl_loss_grad(const Matrix& student_logits,
                             const Matrix& teacher_logits, double zeta,
                             KlWeighting weighting = KlWeighting::Student) {
  if (zeta <= 0.0) throw std::invalid_argument("temperature must be > 0");
  if (student_logits.rows != teacher_logits.rows ||
      student_logits.cols != teacher_logits.cols)
    throw std::invalid_argument("kl_loss_grad: shape mismatch");
  check_finite(student_logits, "kl_loss_grad(student)");
  check_finite(teacher_logits, "kl_loss_grad(teacher)");
  Matrix lp = detail::softened_log_rows(student_logits, zeta);
  Matrix lq = detail::softened_log_rows(teacher_logits, zeta);
  LossGrad out;
  out.dlogits = Matrix(lp.rows, lp.cols);
  const double inv_n = 1.0 / static_cast<double>(lp.rows);
  for (std::size_t r = 0; r < lp.rows; ++r) {
    const double* prow = lp.row(r);
    const double* qrow = lq.row(r);
    double* grow = out.dlogits.row(r);
    double row_kl = 0.0;
    for (std::size_t c = 0; c < lp.cols; ++c)
      row_kl += std::exp(prow[c]) * (prow[c] - qrow[c]);
    if (weighting == KlWeighting::Student) {
      out.loss += row_kl;
      for (std::size_t c = 0; c < lp.cols; ++c) {
        const double p = std::exp(prow[c]);
        grow[c] = inv_n * p * ((prow[c] - qrow[c]) - row_kl) / zeta;
      }
    } else {
      double row_rev = 0.0;
      for (std::size_t c = 0; c < lp.cols; ++c)
        row_rev += std::exp(qrow[c]) * (qrow[c] - prow[c]);
      out.loss += row_rev;
      for (std::size_t c = 0; c < lp.cols; ++c)
        grow[c] = inv_n * (std::exp(prow[c]) - std::exp(qrow[c])) / zeta;
    }
  }
  out.loss *= inv_n;
  return out;
}

// Stage-2 bridge: alpha * KL(vs initial teacher) + (1-alpha) * KL(vs final).
inline double transitional_loss(const Matrix& student_logits,
                                const Matrix& init_teacher_logits,
                                const Matrix& final_teacher_logits,
                                double alpha, double zeta,
                                KlWeighting weighting = KlWeighting::Student) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("transitional_loss: alpha outside [0,1]");
  return alpha * kl_loss(student_logits, init_teacher_logits, zeta, weighting) +
         (1.0 - alpha) *
             kl_loss(student_logits, final_teacher_logits, zeta, weighting);
}

inline LossGrad transitional_loss_grad(const Matrix& student_logits,
                                       const Matrix& init_teacher_logits,
                                       const Matrix& final_teacher_logits,
                                       double alpha, double zeta,
                                       KlWeighting weighting = KlWeighting::Student) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("transitional_loss_grad: alpha outside [0,1]");
  LossGrad a = kl_loss_grad(student_logits, init_teacher_logits, zeta, weighting);
  LossGrad b = kl_loss_grad(student_logits, final_teacher_logits, zeta, weighting);
  LossGrad out;
  out.loss = alpha * a.loss + (1.0 - alpha) * b.loss;
  out.dlogits = Matrix(a.dlogits.rows, a.dlogits.cols);
  for (std::size_t k = 0; k < out.dlogits.a.size(); ++k)
    out.dlogits.a[k] = alpha * a.dlogits.a[k] + (1.0 - alpha) * b.dlogits.a[k];
  return out;
}

// Student construction: the input projection and the first n_distilled
// residual blocks transfer verbatim from the teacher; the head is fresh.
inline MicroNet build_student(const MicroNet& teacher, std::size_t n_distilled,
                              RngStream& rng, double head_init_scale = 0.01) {
  const Architecture& tarch = teacher.arch;
  if (n_distilled < 1 || n_distilled > tarch.blocks)
    throw std::invalid_argument(
        "build_student: n_distilled must be in [1, " +
        std::to_string(tarch.blocks) + "], got " + std::to_string(n_distilled));
  Architecture sarch = tarch;
  sarch.blocks = n_distilled;
  MicroNet student;
  student.arch = sarch;
  student.theta.resize(sarch.param_count());
  const std::size_t prefix = sarch.block_offset(n_distilled);
  std::copy(teacher.theta.begin(),
            teacher.theta.begin() + static_cast<std::ptrdiff_t>(prefix),
            student.theta.begin());
  detail::init_dense(student.theta.data() + sarch.head_offset(),
                     student.theta.data() + sarch.head_offset() +
                         sarch.classes * sarch.width,
                     sarch.classes, sarch.width, rng, head_init_scale);
  return student;
}

struct TeacherPair {
  MicroNet init_snapshot;  // early-baseline parameters
  MicroNet final_model;    // fully trained parameters
  double init_val_accuracy = 0.0;
  double final_val_accuracy = 0.0;
};

inline TeacherPair make_teacher_pair(MicroNet init_snapshot, MicroNet final_model,
                                     const LabeledSet& val) {
  if (!(init_snapshot.arch == final_model.arch))
    throw std::invalid_argument("TeacherPair: architecture mismatch");
  TeacherPair pair;
  pair.init_val_accuracy = evaluate_accuracy(init_snapshot, val);
  pair.final_val_accuracy = evaluate_accuracy(final_model, val);
  if (pair.final_val_accuracy < pair.init_val_accuracy)
    throw std::invalid_argument(
        "TeacherPair: final teacher accuracy below the warmup snapshot");
  pair.init_snapshot = std::move(init_snapshot);
  pair.final_model = std::move(final_model);
  return pair;
}

struct EpochLoss {
  int stage = 0;  // 1, 2 or 3
  std::size_t epoch = 0;
  double loss = 0.0;  // mean batch loss over the epoch
  double alpha = 0.0; // stage-2 shift, 0 elsewhere
};

struct TrainResult {
  MicroNet net;
  std::vector<EpochLoss> trace;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx,
                          std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols);
  for (std::size_t i = begin; i < end; ++i)
    std::copy(m.row(idx[i]), m.row(idx[i]) + m.cols, out.row(i - begin));
  return out;
}

}  // namespace detail

// The three-stage procedure: match the warmup teacher, bridge with the
// shifting transitional loss, then match the fully trained teacher. Each
// stage minimizes its loss with plain SGD on shuffled mini-batches; the sum
// of the three stage losses is what the whole run drives down.
inline TrainResult train_three_stage(MicroNet student, const TeacherPair& teachers,
                                     const LabeledSet& data,
                                     const DistillSchedule& sched,
                                     RngStream& rng) {
  if (sched.temperature <= 0.0)
    throw std::invalid_argument("train_three_stage: temperature must be > 0");
  if (sched.batch_size == 0)
    throw std::invalid_argument("train_three_stage: batch_size must be >= 1");
  if (data.size() == 0)
    throw std::invalid_argument("train_three_stage: empty training data");

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const double zeta = sched.temperature;
  for (int stage = 1; stage <= 3; ++stage) {
    const std::size_t epochs = sched.stage_epochs[static_cast<std::size_t>(stage - 1)];
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      double alpha = 0.0;
      if (stage == 2) {
        const double progress =
            epochs > 1 ? static_cast<double>(epoch) /
                             static_cast<double>(epochs - 1)
                       : 0.5;
        alpha = alpha_at(sched.alpha, progress);
      }
      rng.shuffle(order);
      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t begin = 0; begin < order.size();
           begin += sched.batch_size) {
        const std::size_t end = std::min(begin + sched.batch_size, order.size());
        Matrix x = detail::gather_rows(data.inputs, order, begin, end);
        ForwardTrace trace = forward(student, x);
        LossGrad lg;
        switch (stage) {
          case 1:
            lg = kl_loss_grad(trace.logits, logits(teachers.init_snapshot, x),
                              zeta, sched.weighting);
            break;
          case 2:
            lg = transitional_loss_grad(
                trace.logits, logits(teachers.init_snapshot, x),
                logits(teachers.final_model, x), alpha, zeta, sched.weighting);
            break;
          default:
            lg = kl_loss_grad(trace.logits, logits(teachers.final_model, x),
                              zeta, sched.weighting);
        }
        if (!std::isfinite(lg.loss))
          throw TrainingDiverged("train_three_stage: non-finite loss in stage " +
                                 std::to_string(stage));
        std::vector<double> grad = backward(student, x, trace, lg.dlogits);
        sgd_step(student.theta, grad, sched.learning_rate);
        epoch_loss += lg.loss;
        ++batches;
      }
      result.trace.push_back(
          {stage, epoch, epoch_loss / static_cast<double>(batches), alpha});
    }
  }
  result.net = std::move(student);
  return result;
}

}  // namespace semkd

#include <catch_amalgamated.hpp>

#include <cmath>

#include "semkd/distill.hpp"
#include "semkd/gradcheck.hpp"
#include "semkd/harness.hpp"

using namespace semkd;

namespace {

// Independent high-precision oracle: direct summation in extended precision,
// no max-subtraction, no shared code with the implementation.
long double kl_oracle_row(const std::vector<double>& s,
                          const std::vector<double>& t, double zeta) {
  long double ps = 0.0L, ts = 0.0L;
  for (double v : s) ps += expl(static_cast<long double>(v) / zeta);
  for (double v : t) ts += expl(static_cast<long double>(v) / zeta);
  long double kl = 0.0L;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const long double p = expl(static_cast<long double>(s[i]) / zeta) / ps;
    const long double q = expl(static_cast<long double>(t[i]) / zeta) / ts;
    kl += p * logl(p / q);
  }
  return kl;
}

Matrix row_matrix(const std::vector<double>& row) {
  Matrix m(1, row.size());
  m.a = row;
  return m;
}

}  // namespace

TEST_CASE("softened distribution basics") {
  // equal logits -> uniform
  const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  for (double p : softened_distribution(flat, 2.0))
    REQUIRE_THAT(p, Catch::Matchers::WithinRel(0.25, 1e-12));

  // closed form: logits [ln 2, 0] at zeta 1 -> [2/3, 1/3]
  const std::vector<double> two{std::log(2.0), 0.0};
  const std::vector<double> p = softened_distribution(two, 1.0);
  REQUIRE_THAT(p[0], Catch::Matchers::WithinRel(2.0 / 3.0, 1e-12));
  REQUIRE_THAT(p[1], Catch::Matchers::WithinRel(1.0 / 3.0, 1e-12));

  REQUIRE_THROWS_AS(softened_distribution(flat, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(
      softened_distribution({1.0, std::numeric_limits<double>::infinity()}, 1.0),
      std::invalid_argument);
}

TEST_CASE("large temperature flattens any distribution") {
  RngStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(6);
    for (double& v : z) v = rng.uniform(-1.0, 1.0);
    const std::vector<double> p = softened_distribution(z, 1e4);
    for (double v : p) REQUIRE(std::fabs(v - 1.0 / 6.0) < 1e-3);
  }
}

TEST_CASE("softened distribution sums to one for any finite logits") {
  RngStream rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(2 + rng.uniform_index(10));
    for (double& v : z) v = rng.uniform(-50.0, 50.0);
    const double zeta = rng.uniform(0.1, 10.0);
    double sum = 0.0;
    for (double p : softened_distribution(z, zeta)) sum += p;
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("kl loss is zero at equality and nonnegative") {
  RngStream rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix s(2, 5);
    for (double& v : s.a) v = rng.uniform(-8.0, 8.0);
    const double zeta = rng.uniform(0.5, 5.0);
    REQUIRE(std::fabs(kl_loss(s, s, zeta)) < 1e-12);
    Matrix t(2, 5);
    for (double& v : t.a) v = rng.uniform(-8.0, 8.0);
    REQUIRE(kl_loss(s, t, zeta) >= 0.0);
  }
}

TEST_CASE("kl at the deterministic limit is ln 2") {
  // student effectively [1, 0], teacher [0.5, 0.5]
  const Matrix s = row_matrix({60.0, -60.0});
  const Matrix t = row_matrix({0.0, 0.0});
  REQUIRE_THAT(kl_loss(s, t, 1.0),
               Catch::Matchers::WithinRel(std::log(2.0), 1e-9));
}

TEST_CASE("kl matches the independent summation oracle") {
  RngStream rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t classes = 3 + rng.uniform_index(8);
    std::vector<double> s(classes), t(classes);
    for (double& v : s) v = rng.uniform(-6.0, 6.0);
    for (double& v : t) v = rng.uniform(-6.0, 6.0);
    const double zeta = rng.uniform(0.5, 4.0);
    const double expected = static_cast<double>(kl_oracle_row(s, t, zeta));
    REQUIRE_THAT(kl_loss(row_matrix(s), row_matrix(t), zeta),
                 Catch::Matchers::WithinRel(expected, 1e-10));
  }
}

TEST_CASE("batch mean equals the mean of per-row losses") {
  RngStream rng(31);
  Matrix s(4, 6), t(4, 6);
  for (double& v : s.a) v = rng.uniform(-3.0, 3.0);
  for (double& v : t.a) v = rng.uniform(-3.0, 3.0);
  double mean = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> srow(s.row(r), s.row(r) + 6);
    std::vector<double> trow(t.row(r), t.row(r) + 6);
    mean += kl_loss(row_matrix(srow), row_matrix(trow), 2.0);
  }
  REQUIRE_THAT(kl_loss(s, t, 2.0),
               Catch::Matchers::WithinRel(mean / 4.0, 1e-12));
}

TEST_CASE("transitional loss is the exact convex combination") {
  RngStream rng(13);
  Matrix s(3, 5), t0(3, 5), t1(3, 5);
  for (double& v : s.a) v = rng.uniform(-4.0, 4.0);
  for (double& v : t0.a) v = rng.uniform(-4.0, 4.0);
  for (double& v : t1.a) v = rng.uniform(-4.0, 4.0);
  const double zeta = 2.0;
  const double kl0 = kl_loss(s, t0, zeta);
  const double kl1 = kl_loss(s, t1, zeta);
  REQUIRE(transitional_loss(s, t0, t1, 1.0, zeta) == kl0);
  REQUIRE(transitional_loss(s, t0, t1, 0.0, zeta) == kl1);
  REQUIRE_THAT(transitional_loss(s, t0, t1, 0.5, zeta),
               Catch::Matchers::WithinRel(0.5 * (kl0 + kl1), 1e-12));
  REQUIRE_THROWS_AS(transitional_loss(s, t0, t1, 1.5, zeta),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(transitional_loss(s, t0, t1, -0.1, zeta),
                    std::invalid_argument);
}

TEST_CASE("alpha schedule endpoints and monotonicity") {
  REQUIRE(alpha_at(AlphaSchedule::Linear, 0.0) == 1.0);
  REQUIRE(alpha_at(AlphaSchedule::Linear, 1.0) == 0.0);
  double prev = 1.0;
  for (double p = 0.0; p <= 1.0; p += 0.05) {
    const double a = alpha_at(AlphaSchedule::Linear, p);
    REQUIRE(a <= prev);
    prev = a;
  }
}

TEST_CASE("stage loss gradients pass the finite-difference oracle") {
  RngStream rng(55);
  GradCheckResult result;
  for (int trial = 0; trial < 5; ++trial) {
    const Architecture arch{5, 8, 2, 4};
    MicroNet net = make_micronet(arch, rng);
    MicroNet t0 = make_micronet(arch, rng);
    MicroNet t1 = make_micronet(arch, rng);
    Matrix x(3, 5);
    for (double& v : x.a) v = rng.normal();
    const Matrix l0 = logits(t0, x);
    const Matrix l1 = logits(t1, x);
    const double zeta = 2.0;
    const double alpha = rng.uniform();

    ForwardTrace trace = forward(net, x);
    LossGrad lg = transitional_loss_grad(trace.logits, l0, l1, alpha, zeta);
    std::vector<double> analytic = backward(net, x, trace, lg.dlogits);
    auto loss = [&](const MicroNet& n) {
      return transitional_loss(logits(n, x), l0, l1, alpha, zeta);
    };
    accumulate_check(result, net, loss, analytic);

    // teacher-weighted variant too
    LossGrad lg2 = kl_loss_grad(trace.logits, l1, zeta, KlWeighting::Teacher);
    std::vector<double> analytic2 = backward(net, x, trace, lg2.dlogits);
    auto loss2 = [&](const MicroNet& n) {
      return kl_loss(logits(n, x), l1, zeta, KlWeighting::Teacher);
    };
    accumulate_check(result, net, loss2, analytic2);
  }
  INFO("max relative error " << result.max_rel_error);
  REQUIRE(result.max_rel_error < 1e-4);
}

TEST_CASE("student construction copies the teacher prefix verbatim") {
  const Architecture arch{16, 32, 4, 10};
  RngStream rng(3);
  const MicroNet teacher = make_micronet(arch, rng);

  SECTION("full copy at n = N_Blocks") {
    RngStream head_rng(4);
    const MicroNet student = build_student(teacher, 4, head_rng);
    REQUIRE(student.arch == arch);
    const std::size_t prefix = arch.block_offset(4);
    for (std::size_t i = 0; i < prefix; ++i)
      REQUIRE(student.theta[i] == teacher.theta[i]);
  }

  SECTION("single-block student has the right parameter count") {
    RngStream head_rng(4);
    const MicroNet student = build_student(teacher, 1, head_rng);
    Architecture expected = arch;
    expected.blocks = 1;
    REQUIRE(student.theta.size() == expected.param_count());
    const std::size_t prefix = expected.block_offset(1);
    for (std::size_t i = 0; i < prefix; ++i)
      REQUIRE(student.theta[i] == teacher.theta[i]);
  }

  SECTION("zero or oversized block counts are rejected") {
    RngStream head_rng(4);
    REQUIRE_THROWS_AS(build_student(teacher, 0, head_rng),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(build_student(teacher, 5, head_rng),
                      std::invalid_argument);
  }
}

namespace {

// Tiny setting shared by the training tests.
struct TrainFixture {
  TaskSpec spec;
  SyntheticTask task;
  TeacherPair teachers;

  explicit TrainFixture(std::uint64_t seed) : spec(make_spec()),
        task(make_synthetic_task(spec, seed)),
        teachers(make_teachers(task, seed)) {}

  static TaskSpec make_spec() {
    TaskSpec s;
    s.input_dim = 8;
    s.classes = 4;
    s.train_samples = 160;
    s.val_samples = 120;
    s.test_samples = 40;
    s.cluster_spread = 1.5;
    return s;
  }

  static TeacherPair make_teachers(const SyntheticTask& task,
                                   std::uint64_t seed) {
    const Architecture arch{8, 16, 3, 4};
    RngStream rng = RngStream::derive(seed, stream::kTeacher);
    MicroNet net = make_micronet(arch, rng);
    std::vector<std::size_t> order(task.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    MicroNet snapshot;
    for (int epoch = 0; epoch < 30; ++epoch) {
      rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += 32) {
        const std::size_t e = std::min(b + 32, order.size());
        Matrix x(e - b, 8);
        std::vector<int> y(e - b);
        for (std::size_t i = b; i < e; ++i) {
          y[i - b] = task.train.labels[order[i]];
          for (std::size_t d = 0; d < 8; ++d)
            x(i - b, d) = task.train.inputs(order[i], d);
        }
        ForwardTrace tr = forward(net, x);
        LossGrad lg = cross_entropy(tr.logits, y);
        sgd_step(net.theta, backward(net, x, tr, lg.dlogits), 0.05);
      }
      if (epoch == 2) snapshot = net;
    }
    return make_teacher_pair(std::move(snapshot), std::move(net), task.val);
  }
};

}  // namespace

TEST_CASE("three-stage training is deterministic and drives stage 3 down") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    TrainFixture fx(seed);
    DistillSchedule sched;
    sched.stage_epochs = {3, 3, 6};
    sched.learning_rate = 0.02;

    RngStream r1 = RngStream::derive(seed, stream::kStudent, 0, 2);
    MicroNet s1 = build_student(fx.teachers.final_model, 2, r1);
    const TrainResult a =
        train_three_stage(s1, fx.teachers, fx.task.train, sched, r1);

    RngStream r2 = RngStream::derive(seed, stream::kStudent, 0, 2);
    MicroNet s2 = build_student(fx.teachers.final_model, 2, r2);
    const TrainResult b =
        train_three_stage(s2, fx.teachers, fx.task.train, sched, r2);

    REQUIRE(a.net.theta == b.net.theta);  // same seed, same parameters

    double first_stage3 = -1.0, last_stage3 = -1.0;
    for (const EpochLoss& e : a.trace) {
      REQUIRE(std::isfinite(e.loss));
      if (e.stage == 3) {
        if (first_stage3 < 0.0) first_stage3 = e.loss;
        last_stage3 = e.loss;
      }
    }
    REQUIRE(first_stage3 >= 0.0);
    REQUIRE(last_stage3 < first_stage3);
  }
}

TEST_CASE("default-scenario students drive the stage-3 loss down, five seeds") {
  const ScenarioConfig cfg = default_scenario();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    const SyntheticTask task = make_synthetic_task(cfg.task, seed);
    const std::vector<LabeledSet> shards =
        make_shards(task.train, cfg.num_devices, seed);
    const TeacherTrainResult teacher = train_teacher(task, cfg, seed);
    RngStream rng = RngStream::derive(seed, stream::kStudent, 0, 2);
    MicroNet student = build_student(teacher.pair.final_model, 2, rng,
                                     cfg.distill.head_init_scale);
    const TrainResult trained = train_three_stage(
        std::move(student), teacher.pair, shards[0], cfg.distill, rng);
    double first_stage3 = -1.0, last_stage3 = -1.0;
    for (const EpochLoss& e : trained.trace) {
      REQUIRE(std::isfinite(e.loss));
      if (e.stage == 3) {
        if (first_stage3 < 0.0) first_stage3 = e.loss;
        last_stage3 = e.loss;
      }
    }
    REQUIRE(last_stage3 < first_stage3);
  }
}

TEST_CASE("a full copy of the teacher is a fixed point up to head noise") {
  TrainFixture fx(9);
  // student = exact teacher copy, head included, zeta = 1
  MicroNet student = fx.teachers.final_model;
  DistillSchedule sched;
  sched.temperature = 1.0;
  sched.stage_epochs = {3, 3, 6};

  // stage-3 loss of the untouched copy is exactly zero
  const Matrix own = logits(student, fx.task.train.inputs);
  REQUIRE(kl_loss(own, own, 1.0) == 0.0);

  RngStream rng = RngStream::derive(9, stream::kStudent, 0, 3);
  const TrainResult trained =
      train_three_stage(student, fx.teachers, fx.task.train, sched, rng);
  const double teacher_acc = fx.teachers.final_val_accuracy;
  const double student_acc = evaluate_accuracy(trained.net, fx.task.val);
  REQUIRE(std::fabs(student_acc - teacher_acc) <= 0.01 + 1e-12);
}

TEST_CASE("stage-2 alpha trace decays from 1 toward 0") {
  TrainFixture fx(10);
  DistillSchedule sched;
  sched.stage_epochs = {1, 5, 1};
  RngStream rng = RngStream::derive(10, stream::kStudent, 0, 1);
  MicroNet student = build_student(fx.teachers.final_model, 1, rng);
  const TrainResult trained =
      train_three_stage(student, fx.teachers, fx.task.train, sched, rng);
  std::vector<double> alphas;
  for (const EpochLoss& e : trained.trace)
    if (e.stage == 2) alphas.push_back(e.alpha);
  REQUIRE(alphas.size() == 5);
  REQUIRE(alphas.front() == 1.0);
  REQUIRE(alphas.back() == 0.0);
  for (std::size_t i = 1; i < alphas.size(); ++i)
    REQUIRE(alphas[i] <= alphas[i - 1]);
}

TEST_CASE("teacher pair rejects a snapshot that beats the final model") {
  TaskSpec spec;
  spec.classes = 4;
  spec.input_dim = 4;
  spec.cluster_spread = 1e-12;
  const SyntheticTask task = make_synthetic_task(spec, 8);

  const Architecture arch{4, 4, 0, 4};
  MicroNet strong;  // nearest-centre head: accuracy 1.0 on separable data
  strong.arch = arch;
  strong.theta.assign(arch.param_count(), 0.0);
  for (std::size_t c = 0; c < 4; ++c) {
    double norm2 = 0.0;
    for (std::size_t d = 0; d < 4; ++d) {
      strong.theta[c * 4 + d] = task.centers(c, d);
      norm2 += task.centers(c, d) * task.centers(c, d);
    }
    strong.theta[16 + c] = -0.5 * norm2;
  }
  MicroNet weak;  // constant predictor
  weak.arch = arch;
  weak.theta.assign(arch.param_count(), 0.0);

  REQUIRE_THROWS_AS(make_teacher_pair(strong, weak, task.val),
                    std::invalid_argument);
  const TeacherPair ok = make_teacher_pair(weak, strong, task.val);
  REQUIRE(ok.final_val_accuracy >= ok.init_val_accuracy);
}

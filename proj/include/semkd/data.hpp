#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semkd/matrix.hpp"
#include "semkd/rng.hpp"

namespace semkd {

enum class Split { Train, Val, Test };

struct LabeledSet {
  Matrix inputs;            // samples x input_dim
  std::vector<int> labels;  // class indices in [0, classes)
  Split tag = Split::Train;

  std::size_t size() const { return labels.size(); }
  bool operator==(const LabeledSet&) const = default;
};

// Gaussian-mixture classification task: one cluster centre per class, drawn
// once, shared by all splits. Stands in for an image dataset at desk scale.
// The default geometry leaves class overlap: a teacher trained on the full
// split clears the accuracy floor easily while a model fit to one device's
// shard alone cannot.
struct TaskSpec {
  std::size_t input_dim = 16;
  std::size_t classes = 10;
  std::size_t train_samples = 800;
  std::size_t val_samples = 500;
  std::size_t test_samples = 500;
  double center_scale = 8.0;    // std-dev of cluster centres around origin
  double cluster_spread = 4.5;  // per-dimension noise around the centre

  bool operator==(const TaskSpec&) const = default;
};

struct SyntheticTask {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
  Matrix centers;  // classes x input_dim
};

inline void validate_task_spec(const TaskSpec& spec) {
  if (spec.classes < 2)
    throw std::invalid_argument("task.classes must be >= 2");
  if (spec.input_dim < 2)
    throw std::invalid_argument("task.input_dim must be >= 2");
  if (spec.train_samples == 0 || spec.val_samples == 0 ||
      spec.test_samples == 0)
    throw std::invalid_argument("task sample counts must be >= 1");
  if (spec.center_scale <= 0.0)
    throw std::invalid_argument("task.center_scale must be > 0");
  if (spec.cluster_spread < 0.0)
    throw std::invalid_argument("task.cluster_spread must be >= 0");
}

namespace detail {

// Labels are assigned round-robin before shuffling, so the histogram is
// balanced within one sample for any requested size.
inline LabeledSet sample_split(const Matrix& centers, const TaskSpec& spec,
                               std::size_t n, Split tag, RngStream& rng) {
  LabeledSet set;
  set.tag = tag;
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    set.labels[i] = static_cast<int>(i % spec.classes);
  rng.shuffle(set.labels);
  set.inputs = Matrix(n, spec.input_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double* c = centers.row(static_cast<std::size_t>(set.labels[i]));
    double* x = set.inputs.row(i);
    for (std::size_t d = 0; d < spec.input_dim; ++d)
      x[d] = c[d] + spec.cluster_spread * rng.normal();
  }
  return set;
}

}  // namespace detail

inline SyntheticTask make_synthetic_task(const TaskSpec& spec,
                                         std::uint64_t seed) {
  validate_task_spec(spec);
  RngStream rng = RngStream::derive(seed, stream::kData);
  SyntheticTask task;
  task.centers = Matrix(spec.classes, spec.input_dim);
  for (double& v : task.centers.a) v = spec.center_scale * rng.normal();
  task.train =
      detail::sample_split(task.centers, spec, spec.train_samples, Split::Train, rng);
  task.val =
      detail::sample_split(task.centers, spec, spec.val_samples, Split::Val, rng);
  task.test =
      detail::sample_split(task.centers, spec, spec.test_samples, Split::Test, rng);
  return task;
}

// Disjoint per-device shards of a split: a seeded uniform permutation dealt
// into num_shards groups. Sizes differ by at most one sample.
inline std::vector<LabeledSet> make_shards(const LabeledSet& set,
                                           std::size_t num_shards,
                                           std::uint64_t seed) {
  if (num_shards == 0) throw std::invalid_argument("num_shards must be >= 1");
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream rng = RngStream::derive(seed, stream::kShards);
  rng.shuffle(order);

  std::vector<LabeledSet> shards(num_shards);
  const std::size_t base = set.size() / num_shards;
  const std::size_t extra = set.size() % num_shards;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < num_shards; ++s) {
    const std::size_t n = base + (s < extra ? 1 : 0);
    LabeledSet& shard = shards[s];
    shard.tag = set.tag;
    shard.inputs = Matrix(n, set.inputs.cols);
    shard.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i, ++pos) {
      const std::size_t src = order[pos];
      shard.labels[i] = set.labels[src];
      for (std::size_t d = 0; d < set.inputs.cols; ++d)
        shard.inputs(i, d) = set.inputs(src, d);
    }
  }
  return shards;
}

}  // namespace semkd

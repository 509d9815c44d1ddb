#include "gatepro/task.hpp"

#include <algorithm>
#include <utility>

namespace gatepro {

SyntheticTask::SyntheticTask(const SyntheticTaskSpec& spec) : spec_(spec) {
  if (spec_.n_clusters < 2 || spec_.dim < 1 || spec_.n_classes < 1) {
    throw ContractViolation("SyntheticTask: dimensions out of range");
  }
  if (spec_.cluster_spread < 0.0) {
    throw ContractViolation("SyntheticTask: negative cluster_spread");
  }

  Rng rng(spec_.seed);
  centers_ = Mat(spec_.n_clusters, spec_.dim);
  for (double& x : centers_.data()) x = rng.next_gaussian();

  // Balanced class assignment: shuffle the clusters, then deal classes
  // round-robin so every class covers the same number of clusters (up to
  // remainder) and chance-level accuracy is 1/n_classes.
  std::vector<int> order(spec_.n_clusters);
  for (int i = 0; i < spec_.n_clusters; ++i) order[i] = i;
  for (int i = spec_.n_clusters - 1; i > 0; --i) {
    const int j = std::min(
        i, static_cast<int>(rng.next_uniform() * static_cast<double>(i + 1)));
    std::swap(order[i], order[j]);
  }
  cluster_class_.assign(spec_.n_clusters, 0);
  for (int i = 0; i < spec_.n_clusters; ++i) {
    cluster_class_[order[i]] = i % spec_.n_classes;
  }
}

Batch SyntheticTask::gen_batch(Rng& rng, int batch_size) const {
  if (batch_size < 1) {
    throw ContractViolation("gen_batch: batch_size must be positive");
  }
  Batch batch;
  batch.inputs.reserve(batch_size);
  batch.labels.reserve(batch_size);
  for (int t = 0; t < batch_size; ++t) {
    const int cluster = std::min(
        spec_.n_clusters - 1,
        static_cast<int>(rng.next_uniform() *
                         static_cast<double>(spec_.n_clusters)));
    Vec x(spec_.dim);
    const double* center = centers_.row(cluster);
    for (int j = 0; j < spec_.dim; ++j) {
      x[j] = center[j] + spec_.cluster_spread * rng.next_gaussian();
    }
    batch.inputs.push_back(std::move(x));
    batch.labels.push_back(cluster_class_[cluster]);
  }
  return batch;
}

}  // namespace gatepro

#pragma once

#include <cstdint>
#include <vector>

#include "gatepro/moe.hpp"
#include "gatepro/numerics.hpp"
#include "gatepro/rng.hpp"

namespace gatepro {

/// Cluster-conditional classification: tokens are noisy copies of fixed
/// cluster centers and the label is the cluster's class.
struct SyntheticTaskSpec {
  int n_clusters = 16;
  int dim = 32;
  int n_classes = 8;
  double cluster_spread = 0.25;
  std::uint64_t seed = 1;
};

/// Materialized task: centers and the cluster->class map are drawn once
/// from the spec seed and then fixed.
class SyntheticTask {
 public:
  explicit SyntheticTask(const SyntheticTaskSpec& spec);

  const SyntheticTaskSpec& spec() const { return spec_; }
  const Mat& centers() const { return centers_; }
  const std::vector<int>& cluster_class() const { return cluster_class_; }

  /// One batch: per token, a uniform cluster pick plus spread-scaled
  /// gaussian noise. Deterministic given the rng state.
  Batch gen_batch(Rng& rng, int batch_size) const;

 private:
  SyntheticTaskSpec spec_;
  Mat centers_;                    // n_clusters x dim
  std::vector<int> cluster_class_; // balanced assignment, shuffled by seed
};

}  // namespace gatepro

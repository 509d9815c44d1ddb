#pragma once

#include <vector>

#include "gatepro/moe.hpp"
#include "gatepro/router.hpp"

namespace gatepro {

/// Per-step, per-layer snapshot of expert utilization and gate diversity.
struct MetricsRecord {
  long step = 0;
  int layer = 0;
  int zero_token_count = 0;
  double avg_cosine_similarity = 0.0;
  double avg_angle_radians = 0.0;
  double spectral_entropy = 0.0;
  GateMode mode = GateMode::baseline;
  bool balance_loss_on = false;
};

/// Number of experts selected by no token in the batch.
int zero_token_count(const std::vector<RoutingDecision>& decisions,
                     int n_experts);

/// Mean absolute off-diagonal cosine similarity: (2/(N(N-1))) sum_{i<j} |S_ij|.
double avg_cosine_similarity(const SimilarityMatrix& s);

/// Mean pairwise angle in radians: (2/(N(N-1))) sum_{i<j} arccos(S_ij),
/// with entries clamped to [-1, 1] before arccos.
double avg_angle(const SimilarityMatrix& s);

/// Entropy of the regularized singular-value spectrum of S:
/// sigma_i = |eigenvalue_i|, p_i = (sigma_i + eps) / (sum sigma + N*eps),
/// H = -sum p_i ln p_i, with eps = 1e-8. Bounded by ln N.
double spectral_entropy(const SimilarityMatrix& s);

/// Assembles the per-layer record for one logging step.
MetricsRecord make_metrics_record(long step, int layer,
                                  const std::vector<RoutingDecision>& decisions,
                                  const SimilarityMatrix& s, GateMode mode,
                                  bool balance_loss_on);

}  // namespace gatepro

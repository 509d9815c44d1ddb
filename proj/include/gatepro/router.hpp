#pragma once

#include <vector>

#include "gatepro/numerics.hpp"

namespace gatepro {

/// Router matrix W_g (N x d). The bias is identically zero and not stored.
class GatingWeights {
 public:
  explicit GatingWeights(Mat w);

  const Mat& w() const { return w_; }
  Mat& w() { return w_; }
  std::size_t n_experts() const { return w_.rows(); }
  std::size_t dim() const { return w_.cols(); }

 private:
  Mat w_;
};

/// Symmetric N x N matrix of gate-row cosine similarities with unit diagonal.
class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(Mat s);

  const Mat& s() const { return s_; }
  std::size_t n_experts() const { return s_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return s_(i, j); }

 private:
  Mat s_;
};

/// For each expert, the index of its most similar counterpart (never itself).
struct CounterpartMap {
  std::vector<int> j_star;
};

enum class SimilarityRefresh { per_step, per_forward };

struct GateProConfig {
  double lambda = 1e-4;
  int k = 6;
  SimilarityRefresh similarity_refresh = SimilarityRefresh::per_step;
};

/// Outcome of routing one token: the selected expert set, mixture weights
/// over it, and the logits before and after competitive suppression.
struct RoutingDecision {
  std::vector<int> selected;   // size k, ascending
  Vec weights;                 // length N, nonzero exactly on `selected`
  Vec suppressed_logits;       // length N
  Vec raw_logits;              // length N
  std::vector<bool> penalty_mask;  // true where the -lambda penalty applied
};

/// Expert logits W_g * x for one token.
Vec compute_logits(const Vec& x, const GatingWeights& g);

/// Cosine similarity matrix of the gating rows.
SimilarityMatrix gate_similarity(const GatingWeights& g);

/// Most similar counterpart per expert, lowest index on ties.
CounterpartMap most_similar(const SimilarityMatrix& s);

struct CompeteResult {
  Vec suppressed;
  std::vector<bool> mask;
};

/// Localized competition: expert i is penalized by lambda when its logit is
/// strictly below its counterpart's. Ties leave expert i unpenalized.
CompeteResult compete(const Vec& logits, const CounterpartMap& cmap,
                      double lambda);

/// Plain top-k gating with selected-set softmax normalization.
RoutingDecision route_baseline(const Vec& x, const GatingWeights& g, int k);

/// Competitive gating: penalties are applied to the logits before top-k
/// selection, and mixture weights come from the suppressed logits.
RoutingDecision route_gatepro(const Vec& x, const GatingWeights& g,
                              const SimilarityMatrix& s,
                              const GateProConfig& cfg);

}  // namespace gatepro

#include "gatepro/router.hpp"

#include <cmath>

namespace gatepro {

GatingWeights::GatingWeights(Mat w) : w_(std::move(w)) {
  if (w_.rows() < 2 || w_.cols() < 1) {
    throw ContractViolation("GatingWeights: need N >= 2 and d >= 1");
  }
  for (std::size_t i = 0; i < w_.rows(); ++i) {
    bool zero = true;
    for (std::size_t j = 0; j < w_.cols(); ++j) {
      if (w_(i, j) != 0.0) {
        zero = false;
        break;
      }
    }
    if (zero) {
      throw ContractViolation("GatingWeights: zero gate row");
    }
  }
}

SimilarityMatrix::SimilarityMatrix(Mat s) : s_(std::move(s)) {
  if (s_.rows() != s_.cols()) {
    throw ContractViolation("SimilarityMatrix: not square");
  }
  const std::size_t n = s_.rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(s_(i, i) - 1.0) > 1e-12) {
      throw ContractViolation("SimilarityMatrix: diagonal entry not 1");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(s_(i, j)) > 1.0 + 1e-12) {
        throw ContractViolation("SimilarityMatrix: entry outside [-1,1]");
      }
      if (std::abs(s_(i, j) - s_(j, i)) > 1e-12) {
        throw ContractViolation("SimilarityMatrix: not symmetric");
      }
    }
  }
}

Vec compute_logits(const Vec& x, const GatingWeights& g) {
  return matvec(g.w(), x);
}

SimilarityMatrix gate_similarity(const GatingWeights& g) {
  const std::size_t n = g.n_experts();
  const std::size_t d = g.dim();
  const Mat& w = g.w();

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += row[j] * row[j];
    if (acc == 0.0) {
      throw ContractViolation("gate_similarity: zero gate row");
    }
    norms[i] = std::sqrt(acc);
  }

  Mat s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    const double* wi = w.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* wj = w.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += wi[c] * wj[c];
      const double sim = acc / (norms[i] * norms[j]);
      s(i, j) = sim;
      s(j, i) = sim;
    }
  }
  return SimilarityMatrix(std::move(s));
}

CounterpartMap most_similar(const SimilarityMatrix& s) {
  const std::size_t n = s.n_experts();
  if (n < 2) {
    throw ContractViolation("most_similar: need at least two experts");
  }
  CounterpartMap cmap;
  cmap.j_star.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = (i == 0) ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (s(i, j) > s(i, best)) best = static_cast<int>(j);
    }
    cmap.j_star[i] = best;
  }
  return cmap;
}

CompeteResult compete(const Vec& logits, const CounterpartMap& cmap,
                      double lambda) {
  const std::size_t n = logits.size();
  if (cmap.j_star.size() != n) {
    throw ContractViolation("compete: counterpart map size mismatch");
  }
  CompeteResult result;
  result.suppressed = logits;
  result.mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (logits[i] < logits[cmap.j_star[i]]) {
      result.suppressed[i] = logits[i] - lambda;
      result.mask[i] = true;
    }
  }
  return result;
}

RoutingDecision route_baseline(const Vec& x, const GatingWeights& g, int k) {
  RoutingDecision d;
  d.raw_logits = compute_logits(x, g);
  d.suppressed_logits = d.raw_logits;
  d.penalty_mask.assign(d.raw_logits.size(), false);
  d.selected = top_k_indices(d.raw_logits, k);
  d.weights = softmax_over(d.raw_logits, d.selected);
  return d;
}

RoutingDecision route_gatepro(const Vec& x, const GatingWeights& g,
                              const SimilarityMatrix& s,
                              const GateProConfig& cfg) {
  if (s.n_experts() != g.n_experts()) {
    throw ContractViolation("route_gatepro: similarity cache size mismatch");
  }
  RoutingDecision d;
  d.raw_logits = compute_logits(x, g);
  const CounterpartMap cmap = most_similar(s);
  CompeteResult competed = compete(d.raw_logits, cmap, cfg.lambda);
  d.suppressed_logits = std::move(competed.suppressed);
  d.penalty_mask = std::move(competed.mask);
  d.selected = top_k_indices(d.suppressed_logits, cfg.k);
  d.weights = softmax_over(d.suppressed_logits, d.selected);
  return d;
}

}  // namespace gatepro

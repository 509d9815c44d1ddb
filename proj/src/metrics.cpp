#include "gatepro/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace gatepro {

namespace {

constexpr double kSpectrumEps = 1e-8;

}  // namespace

int zero_token_count(const std::vector<RoutingDecision>& decisions,
                     int n_experts) {
  if (n_experts < 1) {
    throw ContractViolation("zero_token_count: need at least one expert");
  }
  std::vector<char> hit(n_experts, 0);
  for (const RoutingDecision& d : decisions) {
    for (int m : d.selected) {
      if (m < 0 || m >= n_experts) {
        throw ContractViolation("zero_token_count: expert index out of range");
      }
      hit[m] = 1;
    }
  }
  int count = 0;
  for (char h : hit) {
    if (!h) ++count;
  }
  return count;
}

double avg_cosine_similarity(const SimilarityMatrix& s) {
  const std::size_t n = s.n_experts();
  if (n < 2) {
    throw ContractViolation("avg_cosine_similarity: need at least two experts");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      acc += std::abs(s(i, j));
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return acc / pairs;
}

double avg_angle(const SimilarityMatrix& s) {
  const std::size_t n = s.n_experts();
  if (n < 2) {
    throw ContractViolation("avg_angle: need at least two experts");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::clamp(s(i, j), -1.0, 1.0);
      acc += std::acos(v);
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return acc / pairs;
}

double spectral_entropy(const SimilarityMatrix& s) {
  const std::size_t n = s.n_experts();
  if (n < 2) {
    throw ContractViolation("spectral_entropy: need at least two experts");
  }
  const Vec eig = sym_eigenvalues(s.s());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(eig[i]);
  const double denom = total + static_cast<double>(n) * kSpectrumEps;
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (std::abs(eig[i]) + kSpectrumEps) / denom;
    h -= p * std::log(p);
  }
  return h;
}

MetricsRecord make_metrics_record(long step, int layer,
                                  const std::vector<RoutingDecision>& decisions,
                                  const SimilarityMatrix& s, GateMode mode,
                                  bool balance_loss_on) {
  MetricsRecord r;
  r.step = step;
  r.layer = layer;
  r.zero_token_count =
      zero_token_count(decisions, static_cast<int>(s.n_experts()));
  r.avg_cosine_similarity = avg_cosine_similarity(s);
  r.avg_angle_radians = avg_angle(s);
  r.spectral_entropy = spectral_entropy(s);
  r.mode = mode;
  r.balance_loss_on = balance_loss_on;
  return r;
}

}  // namespace gatepro

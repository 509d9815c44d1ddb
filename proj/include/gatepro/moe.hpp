#pragma once

#include <vector>

#include "gatepro/numerics.hpp"
#include "gatepro/rng.hpp"
#include "gatepro/router.hpp"

namespace gatepro {

enum class GateMode { baseline, gatepro };

/// Two-layer feed-forward expert: w2 * gelu(w1 * x + b1) + b2.
struct ExpertParams {
  Mat w1;  // h x d
  Vec b1;  // h
  Mat w2;  // d x h
  Vec b2;  // d
};

/// One MoE layer: the router matrix plus its N experts.
struct MoELayerParams {
  GatingWeights gating;  // N x d
  std::vector<ExpertParams> experts;
};

/// L stacked MoE layers (residual between layers) and a linear readout
/// mapping the final representation to task logits.
struct MoEStackParams {
  std::vector<MoELayerParams> layers;
  Mat readout;  // c x d

  std::size_t n_layers() const { return layers.size(); }
  std::size_t dim() const { return readout.cols(); }
  std::size_t n_classes() const { return readout.rows(); }
};

/// Routing statistics over one batch at one layer; f_i and P_i of the
/// auxiliary balance loss.
struct BatchRoutingStats {
  std::vector<long> tokens_per_expert;  // top-k assignment counts
  Vec mean_router_prob;                 // mean full-softmax probability
  long batch_tokens = 0;
};

struct ExpertGrads {
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
};

struct LayerGrads {
  Mat gating;
  std::vector<ExpertGrads> experts;
};

/// Mirror of MoEStackParams holding d(loss)/d(parameter).
struct Gradients {
  std::vector<LayerGrads> layers;
  Mat readout;
};

/// Tanh-approximation GELU and its derivative.
double gelu(double x);
double gelu_derivative(double x);

/// w2 * gelu(w1 * x + b1) + b2.
Vec expert_forward(const ExpertParams& e, const Vec& x);

struct LayerForwardResult {
  Vec y;  // sparse mixture of the selected experts' outputs
  RoutingDecision decision;
};

/// Routes one token and combines only the selected experts' outputs.
/// `s_cache` is required in gatepro mode and ignored otherwise.
LayerForwardResult moe_layer_forward(const MoELayerParams& p, const Vec& x,
                                     GateMode mode, const GateProConfig& cfg,
                                     const SimilarityMatrix* s_cache);

/// Switch-style auxiliary loss: coeff * N * sum_i f_i * P_i.
double balance_loss(const BatchRoutingStats& stats, double coeff);

struct StackForwardResult {
  Vec logits_out;                          // task logits, length c
  std::vector<RoutingDecision> decisions;  // one per layer
};

/// Full stack: x <- x + layer(x) per layer, then readout. `caches` must
/// hold one fresh SimilarityMatrix per layer in gatepro mode.
StackForwardResult stack_forward(const MoEStackParams& p, const Vec& x,
                                 GateMode mode, const GateProConfig& cfg,
                                 const std::vector<SimilarityMatrix>& caches);

struct Batch {
  std::vector<Vec> inputs;
  std::vector<int> labels;
};

struct BackwardResult {
  double loss = 0.0;       // task_loss + sum of per-layer balance losses
  double task_loss = 0.0;  // mean softmax cross-entropy
  std::vector<double> balance_losses;            // per layer
  std::vector<BatchRoutingStats> stats;          // per layer
  std::vector<std::vector<RoutingDecision>> decisions;  // [layer][token]
  long correct = 0;  // argmax(readout logits) == label
  Gradients grads;   // mean-reduced over the batch
};

/// Forward + exact reverse-mode backward over one batch. The task loss is
/// softmax cross-entropy, mean-reduced; selection sets, penalty masks and
/// counterpart choices are constants of the forward pass, and the per-layer
/// balance loss is differentiated through the full softmax.
BackwardResult stack_backward(const MoEStackParams& p, const Batch& batch,
                              GateMode mode, const GateProConfig& cfg,
                              const std::vector<SimilarityMatrix>& caches,
                              double balance_coeff);

Gradients make_zero_gradients(const MoEStackParams& p);

/// Adam first/second moments, same shapes as the parameters.
struct AdamState {
  Gradients m;
  Gradients v;
  long t = 0;
};

AdamState make_adam_state(const MoEStackParams& p);

/// Standard Adam update (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected).
void adam_step(MoEStackParams& p, const Gradients& g, AdamState& state,
               double lr);

/// Fresh stack: gaussian init scaled by fan-in for experts and readout,
/// small gaussian gate rows, zero biases. Draw order is fixed so that a
/// seed pins every parameter.
MoEStackParams init_stack(int layers, int n_experts, int dim, int hidden,
                          int n_classes, Rng& rng);

bool params_finite(const MoEStackParams& p);

}  // namespace gatepro

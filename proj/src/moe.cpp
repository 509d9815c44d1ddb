#include "gatepro/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace gatepro {

namespace {

const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);
constexpr double kGeluCubic = 0.044715;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Gate rows start small so the competitive penalty (lambda ~ 1e-4) is on the
// same scale as early logit gaps; expert and readout weights use 1/sqrt(fan_in).
constexpr double kGateInitStd = 1e-3;

// Tokens per leaf of the batch reduction tree. Sums are combined by
// recursive halving, so concatenating two copies of a batch splits exactly
// at the copy boundary and the duplicated sum is fl(S + S) = 2S — this is
// what keeps sum-reduction linearity exact in floating point.
constexpr std::size_t kReduceLeafTokens = 128;

template <typename Acc, typename Leaf, typename Merge>
Acc reduce_tokens(std::size_t begin, std::size_t end, const Leaf& leaf,
                  const Merge& merge) {
  if (end - begin <= kReduceLeafTokens) {
    return leaf(begin, end);
  }
  const std::size_t mid = begin + (end - begin) / 2;
  Acc left = reduce_tokens<Acc>(begin, mid, leaf, merge);
  Acc right = reduce_tokens<Acc>(mid, end, leaf, merge);
  merge(left, right);
  return left;
}

void add_into(Vec& a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void add_into(Mat& a, const Mat& b) {
  std::vector<double>& ad = a.data();
  const std::vector<double>& bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

void add_grads(Gradients& a, const Gradients& b) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    add_into(a.layers[l].gating, b.layers[l].gating);
    for (std::size_t e = 0; e < a.layers[l].experts.size(); ++e) {
      ExpertGrads& ae = a.layers[l].experts[e];
      const ExpertGrads& be = b.layers[l].experts[e];
      add_into(ae.w1, be.w1);
      add_into(ae.b1, be.b1);
      add_into(ae.w2, be.w2);
      add_into(ae.b2, be.b2);
    }
  }
  add_into(a.readout, b.readout);
}

void scale_grads(Gradients& g, double batch_tokens) {
  for (LayerGrads& lg : g.layers) {
    for (double& x : lg.gating.data()) x /= batch_tokens;
    for (ExpertGrads& eg : lg.experts) {
      for (double& x : eg.w1.data()) x /= batch_tokens;
      for (double& x : eg.b1.data()) x /= batch_tokens;
      for (double& x : eg.w2.data()) x /= batch_tokens;
      for (double& x : eg.b2.data()) x /= batch_tokens;
    }
  }
  for (double& x : g.readout.data()) x /= batch_tokens;
}

RoutingDecision route_token(const MoELayerParams& p, const Vec& x,
                            GateMode mode, const GateProConfig& cfg,
                            const SimilarityMatrix* s_cache) {
  if (mode == GateMode::gatepro) {
    if (cfg.similarity_refresh == SimilarityRefresh::per_forward) {
      return route_gatepro(x, p.gating, gate_similarity(p.gating), cfg);
    }
    if (s_cache == nullptr) {
      throw ContractViolation("moe_layer_forward: gatepro mode needs a similarity cache");
    }
    return route_gatepro(x, p.gating, *s_cache, cfg);
  }
  return route_baseline(x, p.gating, cfg.k);
}

bool needs_caches(GateMode mode, const GateProConfig& cfg) {
  return mode == GateMode::gatepro &&
         cfg.similarity_refresh == SimilarityRefresh::per_step;
}

// Per-token forward state retained for the backward pass.
struct ExpertTrace {
  Vec pre;   // w1 * x + b1
  Vec act;   // gelu(pre)
  Vec dact;  // gelu'(pre)
  Vec out;   // w2 * act + b2
};

struct LayerTrace {
  Vec x;  // layer input
  RoutingDecision decision;
  Vec probs;  // full softmax over the suppressed logits
  std::vector<ExpertTrace> experts;  // parallel to decision.selected
};

struct TokenTrace {
  std::vector<LayerTrace> layers;
  Vec x_final;
  Vec out_probs;  // softmax of the readout logits
  double ce = 0.0;
  bool correct = false;
};

LayerTrace layer_forward_traced(const MoELayerParams& p, Vec x, GateMode mode,
                                const GateProConfig& cfg,
                                const SimilarityMatrix* s_cache, Vec& x_next) {
  LayerTrace tr;
  tr.decision = route_token(p, x, mode, cfg, s_cache);
  tr.probs = softmax_full(tr.decision.suppressed_logits);

  const std::size_t d = x.size();
  Vec y(d);
  tr.experts.reserve(tr.decision.selected.size());
  for (int m : tr.decision.selected) {
    const ExpertParams& e = p.experts[m];
    ExpertTrace et;
    et.pre = matvec(e.w1, x);
    const std::size_t h = et.pre.size();
    for (std::size_t i = 0; i < h; ++i) et.pre[i] += e.b1[i];
    et.act = Vec(h);
    et.dact = Vec(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double z = et.pre[i];
      const double inner = kGeluScale * (z + kGeluCubic * z * z * z);
      const double t = std::tanh(inner);
      const double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * z * z);
      et.act[i] = 0.5 * z * (1.0 + t);
      et.dact[i] = 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * dinner;
    }
    et.out = matvec(e.w2, et.act);
    for (std::size_t j = 0; j < d; ++j) et.out[j] += e.b2[j];
    const double wm = tr.decision.weights[m];
    for (std::size_t j = 0; j < d; ++j) y[j] += wm * et.out[j];
    tr.experts.push_back(std::move(et));
  }

  x_next = Vec(d);
  for (std::size_t j = 0; j < d; ++j) x_next[j] = x[j] + y[j];
  tr.x = std::move(x);
  return tr;
}

TokenTrace forward_token(const MoEStackParams& p, const Vec& x0, int label,
                         GateMode mode, const GateProConfig& cfg,
                         const std::vector<SimilarityMatrix>& caches) {
  TokenTrace tt;
  tt.layers.reserve(p.n_layers());
  Vec x = x0;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    const SimilarityMatrix* sc = caches.empty() ? nullptr : &caches[l];
    Vec x_next;
    tt.layers.push_back(
        layer_forward_traced(p.layers[l], std::move(x), mode, cfg, sc, x_next));
    x = std::move(x_next);
  }

  Vec out = matvec(p.readout, x);
  tt.x_final = std::move(x);

  const std::size_t c = out.size();
  double mx = out[0];
  std::size_t arg = 0;
  for (std::size_t i = 1; i < c; ++i) {
    if (out[i] > mx) {
      mx = out[i];
      arg = i;
    }
  }
  double sum = 0.0;
  tt.out_probs = Vec(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double e = std::exp(out[i] - mx);
    tt.out_probs[i] = e;
    sum += e;
  }
  for (std::size_t i = 0; i < c; ++i) tt.out_probs[i] /= sum;
  tt.ce = std::log(sum) - (out[label] - mx);
  tt.correct = (arg == static_cast<std::size_t>(label));
  return tt;
}

// Accumulates this token's gradient of [CE + batch_tokens * balance share]
// into `acc`; the caller divides the reduced sum by batch_tokens once.
void backward_token(const MoEStackParams& p, const TokenTrace& tt, int label,
                    const std::vector<std::vector<double>>& f,
                    double balance_coeff, Gradients& acc) {
  const std::size_t c = p.n_classes();
  Vec dout(c);
  for (std::size_t i = 0; i < c; ++i) dout[i] = tt.out_probs[i];
  dout[label] -= 1.0;
  add_outer(acc.readout, dout, tt.x_final);
  Vec dx = matvec_transposed(p.readout, dout);

  for (std::size_t li = p.n_layers(); li-- > 0;) {
    const LayerTrace& tr = tt.layers[li];
    const MoELayerParams& lp = p.layers[li];
    const std::size_t n = lp.gating.n_experts();
    const std::size_t d = tr.x.size();
    const Vec dy = std::move(dx);

    // Selected-set softmax jacobian; the penalty offset is constant, so
    // d(suppressed)/d(logits) is the identity.
    Vec dlogits(n);
    const std::vector<int>& sel = tr.decision.selected;
    std::vector<double> dalpha(sel.size());
    double weighted = 0.0;
    for (std::size_t si = 0; si < sel.size(); ++si) {
      dalpha[si] = dot(dy, tr.experts[si].out);
      weighted += tr.decision.weights[sel[si]] * dalpha[si];
    }
    for (std::size_t si = 0; si < sel.size(); ++si) {
      dlogits[sel[si]] =
          tr.decision.weights[sel[si]] * (dalpha[si] - weighted);
    }

    // Balance path through the full softmax; token counts are constants.
    if (balance_coeff > 0.0) {
      const std::vector<double>& fl = f[li];
      double fp = 0.0;
      for (std::size_t j = 0; j < n; ++j) fp += fl[j] * tr.probs[j];
      const double scale = balance_coeff * static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        dlogits[j] += scale * tr.probs[j] * (fl[j] - fp);
      }
    }

    add_outer(acc.layers[li].gating, dlogits, tr.x);
    Vec dx_new = matvec_transposed(lp.gating.w(), dlogits);
    for (std::size_t j = 0; j < d; ++j) dx_new[j] += dy[j];

    for (std::size_t si = 0; si < sel.size(); ++si) {
      const int m = sel[si];
      const ExpertTrace& et = tr.experts[si];
      const ExpertParams& e = lp.experts[m];
      ExpertGrads& eg = acc.layers[li].experts[m];
      const double wm = tr.decision.weights[m];
      const std::size_t h = et.pre.size();

      Vec dexp(d);
      for (std::size_t j = 0; j < d; ++j) dexp[j] = wm * dy[j];
      add_outer(eg.w2, dexp, et.act);
      for (std::size_t j = 0; j < d; ++j) eg.b2[j] += dexp[j];

      Vec dact = matvec_transposed(e.w2, dexp);
      Vec dpre(h);
      for (std::size_t i = 0; i < h; ++i) dpre[i] = dact[i] * et.dact[i];
      add_outer(eg.w1, dpre, tr.x);
      for (std::size_t i = 0; i < h; ++i) eg.b1[i] += dpre[i];

      Vec dxe = matvec_transposed(e.w1, dpre);
      for (std::size_t j = 0; j < d; ++j) dx_new[j] += dxe[j];
    }

    dx = std::move(dx_new);
  }
}

}  // namespace

double gelu(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  return 0.5 * x * (1.0 + t);
}

double gelu_derivative(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

Vec expert_forward(const ExpertParams& e, const Vec& x) {
  if (e.b1.size() != e.w1.rows() || e.b2.size() != e.w2.rows()) {
    throw ContractViolation("expert_forward: bias shape mismatch");
  }
  Vec pre = matvec(e.w1, x);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += e.b1[i];
  Vec act(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) act[i] = gelu(pre[i]);
  Vec out = matvec(e.w2, act);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += e.b2[j];
  return out;
}

LayerForwardResult moe_layer_forward(const MoELayerParams& p, const Vec& x,
                                     GateMode mode, const GateProConfig& cfg,
                                     const SimilarityMatrix* s_cache) {
  LayerForwardResult r;
  r.decision = route_token(p, x, mode, cfg, s_cache);
  r.y = Vec(x.size());
  for (int m : r.decision.selected) {
    const Vec out = expert_forward(p.experts[m], x);
    const double wm = r.decision.weights[m];
    for (std::size_t j = 0; j < out.size(); ++j) r.y[j] += wm * out[j];
  }
  return r;
}

double balance_loss(const BatchRoutingStats& stats, double coeff) {
  const std::size_t n = stats.tokens_per_expert.size();
  if (stats.mean_router_prob.size() != n) {
    throw ContractViolation("balance_loss: stats size mismatch");
  }
  long total = 0;
  for (long c : stats.tokens_per_expert) total += c;
  if (total <= 0) {
    throw ContractViolation("balance_loss: no routed tokens");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f =
        static_cast<double>(stats.tokens_per_expert[i]) / static_cast<double>(total);
    acc += f * stats.mean_router_prob[i];
  }
  return coeff * static_cast<double>(n) * acc;
}

StackForwardResult stack_forward(const MoEStackParams& p, const Vec& x,
                                 GateMode mode, const GateProConfig& cfg,
                                 const std::vector<SimilarityMatrix>& caches) {
  if (p.n_layers() < 1) {
    throw ContractViolation("stack_forward: empty stack");
  }
  if (needs_caches(mode, cfg) && caches.size() != p.n_layers()) {
    throw ContractViolation("stack_forward: need one similarity cache per layer");
  }
  StackForwardResult r;
  r.decisions.reserve(p.n_layers());
  Vec cur = x;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    const SimilarityMatrix* sc = caches.empty() ? nullptr : &caches[l];
    LayerForwardResult lr = moe_layer_forward(p.layers[l], cur, mode, cfg, sc);
    for (std::size_t j = 0; j < cur.size(); ++j) cur[j] += lr.y[j];
    r.decisions.push_back(std::move(lr.decision));
  }
  r.logits_out = matvec(p.readout, cur);
  return r;
}

BackwardResult stack_backward(const MoEStackParams& p, const Batch& batch,
                              GateMode mode, const GateProConfig& cfg,
                              const std::vector<SimilarityMatrix>& caches,
                              double balance_coeff) {
  const std::size_t b = batch.inputs.size();
  if (b == 0) {
    throw ContractViolation("stack_backward: empty batch");
  }
  if (batch.labels.size() != b) {
    throw ContractViolation("stack_backward: inputs/labels length mismatch");
  }
  if (needs_caches(mode, cfg) && caches.size() != p.n_layers()) {
    throw ContractViolation("stack_backward: need one similarity cache per layer");
  }
  const std::size_t num_layers = p.n_layers();
  const int c = static_cast<int>(p.n_classes());
  for (int label : batch.labels) {
    if (label < 0 || label >= c) {
      throw ContractViolation("stack_backward: label out of range");
    }
  }

  std::vector<TokenTrace> traces;
  traces.reserve(b);
  for (std::size_t t = 0; t < b; ++t) {
    traces.push_back(
        forward_token(p, batch.inputs[t], batch.labels[t], mode, cfg, caches));
  }

  BackwardResult result;
  result.stats.resize(num_layers);
  result.balance_losses.resize(num_layers);

  std::vector<std::vector<double>> f(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t n = p.layers[l].gating.n_experts();
    std::vector<long> counts(n, 0);
    for (const TokenTrace& tt : traces) {
      for (int m : tt.layers[l].decision.selected) counts[m] += 1;
    }
    long total = 0;
    for (long cnt : counts) total += cnt;

    std::vector<double> prob_sum = reduce_tokens<std::vector<double>>(
        0, b,
        [&](std::size_t lo, std::size_t hi) {
          std::vector<double> s(n, 0.0);
          for (std::size_t t = lo; t < hi; ++t) {
            const Vec& pr = traces[t].layers[l].probs;
            for (std::size_t j = 0; j < n; ++j) s[j] += pr[j];
          }
          return s;
        },
        [](std::vector<double>& lhs, const std::vector<double>& rhs) {
          for (std::size_t j = 0; j < lhs.size(); ++j) lhs[j] += rhs[j];
        });
    for (double& x : prob_sum) x /= static_cast<double>(b);

    f[l].resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      f[l][j] = static_cast<double>(counts[j]) / static_cast<double>(total);
    }

    BatchRoutingStats& st = result.stats[l];
    st.tokens_per_expert = std::move(counts);
    st.mean_router_prob = Vec(std::move(prob_sum));
    st.batch_tokens = static_cast<long>(b);
    result.balance_losses[l] = balance_loss(st, balance_coeff);
  }

  const double ce_sum = reduce_tokens<double>(
      0, b,
      [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t t = lo; t < hi; ++t) s += traces[t].ce;
        return s;
      },
      [](double& lhs, double rhs) { lhs += rhs; });
  result.task_loss = ce_sum / static_cast<double>(b);

  result.loss = result.task_loss;
  for (double bl : result.balance_losses) result.loss += bl;

  for (const TokenTrace& tt : traces) {
    if (tt.correct) result.correct += 1;
  }

  result.grads = reduce_tokens<Gradients>(
      0, b,
      [&](std::size_t lo, std::size_t hi) {
        Gradients acc = make_zero_gradients(p);
        for (std::size_t t = lo; t < hi; ++t) {
          backward_token(p, traces[t], batch.labels[t], f, balance_coeff, acc);
        }
        return acc;
      },
      [](Gradients& lhs, const Gradients& rhs) { add_grads(lhs, rhs); });
  scale_grads(result.grads, static_cast<double>(b));

  result.decisions.resize(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    result.decisions[l].reserve(b);
    for (TokenTrace& tt : traces) {
      result.decisions[l].push_back(std::move(tt.layers[l].decision));
    }
  }
  return result;
}

Gradients make_zero_gradients(const MoEStackParams& p) {
  Gradients g;
  g.layers.reserve(p.n_layers());
  for (const MoELayerParams& lp : p.layers) {
    LayerGrads lg;
    lg.gating = Mat(lp.gating.n_experts(), lp.gating.dim());
    lg.experts.reserve(lp.experts.size());
    for (const ExpertParams& e : lp.experts) {
      lg.experts.push_back(ExpertGrads{Mat(e.w1.rows(), e.w1.cols()),
                                       Vec(e.b1.size()),
                                       Mat(e.w2.rows(), e.w2.cols()),
                                       Vec(e.b2.size())});
    }
    g.layers.push_back(std::move(lg));
  }
  g.readout = Mat(p.readout.rows(), p.readout.cols());
  return g;
}

AdamState make_adam_state(const MoEStackParams& p) {
  return AdamState{make_zero_gradients(p), make_zero_gradients(p), 0};
}

namespace {

void adam_update(std::vector<double>& param, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v, double lr,
                 double bc1, double bc2) {
  if (param.size() != grad.size() || param.size() != m.size() ||
      param.size() != v.size()) {
    throw ContractViolation("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
    v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

}  // namespace

void adam_step(MoEStackParams& p, const Gradients& g, AdamState& state,
               double lr) {
  if (g.layers.size() != p.layers.size() ||
      state.m.layers.size() != p.layers.size()) {
    throw ContractViolation("adam_step: layer count mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    MoELayerParams& lp = p.layers[l];
    if (g.layers[l].experts.size() != lp.experts.size()) {
      throw ContractViolation("adam_step: expert count mismatch");
    }
    adam_update(lp.gating.w().data(), g.layers[l].gating.data(),
                state.m.layers[l].gating.data(), state.v.layers[l].gating.data(),
                lr, bc1, bc2);
    for (std::size_t e = 0; e < lp.experts.size(); ++e) {
      ExpertParams& ep = lp.experts[e];
      const ExpertGrads& eg = g.layers[l].experts[e];
      ExpertGrads& me = state.m.layers[l].experts[e];
      ExpertGrads& ve = state.v.layers[l].experts[e];
      adam_update(ep.w1.data(), eg.w1.data(), me.w1.data(), ve.w1.data(), lr, bc1, bc2);
      adam_update(ep.b1.data(), eg.b1.data(), me.b1.data(), ve.b1.data(), lr, bc1, bc2);
      adam_update(ep.w2.data(), eg.w2.data(), me.w2.data(), ve.w2.data(), lr, bc1, bc2);
      adam_update(ep.b2.data(), eg.b2.data(), me.b2.data(), ve.b2.data(), lr, bc1, bc2);
    }
  }
  adam_update(p.readout.data(), g.readout.data(), state.m.readout.data(),
              state.v.readout.data(), lr, bc1, bc2);
}

MoEStackParams init_stack(int layers, int n_experts, int dim, int hidden,
                          int n_classes, Rng& rng) {
  if (layers < 1 || n_experts < 2 || dim < 1 || hidden < 1 || n_classes < 1) {
    throw ContractViolation("init_stack: dimensions out of range");
  }
  const double w1_std = 1.0 / std::sqrt(static_cast<double>(dim));
  const double w2_std = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double readout_std = 1.0 / std::sqrt(static_cast<double>(dim));

  MoEStackParams p;
  p.layers.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    Mat gw(n_experts, dim);
    for (double& x : gw.data()) x = kGateInitStd * rng.next_gaussian();
    std::vector<ExpertParams> experts;
    experts.reserve(n_experts);
    for (int e = 0; e < n_experts; ++e) {
      ExpertParams ep{Mat(hidden, dim), Vec(hidden), Mat(dim, hidden), Vec(dim)};
      for (double& x : ep.w1.data()) x = w1_std * rng.next_gaussian();
      for (double& x : ep.w2.data()) x = w2_std * rng.next_gaussian();
      experts.push_back(std::move(ep));
    }
    p.layers.push_back(
        MoELayerParams{GatingWeights(std::move(gw)), std::move(experts)});
  }
  p.readout = Mat(n_classes, dim);
  for (double& x : p.readout.data()) x = readout_std * rng.next_gaussian();
  return p;
}

bool params_finite(const MoEStackParams& p) {
  for (const MoELayerParams& lp : p.layers) {
    if (!all_finite(lp.gating.w())) return false;
    for (const ExpertParams& e : lp.experts) {
      if (!all_finite(e.w1) || !all_finite(e.b1) || !all_finite(e.w2) ||
          !all_finite(e.b2)) {
        return false;
      }
    }
  }
  return all_finite(p.readout);
}

}  // namespace gatepro

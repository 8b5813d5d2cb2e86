#pragma once

#include <string>
#include <vector>

#include "pipcfr/dataset.hpp"
#include "pipcfr/ipm.hpp"
#include "pipcfr/nets.hpp"
#include "pipcfr/tensor.hpp"

namespace pipcfr {

enum class KlSign { AsWritten, Flipped };
std::string to_string(KlSign s);
KlSign kl_sign_from_string(const std::string& s);

struct Batch {
  Tensor x, s, y;
  Tensor tmask;     // [b,1], 1 for treated
  Tensor flipmask;  // 1 - tmask
  std::vector<int> t;
  std::vector<std::size_t> idx0, idx1;  // control / treated row positions
  std::vector<std::size_t> rows;        // source dataset row indices

  std::size_t size() const { return t.size(); }
  double treated_frac() const;
  static Batch from_dataset(const Dataset& ds, const std::vector<std::size_t>& rows);
};

struct LossOptions {
  double gamma = 1.0;
  KlSign kl_sign = KlSign::AsWritten;
  IpmConfig ipm;
  // false switches off every stop-gradient for the joint-update ablation.
  bool detach = true;
};

// Propensity weights from the batch treated fraction u:
// beta_i = t_i/(2u) + (1-t_i)/(2(1-u)). Unit weights when a batch is
// single-group; `fallback` reports that.
std::vector<double> batch_weights(const Batch& batch, bool* fallback = nullptr);

// Negative log likelihood of both propensity models; phi enters g~ detached
// so no gradient reaches psi_eta.
Tensor loss_p(const ModelBundle& b, const Batch& batch, const LossOptions& opt);

// gamma-weighted divergence between g (detached targets) and g~ (parameters
// frozen) as a function of psi_eta. AsWritten keeps the sign of the written
// objective; Flipped negates it, which makes the update minimize
// KL(g || g~) directly.
Tensor loss_kl(const ModelBundle& b, const Batch& batch, const LossOptions& opt);

enum class LossYMode {
  EtaUpdate,    // psi_eta live; psi_alpha/h frozen; IPM term constant -> omitted
  HeadsUpdate,  // h0/h1/psi_alpha live; psi_eta frozen; IPM included
  Full,         // everything live (gradient checks / ablations)
};

struct LossYResult {
  Tensor total;
  double factual = 0.0;
  double ipm_value = 0.0;
  bool ipm_skipped = false;    // single-group batch
  bool ipm_converged = true;   // Sinkhorn convergence flag
};

// Weighted factual loss over the q path plus IPM between the psi_alpha
// representations of the two treatment groups.
LossYResult loss_y(const ModelBundle& b, const Batch& batch, const LossOptions& opt,
                   LossYMode mode);

// Per-sample (f(x,t)-y)^2 + (f(x,1-t)-q)^2 - 2(f(x,t)-y)(f(x,1-t)-q), with q
// outputs detached so the f update cannot propagate into q/psi_eta/psi_alpha.
Tensor loss_pip(const ModelBundle& b, const Batch& batch, const LossOptions& opt);

// The f update used by the trainer. The written-out pseudo-outcome loss
// constrains only f(x,t) - f(x,1-t); the anchored form additionally fits the
// observed factual outcome and the imputed counterfactual outcome, which pins
// f's level (needed for counterfactual-prediction metrics and factual-MSE
// model selection). pip_value always carries the written-out loss value.
struct FUpdateResult {
  Tensor total;
  double pip_value = 0.0;
};
FUpdateResult loss_f_update(const ModelBundle& b, const Batch& batch, const LossOptions& opt,
                            bool pure_difference);

// Baseline objective over f's own trunk and heads. TARNET: plain factual MSE.
// CFRNET: weighted factual MSE + IPM over the trunk representations.
LossYResult loss_baseline_f(const ModelBundle& b, const Batch& batch, const LossOptions& opt);

// --- diagnostics ------------------------------------------------------------

// Empirical error functionals over a synthetic dataset carrying noiseless
// potential outcomes. Residuals use the per-sample potential outcomes as the
// reference; the ITE decomposition identity is exact under this estimator.
struct Diagnostics {
  double eps_F = 0, eps_CF = 0, eps_CF_tilde = 0, eps_CF_ddot = 0;
  double eps_ITE = 0, eps_PIP = 0;
  double cross_factual_cf = 0;  // E[r_t r_{1-t}]
  double cross_pip = 0;         // E[r_t rddot_{1-t}]
  double ipm_phi = 0;           // pooled-phi MMD (first power)
  double Q0 = 0, Q1 = 0;
  double u0 = 0, u1 = 0;
  double eps_F0 = 0, eps_F1 = 0;
  double delta_hat = 0;
  double bound_rhs = 0;
  double bound_gap = 0;         // rhs - eps_ITE, reported not asserted
  double se_eps_ITE = 0;
  std::string to_json() const;
};

Diagnostics diagnostics(const ModelBundle& b, const Dataset& ds, const IpmConfig& ipm_cfg = {});

}  // namespace pipcfr

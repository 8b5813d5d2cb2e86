#pragma once

#include <cstdint>
#include <vector>

#include "pipcfr/dataset.hpp"
#include "pipcfr/rng.hpp"

namespace pipcfr {

// All generators are pure functions of (config, seed). Every dataset carries
// noiseless potential outcomes computed by replaying the structural recursion
// under both treatment arms with identical noise draws; outcome-equation
// noises are zeroed for the potential outcomes while structural noise
// realizations are shared between arms.

// Linear SEM with a single post-treatment variable:
//   X ~ N(0, sx^2), T = 1(X + N(0, st^2) > 0), u_s ~ N(0, su^2),
//   S = X + a1*T + u_s, Y = X + a2*T + S + N(0, 1).
// Potential outcomes (u_s retained): y(t') = 2X + (a1 + a2) t' + u_s,
// so tau = a1 + a2 for every unit. u_s is recorded in Dataset::u.
struct Example1Config {
  double sigma_x = 1.0;
  double sigma_t = 1.0;
  double sigma_u = 1.0;
  double alpha1 = 2.0;
  double alpha2 = 1.0;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
};
Dataset gen_example1(const Example1Config& cfg);

// Discrete sampling distribution for coefficient entries.
struct DiscreteSpec {
  std::vector<double> values;
  std::vector<double> probs;
  void validate() const;  // probs sum to 1 within 1e-12
  double draw(Rng& rng) const;
};

// K-step sequence driven by covariates and a running average of its own
// history; treatment selects between two coefficient matrices:
//   s_1 ~ N(0,1)^m,  s_k = x b_t + (C1/(k-1)) sum_{j<k} s_j + eps  (k > 1),
// eps entries Laplace(0, scale). Outcome: mean of the last 3 steps averaged
// over feature dims. Covariates default to standard-normal stand-ins.
struct SequentialConfig {
  std::size_t n_units = 747;
  std::size_t x_dim = 25;
  std::size_t m = 4;   // post-treatment dim per step (chosen default)
  std::size_t K = 10;  // >= 3
  double C1 = 0.5;     // history feedback scale (chosen default)
  DiscreteSpec beta0_spec{{0, 1, 2, 3, 4}, {0.5, 0.2, 0.15, 0.1, 0.05}};
  DiscreteSpec beta1_spec{{-2, -1, 0, 1, 2}, {0.2, 0.2, 0.2, 0.2, 0.2}};
  double laplace_scale = 1.0;
  std::uint64_t seed = 0;
};
// x_external, when given, must hold n_units * x_dim values.
Dataset gen_sequential(const SequentialConfig& cfg,
                       const std::vector<double>* x_external = nullptr);

// AR(1) sequence with a per-unit scalar drive:
//   s_0 = 0,  s_k = C2 (base + t * shift) * 1_m + A s_{k-1} + eps.
// Requires spectral_radius(A) < 0.9. Outcome: mean of the last 3 steps.
struct ARConfig {
  std::size_t n_units = 5000;
  std::size_t m = 4;
  std::size_t K = 10;  // >= 3
  double C2 = 1.0;
  std::vector<double> A;  // m*m row-major; empty -> random with radius 0.5
  double laplace_scale = 1.0;
  std::uint64_t seed = 0;
};
// scores, when given, holds n_units * 2 values: (base, shift) per unit.
Dataset gen_ar(const ARConfig& cfg, const std::vector<double>* scores = nullptr);

// Numerical spectral-radius estimate (power iteration on a dense matrix).
double spectral_radius(const std::vector<double>& a, std::size_t m);

// Temporal causal system over K steps with state x_k, per-step treatments,
// and three post-treatment blocks v/m/a concatenated into s_k in R^{3N}:
//   x_{k+1} = x_k + a_x t_k + e_x,  t_k ~ Bern(sigmoid(x_k . b_t + e_t)),
//   v_k = B_v x_k + g_v t_k + e_v,  m_k = B_m x_k + g_m t_k + e_m,
//   a_k = B_a x_k + e_a,
//   y = (1/C) ( sum_{k=k0}^K gamma_y^{K-k} (x_k . b_y + m_k . b_m_out
//               + a_k . b_a_out) (1 + e_u,k) + t_K * beta_t_out ),
// with k0 = K - floor(alpha_window * K). The sample exposes x = x_K,
// t = t_K, and s = flattened [v;m;a] trajectory for k0..K. All noise terms
// are Laplace. Potential outcomes replay the final step under both t_K
// values with e_u zeroed.
struct TemporalConfig {
  std::size_t n_samples = 10000;
  std::size_t feat_dim = 5;  // N
  std::size_t K = 60;
  double gamma_y = 0.99;
  double alpha_window = 0.5;  // must keep 1 <= k0 <= K
  double C = 0.0;             // 0 -> auto: sum of gamma_y^(K-k) over the window
  // Structural noise scales: sized so the trajectory carries substantial
  // exogenous variation that only the post-treatment record reveals.
  double eps_x = 0.5, eps_t = 0.1, eps_v = 0.5, eps_m = 0.5, eps_a = 0.5;
  double eps_u = 1.0;         // outcome noise scale; the sweep variable
  double beta_t_out = 2.0;    // direct treatment effect on the outcome
  // Coefficient arrays; empty -> drawn deterministically from the seed.
  std::vector<double> a_x;             // N
  std::vector<double> beta_t_assign;   // N
  std::vector<double> beta_v, beta_m, beta_a;          // N*N
  std::vector<double> gamma_v, gamma_m;                // N
  std::vector<double> beta_y, beta_m_out, beta_a_out;  // N
  std::uint64_t seed = 0;

  std::size_t k0() const;
  double normalizer() const;  // resolved C
};
Dataset gen_temporal(const TemporalConfig& cfg, TemporalConfig* resolved = nullptr);

}  // namespace pipcfr

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pipcfr/dataset.hpp"
#include "pipcfr/generators.hpp"
#include "pipcfr/nets.hpp"

namespace pipcfr {

struct MetricsReport {
  double pehe_in = -1;   // train-split PEHE, original outcome units
  double pehe_out = -1;  // test-split PEHE
  double cf_error_mean = 0;
  double cf_error_var = 0;
  int seeds_aggregated = 1;
  std::string method;
  std::string config_fingerprint;
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

// Root-mean-square of tau_hat - tau_true over the dataset, reported in
// original (un-standardized) outcome units via the bundle's scaler. Accepts
// standardized or raw datasets; raw covariates are transformed before
// prediction. Throws when tau_true is missing or dimensions mismatch.
double pehe(const ModelBundle& b, const Dataset& ds);

// Mean and unbiased sample variance of the counterfactual prediction error
// f(x, 1-t) - y_{1-t} against noiseless potential outcomes, original units.
std::pair<double, double> counterfactual_variance(const ModelBundle& b, const Dataset& ds);

// Batched tau_hat in original units (helper shared by metrics).
std::vector<double> predict_ite_all(const ModelBundle& b, const Dataset& ds);

// --- closed-form regression study over the Example-1 SEM ------------------------

struct OracleCase {
  double mean_arm[2] = {0, 0};  // counterfactual error mean per observed arm
  double var_arm[2] = {0, 0};
  double var_pooled = 0;
  double target_mean_arm[2] = {0, 0};
  double target_var = 0;
};

struct OracleResult {
  OracleCase from_xt;    // regress y ~ (X, T)
  OracleCase from_xts;   // regress y ~ (X, T, S), observed S kept when flipping T
  OracleCase from_xtu;   // regress y ~ (X, T, u_s)
  std::size_t n_mc = 0;
  std::string to_json() const;
};

// Draws the SEM n_mc times, fits the three OLS regressions in closed form
// (normal equations, ridge 1e-10), flips T for counterfactual prediction, and
// compares against freshly drawn true counterfactual outcomes. Targets:
// (0, sigma_u^2 + 1), ((2t-1) alpha1, 1), (0, 1).
OracleResult example1_oracle(const Example1Config& cfg, std::size_t n_mc);

// --- Proposition-2 style inequality check ----------------------------------------

// Discrete-x family with Bernoulli treatment and Gaussian phi | x, t; all
// conditionals known in closed form.
struct Prop2Family {
  std::vector<double> x_probs;  // cell probabilities, sum 1
  std::vector<double> pi1;      // p(t=1 | x), each in (0,1)
  std::vector<double> mu0, mu1; // phi mean per cell and arm
  std::vector<double> sigma;    // phi std per cell
  std::size_t cells() const { return x_probs.size(); }
  // independent_phi forces mu0 == mu1 (phi independent of t given x).
  static Prop2Family random(Rng& rng, bool independent_phi);
};

struct Prop2CellResult {
  double lhs = 0;      // MMD estimate of IPM(p0(phi|x), p1(phi|x))
  double rhs = 0;      // sqrt(2/(pi0 pi1) * E[KL])
  double lhs_se = 0;
  double kl_mean = 0;
  std::size_t n0 = 0, n1 = 0;
  bool holds = false;  // lhs <= rhs + 3 * lhs_se
};

struct Prop2Result {
  std::vector<Prop2CellResult> cells;
  double lhs_avg = 0, rhs_avg = 0;
  bool holds = false;  // every cell
  std::string to_json() const;
};

Prop2Result prop2_check(const Prop2Family& fam, std::size_t n, std::uint64_t seed);

}  // namespace pipcfr

#pragma once

#include <cstddef>
#include <vector>

#include "pipcfr/tensor.hpp"

namespace pipcfr {

enum class IpmKind { MMD, WASS };

struct IpmConfig {
  IpmKind kind = IpmKind::WASS;
  // RBF bandwidth sigma; <= 0 selects the median heuristic per call
  // (bandwidth is treated as a constant by the gradient either way).
  double rbf_bandwidth = 0.0;
  // Biased V-statistic by default so the training loss stays non-negative;
  // the unbiased U-statistic is available for diagnostics.
  bool mmd_unbiased = false;
  double sinkhorn_epsilon = 0.1;
  int sinkhorn_iters = 50;
  double sinkhorn_tol = 1e-3;  // L1 marginal violation
};

// Median of pairwise distances over the pooled points. Falls back to 1 when
// all points coincide.
double median_bandwidth(const double* a, std::size_t na, const double* b, std::size_t nb,
                        std::size_t dim);

// MMD^2 with RBF kernel k(u,v) = exp(-|u-v|^2 / (2 sigma^2)). Optional
// gradient accumulation into grad_a/grad_b (same layout as the inputs).
double mmd2_value(const double* a, std::size_t na, const double* b, std::size_t nb,
                  std::size_t dim, double sigma, bool unbiased, double* grad_a = nullptr,
                  double* grad_b = nullptr, double upstream = 1.0);

struct SinkhornResult {
  double value = 0.0;   // entropic transport cost (squared-Euclidean ground cost)
  bool converged = false;
  int iters = 0;
  std::vector<double> plan;  // na x nb transport plan
};

// Log-domain Sinkhorn with uniform marginals. Never throws on
// non-convergence; the caller inspects `converged`.
SinkhornResult sinkhorn_plan(const double* a, std::size_t na, const double* b, std::size_t nb,
                             std::size_t dim, double epsilon, int max_iters, double tol);

// Autodiff ops over [n, d] point-set tensors. Gradients flow to the points:
// analytically for MMD, through the converged transport plan for Sinkhorn.
Tensor mmd2_op(const Tensor& a, const Tensor& b, const IpmConfig& cfg);
Tensor sinkhorn_op(const Tensor& a, const Tensor& b, const IpmConfig& cfg,
                   bool* converged = nullptr);
Tensor ipm_op(const Tensor& a, const Tensor& b, const IpmConfig& cfg,
              bool* converged = nullptr);

// Pooled two-sample MMD^2 over per-group representation samples; a proxy
// diagnostic for the x-averaged conditional discrepancy, not a training
// signal.
double mmd_from_samples_conditional(const std::vector<double>& phi0,
                                    const std::vector<double>& phi1, std::size_t dim,
                                    const IpmConfig& cfg);

}  // namespace pipcfr

#include "pipcfr/ipm.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pipcfr/errors.hpp"

namespace pipcfr {

namespace {

inline double sqdist(const double* u, const double* v, std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = u[k] - v[k];
    s += diff * diff;
  }
  return s;
}

void check_nonempty(std::size_t na, std::size_t nb) {
  if (na == 0 || nb == 0)
    throw std::invalid_argument("ipm: point sets must be non-empty (got " +
                                std::to_string(na) + " and " + std::to_string(nb) + ")");
}

}  // namespace

double median_bandwidth(const double* a, std::size_t na, const double* b, std::size_t nb,
                        std::size_t dim) {
  check_nonempty(na, nb);
  std::vector<const double*> pts;
  pts.reserve(na + nb);
  for (std::size_t i = 0; i < na; ++i) pts.push_back(a + i * dim);
  for (std::size_t j = 0; j < nb; ++j) pts.push_back(b + j * dim);
  std::vector<double> d2;
  d2.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) d2.push_back(sqdist(pts[i], pts[j], dim));
  if (d2.empty()) return 1.0;
  std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
  const double med = std::sqrt(d2[d2.size() / 2]);
  return med > 0 ? med : 1.0;
}

double mmd2_value(const double* a, std::size_t na, const double* b, std::size_t nb,
                  std::size_t dim, double sigma, bool unbiased, double* grad_a, double* grad_b,
                  double upstream) {
  check_nonempty(na, nb);
  if (unbiased && (na < 2 || nb < 2))
    throw std::invalid_argument("mmd2: unbiased estimator needs >= 2 points per set");
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double invs2 = 1.0 / (sigma * sigma);

  const double waa = unbiased ? 1.0 / (static_cast<double>(na) * (na - 1))
                              : 1.0 / (static_cast<double>(na) * na);
  const double wbb = unbiased ? 1.0 / (static_cast<double>(nb) * (nb - 1))
                              : 1.0 / (static_cast<double>(nb) * nb);
  const double wab = 2.0 / (static_cast<double>(na) * nb);

  double taa = 0, tbb = 0, tab = 0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) {
      if (unbiased && i == j) continue;
      const double k = std::exp(-sqdist(a + i * dim, a + j * dim, dim) * inv2s2);
      taa += k;
      if (grad_a) {
        // d/da_i of k(a_i, a_j); the (j, i) pair contributes symmetrically.
        const double c = upstream * waa * k * invs2;
        for (std::size_t q = 0; q < dim; ++q) {
          const double diff = a[i * dim + q] - a[j * dim + q];
          grad_a[i * dim + q] -= c * diff;
          grad_a[j * dim + q] += c * diff;
        }
      }
    }
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      if (unbiased && i == j) continue;
      const double k = std::exp(-sqdist(b + i * dim, b + j * dim, dim) * inv2s2);
      tbb += k;
      if (grad_b) {
        const double c = upstream * wbb * k * invs2;
        for (std::size_t q = 0; q < dim; ++q) {
          const double diff = b[i * dim + q] - b[j * dim + q];
          grad_b[i * dim + q] -= c * diff;
          grad_b[j * dim + q] += c * diff;
        }
      }
    }
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      const double k = std::exp(-sqdist(a + i * dim, b + j * dim, dim) * inv2s2);
      tab += k;
      if (grad_a || grad_b) {
        const double c = upstream * wab * k * invs2;
        for (std::size_t q = 0; q < dim; ++q) {
          const double diff = a[i * dim + q] - b[j * dim + q];
          if (grad_a) grad_a[i * dim + q] += c * diff;
          if (grad_b) grad_b[j * dim + q] -= c * diff;
        }
      }
    }
  return waa * taa + wbb * tbb - wab * tab;
}

SinkhornResult sinkhorn_plan(const double* a, std::size_t na, const double* b, std::size_t nb,
                             std::size_t dim, double epsilon, int max_iters, double tol) {
  check_nonempty(na, nb);
  if (!(epsilon > 0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  if (max_iters < 1) throw std::invalid_argument("sinkhorn: iters must be >= 1");

  using Arr = Eigen::ArrayXXd;
  const auto n0 = static_cast<Eigen::Index>(na);
  const auto n1 = static_cast<Eigen::Index>(nb);
  Arr M(n0, n1);  // -C/eps
  for (Eigen::Index i = 0; i < n0; ++i)
    for (Eigen::Index j = 0; j < n1; ++j)
      M(i, j) = -sqdist(a + i * dim, b + j * dim, dim) / epsilon;

  const double log_a = -std::log(static_cast<double>(na));
  const double log_b = -std::log(static_cast<double>(nb));
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(n0);
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(n1);

  SinkhornResult res;
  Arr logP(n0, n1);
  for (int it = 1; it <= max_iters; ++it) {
    {
      Arr T = M.rowwise() + (g / epsilon).transpose();
      Eigen::ArrayXd rmax = T.rowwise().maxCoeff();
      f = -epsilon * (rmax + (T.colwise() - rmax).exp().rowwise().sum().log() + log_b);
    }
    {
      Arr T = M.colwise() + (f / epsilon);
      Eigen::ArrayXd cmax = T.colwise().maxCoeff().transpose();
      g = -epsilon * (cmax +
                      (T.rowwise() - cmax.transpose()).exp().colwise().sum().log().transpose() +
                      log_a);
    }
    res.iters = it;
    // Column marginals are exact after the g update; convergence is the L1
    // violation of the row marginals.
    logP = ((M.colwise() + f / epsilon).rowwise() + (g / epsilon).transpose()) + log_a + log_b;
    const Eigen::ArrayXd rowsum = logP.exp().rowwise().sum();
    const double err = (rowsum - 1.0 / static_cast<double>(na)).abs().sum();
    if (err < tol) {
      res.converged = true;
      break;
    }
  }

  Arr P = logP.exp();
  res.plan.assign(na * nb, 0.0);
  double value = 0;
  for (Eigen::Index i = 0; i < n0; ++i)
    for (Eigen::Index j = 0; j < n1; ++j) {
      const double p = P(i, j);
      res.plan[static_cast<std::size_t>(i) * nb + static_cast<std::size_t>(j)] = p;
      value += p * (f(i) + g(j));
    }
  res.value = value;
  return res;
}

Tensor mmd2_op(const Tensor& a, const Tensor& b, const IpmConfig& cfg) {
  if (a.cols() != b.cols())
    throw ShapeError("mmd2: dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t na = a.rows(), nb = b.rows(), d = a.cols();
  const double sigma = cfg.rbf_bandwidth > 0
                           ? cfg.rbf_bandwidth
                           : median_bandwidth(a.data().data(), na, b.data().data(), nb, d);
  const bool unbiased = cfg.mmd_unbiased;
  Tensor out =
      make_op_output(1, 1, {&a, &b}, [na, nb, d, sigma, unbiased](TensorImpl& self) {
        auto& A = *self.parents[0];
        auto& B = *self.parents[1];
        if (A.requires_grad) A.ensure_grad();
        if (B.requires_grad) B.ensure_grad();
        mmd2_value(A.data.data(), na, B.data.data(), nb, d, sigma, unbiased,
                   A.requires_grad ? A.grad.data() : nullptr,
                   B.requires_grad ? B.grad.data() : nullptr, self.grad[0]);
      });
  out.impl()->data[0] =
      mmd2_value(a.data().data(), na, b.data().data(), nb, d, sigma, unbiased);
  return out;
}

Tensor sinkhorn_op(const Tensor& a, const Tensor& b, const IpmConfig& cfg, bool* converged) {
  if (a.cols() != b.cols())
    throw ShapeError("sinkhorn: dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t na = a.rows(), nb = b.rows(), d = a.cols();
  SinkhornResult res = sinkhorn_plan(a.data().data(), na, b.data().data(), nb, d,
                                     cfg.sinkhorn_epsilon, cfg.sinkhorn_iters, cfg.sinkhorn_tol);
  if (converged) *converged = res.converged;
  // Envelope gradient: at the optimum, dV/dC_ij is the transport plan, so the
  // point gradients go through the squared-Euclidean cost with the plan fixed.
  auto plan = std::make_shared<std::vector<double>>(std::move(res.plan));
  Tensor out = make_op_output(1, 1, {&a, &b}, [na, nb, d, plan](TensorImpl& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const double up = self.grad[0];
    if (A.requires_grad) A.ensure_grad();
    if (B.requires_grad) B.ensure_grad();
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j) {
        const double p = (*plan)[i * nb + j];
        if (p == 0) continue;
        for (std::size_t q = 0; q < d; ++q) {
          const double diff = A.data[i * d + q] - B.data[j * d + q];
          if (A.requires_grad) A.grad[i * d + q] += up * p * 2.0 * diff;
          if (B.requires_grad) B.grad[j * d + q] -= up * p * 2.0 * diff;
        }
      }
  });
  out.impl()->data[0] = res.value;
  return out;
}

Tensor ipm_op(const Tensor& a, const Tensor& b, const IpmConfig& cfg, bool* converged) {
  if (cfg.kind == IpmKind::MMD) {
    if (converged) *converged = true;
    return mmd2_op(a, b, cfg);
  }
  return sinkhorn_op(a, b, cfg, converged);
}

double mmd_from_samples_conditional(const std::vector<double>& phi0,
                                    const std::vector<double>& phi1, std::size_t dim,
                                    const IpmConfig& cfg) {
  const std::size_t n0 = phi0.size() / dim, n1 = phi1.size() / dim;
  check_nonempty(n0, n1);
  const double sigma = cfg.rbf_bandwidth > 0
                           ? cfg.rbf_bandwidth
                           : median_bandwidth(phi0.data(), n0, phi1.data(), n1, dim);
  return mmd2_value(phi0.data(), n0, phi1.data(), n1, dim, sigma, cfg.mmd_unbiased);
}

}  // namespace pipcfr

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pipcfr/ipm.hpp"
#include "pipcfr/rng.hpp"
#include "pipcfr/tensor.hpp"
#include "test_util.hpp"

using namespace pipcfr;
using testutil::grad_check;

namespace {

Tensor random_points(Rng& rng, std::size_t n, std::size_t d, bool requires_grad = false,
                     double shift = 0.0) {
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.normal() + shift;
  return Tensor::from_data(n, d, std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("mmd2: identical multisets give zero") {
  Rng rng(1);
  const Tensor a = random_points(rng, 20, 3);
  IpmConfig cfg;
  cfg.kind = IpmKind::MMD;
  cfg.rbf_bandwidth = 1.0;
  const double v = mmd2_op(a, a, cfg).value();
  CHECK(v >= -1e-12);
  CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("mmd2: singleton closed form") {
  const Tensor a = Tensor::from_data(1, 1, {0.0});
  const Tensor b = Tensor::from_data(1, 1, {1.0});
  IpmConfig cfg;
  cfg.kind = IpmKind::MMD;
  cfg.rbf_bandwidth = 1.0;
  const double v = mmd2_op(a, b, cfg).value();
  CHECK(v == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-9));
  CHECK(v == doctest::Approx(0.786939).epsilon(1e-5));
}

TEST_CASE("mmd2: symmetric under swap and permutation-invariant") {
  Rng rng(2);
  const Tensor a = random_points(rng, 9, 2);
  const Tensor b = random_points(rng, 7, 2, false, 0.5);
  IpmConfig cfg;
  cfg.kind = IpmKind::MMD;
  cfg.rbf_bandwidth = 0.8;
  const double v1 = mmd2_op(a, b, cfg).value();
  const double v2 = mmd2_op(b, a, cfg).value();
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-13));

  std::vector<std::size_t> perm{3, 1, 4, 0, 2, 8, 6, 5, 7};
  const Tensor ap = row_select(a, perm);
  CHECK(mmd2_op(ap, b, cfg).value() == doctest::Approx(v1).epsilon(1e-13));
}

TEST_CASE("mmd2: empty set is an error") {
  const Tensor a = Tensor::zeros(0, 2);
  const Tensor b = Tensor::zeros(3, 2);
  IpmConfig cfg;
  CHECK_THROWS_AS(mmd2_op(a, b, cfg), std::invalid_argument);
}

TEST_CASE("mmd2: gradient matches finite differences") {
  Rng rng(3);
  Tensor a = random_points(rng, 5, 3, true);
  Tensor b = random_points(rng, 7, 3, false, 0.7);
  IpmConfig cfg;
  cfg.kind = IpmKind::MMD;
  cfg.rbf_bandwidth = 1.2;  // fixed so the perturbation cannot move the bandwidth
  CHECK(grad_check([&] { return mmd2_op(a, b, cfg); }, a) < 1e-3);

  cfg.mmd_unbiased = true;
  CHECK(grad_check([&] { return mmd2_op(a, b, cfg); }, a) < 1e-3);
}

TEST_CASE("sinkhorn: identical singletons give zero") {
  const Tensor a = Tensor::from_data(1, 2, {0.3, -0.1});
  IpmConfig cfg;
  cfg.sinkhorn_epsilon = 0.1;
  cfg.sinkhorn_iters = 50;
  cfg.sinkhorn_tol = 1e-10;
  CHECK(std::abs(sinkhorn_op(a, a, cfg).value()) < 1e-12);
}

TEST_CASE("sinkhorn: singleton pair recovers the squared distance") {
  const double d = 2.0;
  const Tensor a = Tensor::from_data(1, 1, {0.0});
  const Tensor b = Tensor::from_data(1, 1, {d});
  IpmConfig cfg;
  cfg.sinkhorn_epsilon = 1e-3 * d * d;
  cfg.sinkhorn_iters = 1000;
  cfg.sinkhorn_tol = 1e-12;
  const double v = sinkhorn_op(a, b, cfg).value();
  CHECK(std::abs(v - d * d) / (d * d) < 0.01);
}

TEST_CASE("sinkhorn: non-negative and symmetric for equal-size sets") {
  Rng rng(4);
  const Tensor a = random_points(rng, 8, 2);
  const Tensor b = random_points(rng, 8, 2, false, 1.0);
  IpmConfig cfg;
  cfg.sinkhorn_epsilon = 0.1;
  cfg.sinkhorn_iters = 20000;
  cfg.sinkhorn_tol = 1e-9;
  const double v1 = sinkhorn_op(a, b, cfg).value();
  const double v2 = sinkhorn_op(b, a, cfg).value();
  CHECK(v1 >= 0.0);
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-6));
}

TEST_CASE("sinkhorn: non-convergence is flagged, not thrown") {
  Rng rng(5);
  const Tensor a = random_points(rng, 20, 2);
  const Tensor b = random_points(rng, 20, 2, false, 3.0);
  IpmConfig cfg;
  cfg.sinkhorn_epsilon = 0.01;
  cfg.sinkhorn_iters = 1;
  cfg.sinkhorn_tol = 1e-12;
  bool converged = true;
  (void)sinkhorn_op(a, b, cfg, &converged).value();
  CHECK_FALSE(converged);
}

TEST_CASE("sinkhorn: gradient via the transport plan matches finite differences") {
  Rng rng(6);
  Tensor a = random_points(rng, 4, 2, true);
  Tensor b = random_points(rng, 6, 2, true, 0.8);
  IpmConfig cfg;
  cfg.sinkhorn_epsilon = 0.1;
  cfg.sinkhorn_iters = 50000;
  cfg.sinkhorn_tol = 1e-10;
  CHECK(grad_check([&] { return sinkhorn_op(a, b, cfg); }, a, 1e-5) < 1e-3);
  CHECK(grad_check([&] { return sinkhorn_op(a, b, cfg); }, b, 1e-5) < 1e-3);
}

TEST_CASE("median heuristic bandwidth is positive and sane") {
  Rng rng(7);
  const Tensor a = random_points(rng, 30, 2);
  const Tensor b = random_points(rng, 30, 2, false, 1.0);
  const double sigma = median_bandwidth(a.data().data(), 30, b.data().data(), 30, 2);
  CHECK(sigma > 0.5);
  CHECK(sigma < 10.0);
}

TEST_CASE("pooled conditional proxy: null and separated cases") {
  Rng rng(8);
  const std::size_t n = 2000;
  std::vector<double> same0(n), same1(n), far(n);
  for (std::size_t i = 0; i < n; ++i) {
    same0[i] = rng.normal();
    same1[i] = rng.normal();
    far[i] = rng.normal() + 2.0;
  }
  IpmConfig cfg;
  cfg.rbf_bandwidth = 1.0;
  CHECK(mmd_from_samples_conditional(same0, same1, 1, cfg) < 0.01);
  CHECK(mmd_from_samples_conditional(same0, far, 1, cfg) > 0.2);
}

TEST_CASE("pooled conditional proxy: permutation invariance") {
  Rng rng(9);
  std::vector<double> a(100), b(80);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal() + 1.0;
  IpmConfig cfg;
  cfg.rbf_bandwidth = 1.0;
  const double v1 = mmd_from_samples_conditional(a, b, 1, cfg);
  std::reverse(a.begin(), a.end());
  const double v2 = mmd_from_samples_conditional(a, b, 1, cfg);
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-13));
}

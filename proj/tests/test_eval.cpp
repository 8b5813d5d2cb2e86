#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pipcfr/errors.hpp"
#include "pipcfr/eval.hpp"
#include "pipcfr/rng.hpp"

using namespace pipcfr;

namespace {

ModelBundle zero_f_bundle(std::size_t x_dim, std::size_t s_dim) {
  ArchSpec arch;
  arch.x_dim = x_dim;
  arch.s_dim = s_dim;
  arch.rep_hidden = 8;
  arch.head_hidden = 8;
  arch.phi_hidden = 6;
  arch.prop_hidden = 6;
  Rng rng(1);
  ModelBundle b = ModelBundle::init(Method::PIPCFR_MMD, arch, rng);
  for (Mlp* net : {&b.f_trunk, &b.f0, &b.f1}) {
    for (Tensor& w : net->weights())
      for (double& v : w.mutable_data()) v = 0.0;
    for (Tensor& t : net->biases())
      for (double& v : t.mutable_data()) v = 0.0;
  }
  b.scaler.identity = true;
  return b;
}

Dataset two_sample_ds(double tau0, double tau1) {
  Dataset ds;
  ds.append({0.5}, 0, {0.1}, 1.0);
  ds.append({-0.5}, 1, {0.2}, 2.0);
  ds.set_potential(0, 0.0, tau0);
  ds.set_potential(1, 0.0, tau1);
  return ds;
}

}  // namespace

TEST_CASE("pehe: zero predictor against constant effects") {
  ModelBundle b = zero_f_bundle(1, 1);
  // tau_hat = 0; tau_true = {-3, -4} -> sqrt((9+16)/2)
  const Dataset ds = two_sample_ds(-3.0, -4.0);
  CHECK(pehe(b, ds) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(pehe(b, ds) == doctest::Approx(3.5355).epsilon(1e-4));

  const Dataset exact = two_sample_ds(0.0, 0.0);
  CHECK(pehe(b, exact) == 0.0);

  const Dataset constant = two_sample_ds(2.0, 2.0);
  CHECK(pehe(b, constant) == doctest::Approx(2.0));
}

TEST_CASE("pehe: permutation invariant") {
  Rng rng(2);
  Dataset ds;
  for (int i = 0; i < 40; ++i) {
    ds.append({rng.normal()}, i % 2, {rng.normal()}, rng.normal());
    ds.set_potential(i, 0.0, rng.normal());
  }
  ModelBundle b = zero_f_bundle(1, 1);
  const double before = pehe(b, ds);
  std::vector<std::size_t> perm = Rng(3).permutation(ds.n());
  const Dataset shuf = subset(ds, perm);
  CHECK(pehe(b, shuf) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("pehe: missing ground truth or dim mismatch is an error") {
  ModelBundle b = zero_f_bundle(2, 1);
  Dataset ds;
  ds.append({1.0, 2.0}, 0, {0.0}, 1.0);
  CHECK_THROWS_AS(pehe(b, ds), std::invalid_argument);

  Dataset wrong;
  wrong.append({1.0}, 0, {0.0}, 1.0);
  wrong.set_potential(0, 0, 1);
  CHECK_THROWS_WITH_AS(pehe(b, wrong), doctest::Contains("x_dim"), ShapeError);
}

TEST_CASE("counterfactual variance: hand cases") {
  ModelBundle b = zero_f_bundle(1, 1);
  // predictions are 0; residuals = -y_{1-t}
  Dataset ds;
  ds.append({0.1}, 0, {0.0}, 0.0);
  ds.append({0.2}, 0, {0.0}, 0.0);
  ds.set_potential(0, 0.0, 1.0);   // resid = -1
  ds.set_potential(1, 0.0, -1.0);  // resid = +1
  const auto [m, v] = counterfactual_variance(b, ds);
  CHECK(m == doctest::Approx(0.0));
  CHECK(v == doctest::Approx(2.0));  // unbiased: ((1)^2 + (1)^2) / (2 - 1)

  Dataset constant;
  constant.append({0.1}, 0, {0.0}, 0.0);
  constant.append({0.2}, 0, {0.0}, 0.0);
  constant.set_potential(0, 0.0, -3.0);
  constant.set_potential(1, 0.0, -3.0);
  const auto [mc, vc] = counterfactual_variance(b, constant);
  CHECK(mc == doctest::Approx(3.0));
  CHECK(vc == doctest::Approx(0.0));

  Dataset perfect;
  perfect.append({0.1}, 1, {0.0}, 0.0);
  perfect.append({0.2}, 0, {0.0}, 0.0);
  perfect.set_potential(0, 0.0, 0.0);
  perfect.set_potential(1, 0.0, 0.0);
  const auto [mp, vp] = counterfactual_variance(b, perfect);
  CHECK(mp == 0.0);
  CHECK(vp == 0.0);
}

TEST_CASE("example1 oracle: analytic targets at moderate n") {
  Example1Config cfg;
  cfg.sigma_u = 1.0;
  cfg.alpha1 = 2.0;
  cfg.alpha2 = 1.0;
  cfg.seed = 4;
  const OracleResult r = example1_oracle(cfg, 200000);

  CHECK(r.from_xt.var_pooled == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::abs(r.from_xt.mean_arm[0]) < 0.05);
  CHECK(std::abs(r.from_xt.mean_arm[1]) < 0.05);

  CHECK(r.from_xts.mean_arm[0] == doctest::Approx(-2.0).epsilon(0.03));
  CHECK(r.from_xts.mean_arm[1] == doctest::Approx(2.0).epsilon(0.03));
  CHECK(r.from_xts.var_arm[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(r.from_xts.var_arm[1] == doctest::Approx(1.0).epsilon(0.05));

  CHECK(r.from_xtu.var_pooled == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(r.from_xtu.mean_arm[0]) < 0.05);
}

TEST_CASE("example1 oracle: variance ordering var(b) ~ var(c) < var(a)") {
  Example1Config cfg;
  cfg.sigma_u = 2.0;
  cfg.seed = 5;
  const OracleResult r = example1_oracle(cfg, 200000);
  CHECK(r.from_xts.var_arm[0] < r.from_xt.var_pooled);
  CHECK(r.from_xtu.var_pooled < r.from_xt.var_pooled);
}

TEST_CASE("example1 oracle: rejects tiny n_mc") {
  Example1Config cfg;
  CHECK_THROWS_AS(example1_oracle(cfg, 1000), std::invalid_argument);
}

TEST_CASE("prop2: independent phi gives zero KL and near-zero IPM") {
  Rng rng(6);
  const Prop2Family fam = Prop2Family::random(rng, /*independent_phi=*/true);
  const Prop2Result r = prop2_check(fam, 10000, 7);
  for (const auto& cell : r.cells) {
    CHECK(cell.kl_mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cell.lhs < 0.02);
  }
}

TEST_CASE("prop2: identical conditionals by construction hold") {
  Prop2Family fam;
  fam.x_probs = {1.0};
  fam.pi1 = {0.5};
  fam.mu0 = {0.3};
  fam.mu1 = {0.3};
  fam.sigma = {1.0};
  const Prop2Result r = prop2_check(fam, 10000, 8);
  CHECK(r.holds);
}

TEST_CASE("prop2: strongly dependent phi still satisfies the bound") {
  Prop2Family fam;
  fam.x_probs = {1.0};
  fam.pi1 = {0.5};
  fam.mu0 = {0.0};
  fam.mu1 = {1.0};  // phi ~ t + noise
  fam.sigma = {0.1};
  const Prop2Result r = prop2_check(fam, 10000, 9);
  CHECK(r.cells[0].lhs > 0.5);  // nearly disjoint distributions
  CHECK(r.holds);
}

TEST_CASE("prop2: randomized families hold across 30 draws") {
  Rng rng(10);
  for (int rep = 0; rep < 30; ++rep) {
    const Prop2Family fam = Prop2Family::random(rng, false);
    const Prop2Result r = prop2_check(fam, 6000, 100 + rep);
    CHECK(r.holds);
  }
}

TEST_CASE("prop2: violated overlap is an error") {
  Prop2Family fam;
  fam.x_probs = {1.0};
  fam.pi1 = {0.0};
  fam.mu0 = {0.0};
  fam.mu1 = {0.0};
  fam.sigma = {1.0};
  CHECK_THROWS_AS(prop2_check(fam, 1000, 11), std::invalid_argument);
}

TEST_CASE("metrics report json round trip") {
  MetricsReport m;
  m.pehe_in = 1.25;
  m.pehe_out = 2.5;
  m.cf_error_mean = -0.1;
  m.cf_error_var = 0.9;
  m.method = "PIPCFR_WASS";
  m.config_fingerprint = "abc";
  const MetricsReport back = MetricsReport::from_json(m.to_json());
  CHECK(back.pehe_out == m.pehe_out);
  CHECK(back.method == m.method);
}

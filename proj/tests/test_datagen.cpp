#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "pipcfr/dataset.hpp"
#include "pipcfr/errors.hpp"
#include "pipcfr/generators.hpp"
#include "pipcfr/rng.hpp"

using namespace pipcfr;

namespace {

// Both treatment arms must appear in every decile of the given covariate.
bool overlap_by_decile(const Dataset& ds, std::size_t covariate) {
  std::vector<std::pair<double, int>> pairs;
  for (std::size_t i = 0; i < ds.n(); ++i)
    pairs.emplace_back(ds.x[i * ds.x_dim + covariate], ds.t[i]);
  std::sort(pairs.begin(), pairs.end());
  const std::size_t per = pairs.size() / 10;
  for (int d = 0; d < 10; ++d) {
    std::size_t n1 = 0, total = 0;
    for (std::size_t i = d * per; i < (d + 1) * per && i < pairs.size(); ++i) {
      n1 += pairs[i].second;
      ++total;
    }
    if (n1 == 0 || n1 == total) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("example1: tau is alpha1 + alpha2 for every unit") {
  Example1Config cfg;
  cfg.alpha1 = 2;
  cfg.alpha2 = 1;
  cfg.n = 500;
  cfg.seed = 3;
  const Dataset ds = gen_example1(cfg);
  REQUIRE(ds.has_potential);
  for (std::size_t i = 0; i < ds.n(); ++i) CHECK(ds.tau_true[i] == doctest::Approx(3.0));
  CHECK(ds.u_dim == 1);
  CHECK(ds.u.size() == ds.n());
}

TEST_CASE("example1: degenerate covariates give balanced assignment") {
  Example1Config cfg;
  cfg.sigma_x = 1e-9;
  cfg.sigma_t = 1.0;
  cfg.n = 100000;
  cfg.seed = 5;
  const Dataset ds = gen_example1(cfg);
  double p1 = 0;
  for (int t : ds.t) p1 += t;
  p1 /= static_cast<double>(ds.n());
  CHECK(std::abs(p1 - 0.5) < 0.01);
}

TEST_CASE("example1: exogenous noise has mean zero within 3 sigma") {
  Example1Config cfg;
  cfg.n = 100000;
  cfg.sigma_u = 2.0;
  cfg.seed = 9;
  const Dataset ds = gen_example1(cfg);
  double m = 0;
  for (std::size_t i = 0; i < ds.n(); ++i)
    m += ds.s[i] - ds.x[i] - cfg.alpha1 * ds.t[i];
  m /= static_cast<double>(ds.n());
  CHECK(std::abs(m) < 3.0 * cfg.sigma_u / std::sqrt(static_cast<double>(ds.n())));
}

TEST_CASE("example1: overlap holds per covariate decile") {
  Example1Config cfg;
  cfg.n = 100000;
  cfg.seed = 17;
  const Dataset ds = gen_example1(cfg);
  CHECK(overlap_by_decile(ds, 0));
}

TEST_CASE("example1: invalid config throws") {
  Example1Config cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(gen_example1(cfg), std::invalid_argument);
  cfg.n = 10;
  cfg.sigma_u = 0;
  CHECK_THROWS_AS(gen_example1(cfg), std::invalid_argument);
}

TEST_CASE("sequential: recursion collapses when C1 and noise vanish") {
  SequentialConfig cfg;
  cfg.n_units = 20;
  cfg.x_dim = 3;
  cfg.m = 2;
  cfg.K = 4;
  cfg.C1 = 0;
  cfg.laplace_scale = 0;
  cfg.seed = 1;
  // point-mass coefficient distributions make x*beta reconstructible
  cfg.beta0_spec = {{2}, {1.0}};
  cfg.beta1_spec = {{-1}, {1.0}};
  const Dataset ds = gen_sequential(cfg);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    double xsum = 0;
    for (std::size_t c = 0; c < cfg.x_dim; ++c) xsum += ds.x[i * ds.x_dim + c];
    const double beta = ds.t[i] == 1 ? -1.0 : 2.0;
    // steps k >= 2 equal x . beta exactly
    for (std::size_t k = 1; k < cfg.K; ++k)
      for (std::size_t d = 0; d < cfg.m; ++d)
        CHECK(ds.s[i * ds.s_dim + k * cfg.m + d] == doctest::Approx(beta * xsum).epsilon(1e-12));
  }
}

TEST_CASE("sequential: coefficient distribution frequencies") {
  DiscreteSpec spec{{0, 1, 2, 3, 4}, {0.5, 0.2, 0.15, 0.1, 0.05}};
  Rng rng(123);
  std::size_t zeros = 0;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i)
    if (spec.draw(rng) == 0.0) ++zeros;
  CHECK(std::abs(static_cast<double>(zeros) / draws - 0.5) < 0.01);
}

TEST_CASE("sequential: identical arms give zero treatment effect") {
  SequentialConfig cfg;
  cfg.n_units = 50;
  cfg.x_dim = 4;
  cfg.m = 3;
  cfg.K = 6;
  cfg.seed = 2;
  cfg.beta0_spec = {{1.5}, {1.0}};
  cfg.beta1_spec = {{1.5}, {1.0}};
  const Dataset ds = gen_sequential(cfg);
  for (std::size_t i = 0; i < ds.n(); ++i) CHECK(ds.tau_true[i] == 0.0);
}

TEST_CASE("sequential: observed outcome equals the replayed potential outcome") {
  SequentialConfig cfg;
  cfg.n_units = 40;
  cfg.K = 5;
  cfg.seed = 8;
  const Dataset ds = gen_sequential(cfg);
  for (std::size_t i = 0; i < ds.n(); ++i)
    CHECK(ds.y[i] == (ds.t[i] == 1 ? ds.y1_true[i] : ds.y0_true[i]));
}

TEST_CASE("sequential: K < 3 is rejected") {
  SequentialConfig cfg;
  cfg.K = 2;
  CHECK_THROWS_AS(gen_sequential(cfg), std::invalid_argument);
}

TEST_CASE("ar: zero transfer matrix gives constant drive") {
  ARConfig cfg;
  cfg.n_units = 10;
  cfg.m = 3;
  cfg.K = 5;
  cfg.C2 = 1.5;
  cfg.A.assign(9, 0.0);
  cfg.laplace_scale = 0;
  cfg.seed = 4;
  const Dataset ds = gen_ar(cfg);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double drive = cfg.C2 * (ds.x[2 * i] + ds.t[i] * ds.x[2 * i + 1]);
    for (std::size_t k = 0; k < cfg.K; ++k)
      for (std::size_t d = 0; d < cfg.m; ++d)
        CHECK(ds.s[i * ds.s_dim + k * cfg.m + d] == doctest::Approx(drive).epsilon(1e-12));
  }
}

TEST_CASE("ar: half-identity transfer converges to twice the drive") {
  ARConfig cfg;
  cfg.n_units = 5;
  cfg.m = 2;
  cfg.K = 40;
  cfg.C2 = 1.0;
  cfg.A = {0.5, 0, 0, 0.5};
  cfg.laplace_scale = 0;
  cfg.seed = 6;
  std::vector<double> scores;
  for (std::size_t i = 0; i < cfg.n_units; ++i) {
    scores.push_back(0.7);  // base
    scores.push_back(0.0);  // shift
  }
  const Dataset ds = gen_ar(cfg, &scores);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double last = ds.s[i * ds.s_dim + (cfg.K - 1) * cfg.m];
    CHECK(last == doctest::Approx(2 * 0.7).epsilon(1e-9));
  }
}

TEST_CASE("ar: sequence stays bounded for a stable transfer matrix") {
  ARConfig cfg;
  cfg.n_units = 50;
  cfg.m = 4;
  cfg.K = 500;
  cfg.C2 = 1.0;
  cfg.laplace_scale = 1.0;
  cfg.seed = 10;
  const Dataset ds = gen_ar(cfg);
  double drive_max = 0;
  for (std::size_t i = 0; i < ds.n(); ++i)
    drive_max = std::max(drive_max,
                         std::abs(cfg.C2 * (ds.x[2 * i] + ds.t[i] * ds.x[2 * i + 1])));
  const double bound = drive_max / (1.0 - 0.9) + 20.0 * cfg.laplace_scale;
  double smax = 0;
  for (double v : ds.s) smax = std::max(smax, std::abs(v));
  CHECK(smax < bound);
}

TEST_CASE("ar: unstable transfer matrix is rejected") {
  ARConfig cfg;
  cfg.m = 2;
  cfg.A = {1.0, 0, 0, 1.0};
  CHECK_THROWS_AS(gen_ar(cfg), std::invalid_argument);
  CHECK(spectral_radius({0.5, 0, 0, 0.5}, 2) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("temporal: direct effect only gives tau = c / C") {
  TemporalConfig cfg;
  cfg.n_samples = 60;
  cfg.feat_dim = 3;
  cfg.K = 8;
  cfg.eps_u = 0.0;
  cfg.gamma_v.assign(3, 0.0);
  cfg.gamma_m.assign(3, 0.0);
  cfg.beta_t_out = 4.0;
  cfg.seed = 12;
  const Dataset ds = gen_temporal(cfg);
  const double expected = 4.0 / cfg.normalizer();
  for (std::size_t i = 0; i < ds.n(); ++i)
    CHECK(ds.tau_true[i] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("temporal: zero outcome noise means y equals the observed potential outcome") {
  TemporalConfig cfg;
  cfg.n_samples = 40;
  cfg.feat_dim = 3;
  cfg.K = 6;
  cfg.eps_u = 0.0;
  cfg.seed = 13;
  const Dataset ds = gen_temporal(cfg);
  for (std::size_t i = 0; i < ds.n(); ++i)
    CHECK(ds.y[i] == doctest::Approx(ds.t[i] == 1 ? ds.y1_true[i] : ds.y0_true[i])
                         .epsilon(1e-12));
}

TEST_CASE("temporal: s carries 3N dims per window step") {
  TemporalConfig cfg;
  cfg.n_samples = 100;
  cfg.feat_dim = 5;
  cfg.K = 10;
  cfg.alpha_window = 0.5;
  cfg.seed = 14;
  const Dataset ds = gen_temporal(cfg);
  const std::size_t steps = cfg.K - cfg.k0() + 1;
  CHECK(ds.s_dim == steps * 3 * cfg.feat_dim);
  CHECK(ds.x_dim == cfg.feat_dim);
}

TEST_CASE("temporal: window must leave k0 >= 1") {
  TemporalConfig cfg;
  cfg.alpha_window = 1.0;  // floor(K) = K -> k0 = 0
  CHECK_THROWS_AS(gen_temporal(cfg), std::invalid_argument);
}

TEST_CASE("temporal: overlap holds per first-covariate decile") {
  TemporalConfig cfg;
  cfg.n_samples = 100000;
  cfg.feat_dim = 5;
  cfg.K = 10;
  cfg.seed = 15;
  const Dataset ds = gen_temporal(cfg);
  CHECK(overlap_by_decile(ds, 0));
}

TEST_CASE("generators are seed-deterministic") {
  TemporalConfig cfg;
  cfg.n_samples = 50;
  cfg.feat_dim = 3;
  cfg.K = 6;
  cfg.seed = 77;
  const Dataset a = gen_temporal(cfg);
  const Dataset b = gen_temporal(cfg);
  CHECK(a.x == b.x);
  CHECK(a.s == b.s);
  CHECK(a.y == b.y);
  CHECK(a.t == b.t);
}

TEST_CASE("split: sizes, determinism, partition") {
  SplitSpec spec;
  spec.seed = 21;
  const SplitIndices idx = split_indices(10, spec);
  CHECK(idx.train.size() == 6);
  CHECK(idx.val.size() == 2);
  CHECK(idx.test.size() == 2);

  const SplitIndices idx2 = split_indices(10, spec);
  CHECK(idx.train == idx2.train);
  CHECK(idx.test == idx2.test);

  std::set<std::size_t> all;
  for (auto v : idx.train) all.insert(v);
  for (auto v : idx.val) all.insert(v);
  for (auto v : idx.test) all.insert(v);
  CHECK(all.size() == 10);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);
}

TEST_CASE("split: empty result or bad fractions throw") {
  SplitSpec spec;
  CHECK_THROWS_AS(split_indices(3, spec), std::invalid_argument);  // val would be empty
  spec.train_frac = 0.5;
  spec.val_frac = 0.2;
  spec.test_frac = 0.2;  // sums to 0.9
  CHECK_THROWS_AS(split_indices(100, spec), std::invalid_argument);
}

TEST_CASE("standardize: two-point feature maps to -1/+1") {
  Dataset ds;
  ds.append({1.0}, 0, {}, 5.0);
  ds.append({3.0}, 1, {}, 7.0);
  standardize(ds);
  CHECK(ds.x[0] == doctest::Approx(-1.0));
  CHECK(ds.x[1] == doctest::Approx(1.0));
  CHECK(ds.y[0] == doctest::Approx(-1.0));
  CHECK(ds.standardized);
}

TEST_CASE("standardize: constant feature passes through") {
  Dataset ds;
  ds.append({2.0, 1.0}, 0, {}, 1.0);
  ds.append({2.0, 3.0}, 1, {}, 2.0);
  const Scaler sc = standardize(ds);
  CHECK(ds.x[0] == 2.0);
  CHECK(ds.x[2] == 2.0);
  (void)sc;
}

TEST_CASE("standardize: inverse transform round-trips") {
  Example1Config cfg;
  cfg.n = 200;
  cfg.seed = 30;
  Dataset ds = gen_example1(cfg);
  const Dataset orig = ds;
  const Scaler sc = standardize(ds);
  sc.inverse(ds);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    CHECK(ds.x[i] == doctest::Approx(orig.x[i]).epsilon(1e-10));
    CHECK(ds.y[i] == doctest::Approx(orig.y[i]).epsilon(1e-10));
    CHECK(ds.tau_true[i] == doctest::Approx(orig.tau_true[i]).epsilon(1e-10));
  }
}

TEST_CASE("standardize: fit on train only, applied to others") {
  Example1Config cfg;
  cfg.n = 300;
  cfg.seed = 31;
  Dataset full = gen_example1(cfg);
  SplitSpec sp;
  sp.seed = 31;
  SplitDatasets parts = split(full, sp);
  standardize(parts.train, {&parts.val, &parts.test});
  double m = 0;
  for (double v : parts.train.y) m += v;
  CHECK(std::abs(m / parts.train.n()) < 1e-9);
  double mv = 0;
  for (double v : parts.val.y) mv += v;
  CHECK(std::abs(mv / parts.val.n()) > 1e-9);  // val mean not exactly zero
  CHECK(parts.val.standardized);
}

TEST_CASE("csv: write/load round trip is exact") {
  Example1Config cfg;
  cfg.n = 50;
  cfg.seed = 33;
  const Dataset ds = gen_example1(cfg);
  const std::string path = "test_roundtrip.csv";
  write_csv(ds, path);
  const Dataset back = load_csv(path);
  REQUIRE(back.n() == ds.n());
  CHECK(back.x == ds.x);
  CHECK(back.s == ds.s);
  CHECK(back.y == ds.y);
  CHECK(back.t == ds.t);
  CHECK(back.y0_true == ds.y0_true);
  CHECK(back.tau_true == ds.tau_true);
  std::filesystem::remove(path);
}

TEST_CASE("csv: parse errors carry row locations") {
  const std::string path = "test_bad.csv";
  {
    std::ofstream f(path);
    f << "x_0,t,s_0,y\n1.0,0,2.0,3.0\n1.5,2,2.5,3.5\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("row 2"), ParseError);
  {
    std::ofstream f(path);
    f << "x_0,t,s_0,y\n1.0,0,abc,3.0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("s_0"), ParseError);
  {
    std::ofstream f(path);
    f << "x_0,s_0,y\n1.0,2.0,3.0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("'t'"), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("csv: minimal three-row file loads") {
  const std::string path = "test_min.csv";
  {
    std::ofstream f(path);
    f << "x_0,t,s_0,y\n0.1,0,1.0,2.0\n0.2,1,1.1,2.1\n0.3,0,1.2,2.2\n";
  }
  const Dataset ds = load_csv(path);
  CHECK(ds.n() == 3);
  CHECK(ds.x_dim == 1);
  CHECK(ds.s_dim == 1);
  CHECK_FALSE(ds.has_potential);
  std::filesystem::remove(path);
}

#include "pipcfr/generators.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pipcfr/errors.hpp"

namespace pipcfr {

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// y += M x for row-major M (rows x cols).
void matvec_acc(const std::vector<double>& m, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(m.data() + r * cols, x, cols);
}

}  // namespace

// --- Example 1 -----------------------------------------------------------------

Dataset gen_example1(const Example1Config& cfg) {
  if (cfg.n == 0) throw std::invalid_argument("gen_example1: n must be positive");
  if (!(cfg.sigma_x > 0) || !(cfg.sigma_t > 0) || !(cfg.sigma_u > 0))
    throw std::invalid_argument("gen_example1: all sigmas must be positive");

  Rng rng = Rng(cfg.seed).substream("example1");
  Dataset ds;
  ds.x_dim = 1;
  ds.s_dim = 1;
  ds.u_dim = 1;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x = rng.normal(0, cfg.sigma_x);
    const double t_star = x + rng.normal(0, cfg.sigma_t);
    const int t = t_star > 0 ? 1 : 0;
    const double us = rng.normal(0, cfg.sigma_u);
    const double s = x + cfg.alpha1 * t + us;
    const double y = x + cfg.alpha2 * t + s + rng.normal(0, 1);
    ds.append({x}, t, {s}, y);
    ds.u.push_back(us);
    const double y0 = 2 * x + us;  // outcome noise zeroed, u_s retained
    const double y1 = 2 * x + (cfg.alpha1 + cfg.alpha2) + us;
    ds.set_potential(i, y0, y1);
  }
  ds.validate();
  return ds;
}

// --- Sequential ------------------------------------------------------------------

void DiscreteSpec::validate() const {
  if (values.size() != probs.size() || values.empty())
    throw std::invalid_argument("DiscreteSpec: values/probs size mismatch");
  double total = 0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("DiscreteSpec: probabilities sum to " + std::to_string(total));
}

double DiscreteSpec::draw(Rng& rng) const {
  const double r = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return values[i];
  }
  return values.back();
}

Dataset gen_sequential(const SequentialConfig& cfg, const std::vector<double>* x_external) {
  if (cfg.K < 3)
    throw std::invalid_argument("gen_sequential: K must be >= 3 (outcome uses last 3 steps)");
  if (cfg.n_units == 0 || cfg.m == 0 || cfg.x_dim == 0)
    throw std::invalid_argument("gen_sequential: dimensions must be positive");
  cfg.beta0_spec.validate();
  cfg.beta1_spec.validate();
  if (x_external && x_external->size() != cfg.n_units * cfg.x_dim)
    throw ShapeError("gen_sequential: external covariates have " +
                     std::to_string(x_external->size()) + " values, expected " +
                     std::to_string(cfg.n_units * cfg.x_dim));

  Rng root(cfg.seed);
  Rng coef_rng = root.substream("seq-coeffs");
  const std::size_t dx = cfg.x_dim, m = cfg.m, K = cfg.K;

  std::vector<double> beta0(dx * m), beta1(dx * m);
  for (double& v : beta0) v = cfg.beta0_spec.draw(coef_rng);
  for (double& v : beta1) v = cfg.beta1_spec.draw(coef_rng);
  // Treatment assignment weights for the stand-in covariates.
  std::vector<double> w_assign(dx);
  for (double& v : w_assign) v = coef_rng.normal() / std::sqrt(static_cast<double>(dx));

  Rng rng = root.substream("seq-data");
  Dataset ds;
  ds.x_dim = dx;
  ds.s_dim = K * m;

  std::vector<double> xi(dx), s0((K + 1) * m), s1((K + 1) * m), noise(m), drive(m);
  for (std::size_t i = 0; i < cfg.n_units; ++i) {
    if (x_external) {
      std::copy(x_external->begin() + i * dx, x_external->begin() + (i + 1) * dx, xi.begin());
    } else {
      for (double& v : xi) v = rng.normal();
    }
    const int t = rng.bernoulli(sigmoid(dot(xi.data(), w_assign.data(), dx))) ? 1 : 0;

    // Shared initial step and shared noise draws; only the coefficient matrix
    // differs between arms.
    for (std::size_t d = 0; d < m; ++d) s0[m + d] = s1[m + d] = rng.normal();
    std::vector<double> drive0(m, 0.0), drive1(m, 0.0);
    // x b_t is constant across steps; precompute per arm.
    for (std::size_t d = 0; d < m; ++d) {
      double a0 = 0, a1 = 0;
      for (std::size_t c = 0; c < dx; ++c) {
        a0 += xi[c] * beta0[c * m + d];
        a1 += xi[c] * beta1[c * m + d];
      }
      drive0[d] = a0;
      drive1[d] = a1;
    }
    std::vector<double> run0(m, 0.0), run1(m, 0.0);  // running sums of history
    for (std::size_t d = 0; d < m; ++d) {
      run0[d] = s0[m + d];
      run1[d] = s1[m + d];
    }
    for (std::size_t k = 2; k <= K; ++k) {
      for (double& v : noise) v = rng.laplace(cfg.laplace_scale);
      const double inv = cfg.C1 / static_cast<double>(k - 1);
      for (std::size_t d = 0; d < m; ++d) {
        s0[k * m + d] = drive0[d] + inv * run0[d] + noise[d];
        s1[k * m + d] = drive1[d] + inv * run1[d] + noise[d];
        run0[d] += s0[k * m + d];
        run1[d] += s1[k * m + d];
      }
    }
    auto outcome = [&](const std::vector<double>& traj) {
      double acc = 0;
      for (std::size_t k = K - 2; k <= K; ++k)
        for (std::size_t d = 0; d < m; ++d) acc += traj[k * m + d];
      return acc / (3.0 * static_cast<double>(m));
    };
    const double y0 = outcome(s0), y1 = outcome(s1);
    const std::vector<double>& obs = (t == 1) ? s1 : s0;
    std::vector<double> si(obs.begin() + m, obs.begin() + (K + 1) * m);
    ds.append(xi, t, si, t == 1 ? y1 : y0);
    ds.set_potential(i, y0, y1);
  }
  ds.validate();
  return ds;
}

// --- AR ---------------------------------------------------------------------------

double spectral_radius(const std::vector<double>& a, std::size_t m) {
  if (a.size() != m * m) throw ShapeError("spectral_radius: matrix is not m x m");
  // Growth-rate power iteration; robust to complex dominant eigenvalues.
  Rng rng(12345);
  std::vector<double> v(m), av(m);
  for (double& x : v) x = rng.normal();
  double log_growth = 0;
  int counted = 0;
  for (int it = 0; it < 300; ++it) {
    std::fill(av.begin(), av.end(), 0.0);
    matvec_acc(a, m, m, v.data(), av.data());
    double norm = 0;
    for (double x : av) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0) return 0.0;
    if (it >= 100) {
      log_growth += std::log(norm);
      ++counted;
    }
    for (std::size_t i = 0; i < m; ++i) v[i] = av[i] / norm;
  }
  return std::exp(log_growth / counted);
}

Dataset gen_ar(const ARConfig& cfg, const std::vector<double>* scores) {
  if (cfg.K < 3) throw std::invalid_argument("gen_ar: K must be >= 3");
  if (cfg.n_units == 0 || cfg.m == 0)
    throw std::invalid_argument("gen_ar: dimensions must be positive");
  if (scores && scores->size() != cfg.n_units * 2)
    throw ShapeError("gen_ar: scores must hold n_units * 2 values");

  Rng root(cfg.seed);
  const std::size_t m = cfg.m, K = cfg.K;
  std::vector<double> A = cfg.A;
  if (A.empty()) {
    Rng arng = root.substream("ar-matrix");
    A.resize(m * m);
    for (double& v : A) v = arng.uniform(-1, 1);
    const double r = spectral_radius(A, m);
    if (r > 0)
      for (double& v : A) v *= 0.5 / r;
  }
  const double radius = spectral_radius(A, m);
  if (radius >= 0.9)
    throw std::invalid_argument("gen_ar: spectral radius " + std::to_string(radius) +
                                " >= 0.9");

  Rng rng = root.substream("ar-data");
  Dataset ds;
  ds.x_dim = 2;
  ds.s_dim = K * m;

  std::vector<double> s0((K + 1) * m, 0.0), s1((K + 1) * m, 0.0), noise(m);
  for (std::size_t i = 0; i < cfg.n_units; ++i) {
    double base, shift;
    if (scores) {
      base = (*scores)[2 * i];
      shift = (*scores)[2 * i + 1];
    } else {
      base = rng.normal();
      shift = rng.normal();
    }
    const int t = rng.bernoulli(sigmoid(base)) ? 1 : 0;
    const double d0 = cfg.C2 * base;
    const double d1 = cfg.C2 * (base + shift);

    std::fill(s0.begin(), s0.end(), 0.0);
    std::fill(s1.begin(), s1.end(), 0.0);
    for (std::size_t k = 1; k <= K; ++k) {
      for (double& v : noise) v = rng.laplace(cfg.laplace_scale);
      for (std::size_t d = 0; d < m; ++d) {
        double acc0 = d0 + noise[d];
        double acc1 = d1 + noise[d];
        for (std::size_t c = 0; c < m; ++c) {
          acc0 += A[d * m + c] * s0[(k - 1) * m + c];
          acc1 += A[d * m + c] * s1[(k - 1) * m + c];
        }
        s0[k * m + d] = acc0;
        s1[k * m + d] = acc1;
      }
    }
    auto outcome = [&](const std::vector<double>& traj) {
      double acc = 0;
      for (std::size_t k = K - 2; k <= K; ++k)
        for (std::size_t d = 0; d < m; ++d) acc += traj[k * m + d];
      return acc / (3.0 * static_cast<double>(m));
    };
    const double y0 = outcome(s0), y1 = outcome(s1);
    const std::vector<double>& obs = (t == 1) ? s1 : s0;
    std::vector<double> si(obs.begin() + m, obs.begin() + (K + 1) * m);
    ds.append({base, shift}, t, si, t == 1 ? y1 : y0);
    ds.set_potential(i, y0, y1);
  }
  ds.validate();
  return ds;
}

// --- Temporal -----------------------------------------------------------------------

std::size_t TemporalConfig::k0() const {
  const auto window = static_cast<std::size_t>(std::floor(alpha_window * static_cast<double>(K)));
  if (window >= K) return 0;  // invalid; caught in validation
  return K - window;
}

double TemporalConfig::normalizer() const {
  if (C != 0.0) return C;
  double acc = 0;
  for (std::size_t k = k0(); k <= K; ++k) acc += std::pow(gamma_y, static_cast<double>(K - k));
  return acc;
}

Dataset gen_temporal(const TemporalConfig& cfg_in, TemporalConfig* resolved) {
  TemporalConfig cfg = cfg_in;
  const std::size_t N = cfg.feat_dim, K = cfg.K;
  if (cfg.n_samples == 0 || N == 0 || K == 0)
    throw std::invalid_argument("gen_temporal: dimensions must be positive");
  if (!(cfg.alpha_window > 0) || cfg.alpha_window > 1)
    throw std::invalid_argument("gen_temporal: alpha_window must be in (0, 1]");
  if (!(cfg.gamma_y > 0) || cfg.gamma_y > 1)
    throw std::invalid_argument("gen_temporal: gamma_y must be in (0, 1]");
  const std::size_t k0 = cfg.k0();
  if (k0 < 1 || k0 > K)
    throw std::invalid_argument("gen_temporal: k0 = " + std::to_string(k0) +
                                " outside [1, K]; shrink alpha_window");

  Rng root(cfg.seed);
  Rng crng = root.substream("temporal-coeffs");
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(N));
  auto fill_vec = [&](std::vector<double>& v, std::size_t len, auto gen) {
    if (v.empty()) {
      v.resize(len);
      for (double& e : v) e = gen();
    } else if (v.size() != len) {
      throw ShapeError("gen_temporal: coefficient array has " + std::to_string(v.size()) +
                       " values, expected " + std::to_string(len));
    }
  };
  fill_vec(cfg.a_x, N, [&] { return crng.uniform(-0.3, 0.3); });
  fill_vec(cfg.beta_t_assign, N, [&] { return 0.5 * crng.normal() * inv_sqrt_n; });
  fill_vec(cfg.beta_v, N * N, [&] { return crng.normal() * inv_sqrt_n; });
  fill_vec(cfg.beta_m, N * N, [&] { return crng.normal() * inv_sqrt_n; });
  fill_vec(cfg.beta_a, N * N, [&] { return crng.normal() * inv_sqrt_n; });
  fill_vec(cfg.gamma_v, N, [&] { return crng.uniform(-1, 1); });
  fill_vec(cfg.gamma_m, N, [&] { return crng.uniform(-1, 1); });
  fill_vec(cfg.beta_y, N, [&] { return crng.normal() * inv_sqrt_n; });
  fill_vec(cfg.beta_m_out, N, [&] { return crng.normal() * inv_sqrt_n; });
  fill_vec(cfg.beta_a_out, N, [&] { return crng.normal() * inv_sqrt_n; });
  if (resolved) *resolved = cfg;

  const double C = cfg.normalizer();
  const std::size_t steps = K - k0 + 1;

  Rng rng = root.substream("temporal-data");
  Dataset ds;
  ds.x_dim = N;
  ds.s_dim = steps * 3 * N;

  std::vector<double> xk(N), vk(N), mk(N), ak(N), si(ds.s_dim);
  std::vector<double> m_last_flip(N);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    for (double& v : xk) v = rng.normal();
    double weighted_base = 0;      // noiseless, observed arm, window sum
    double y_noisy = 0;            // with (1 + e_u) factors
    double base_last_obs = 0, base_last_flip = 0;
    int t_last = 0;
    std::size_t s_off = 0;
    for (std::size_t k = 0; k <= K; ++k) {
      const double logit = dot(xk.data(), cfg.beta_t_assign.data(), N) +
                           rng.laplace(cfg.eps_t);
      const int tk = rng.bernoulli(sigmoid(logit)) ? 1 : 0;
      std::fill(vk.begin(), vk.end(), 0.0);
      std::fill(mk.begin(), mk.end(), 0.0);
      std::fill(ak.begin(), ak.end(), 0.0);
      matvec_acc(cfg.beta_v, N, N, xk.data(), vk.data());
      matvec_acc(cfg.beta_m, N, N, xk.data(), mk.data());
      matvec_acc(cfg.beta_a, N, N, xk.data(), ak.data());
      std::vector<double> em(N);
      for (std::size_t d = 0; d < N; ++d) {
        vk[d] += cfg.gamma_v[d] * tk + rng.laplace(cfg.eps_v);
        em[d] = rng.laplace(cfg.eps_m);
        mk[d] += cfg.gamma_m[d] * tk + em[d];
        ak[d] += rng.laplace(cfg.eps_a);
      }
      if (k >= k0) {
        const double base = dot(xk.data(), cfg.beta_y.data(), N) +
                            dot(mk.data(), cfg.beta_m_out.data(), N) +
                            dot(ak.data(), cfg.beta_a_out.data(), N);
        const double w = std::pow(cfg.gamma_y, static_cast<double>(K - k));
        const double eu = rng.laplace(cfg.eps_u);
        weighted_base += w * base;
        y_noisy += w * base * (1.0 + eu);
        for (std::size_t d = 0; d < N; ++d) {
          si[s_off + d] = vk[d];
          si[s_off + N + d] = mk[d];
          si[s_off + 2 * N + d] = ak[d];
        }
        s_off += 3 * N;
        if (k == K) {
          base_last_obs = base;
          // Same step replayed under the flipped treatment: only the m block
          // and the direct term depend on t_K.
          for (std::size_t d = 0; d < N; ++d)
            m_last_flip[d] = mk[d] - cfg.gamma_m[d] * tk + cfg.gamma_m[d] * (1 - tk);
          base_last_flip = dot(xk.data(), cfg.beta_y.data(), N) +
                           dot(m_last_flip.data(), cfg.beta_m_out.data(), N) +
                           dot(ak.data(), cfg.beta_a_out.data(), N);
          t_last = tk;
        }
      }
      if (k < K)
        for (std::size_t d = 0; d < N; ++d)
          xk[d] += cfg.a_x[d] * tk + rng.laplace(cfg.eps_x);
    }
    const double y = (y_noisy + t_last * cfg.beta_t_out) / C;
    const double po_obs = (weighted_base + t_last * cfg.beta_t_out) / C;
    const double po_flip =
        (weighted_base - base_last_obs + base_last_flip + (1 - t_last) * cfg.beta_t_out) / C;
    ds.append(xk, t_last, si, y);
    ds.set_potential(i, t_last == 0 ? po_obs : po_flip, t_last == 1 ? po_obs : po_flip);
  }
  ds.validate();
  return ds;
}

}  // namespace pipcfr

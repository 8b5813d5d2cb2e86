#include "pipcfr/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "pipcfr/errors.hpp"
#include "pipcfr/ipm.hpp"
#include "pipcfr/losses.hpp"

namespace pipcfr {

namespace {

// Rows transformed into model space when the dataset is raw.
Tensor model_x(const ModelBundle& b, const Dataset& ds, std::size_t beg, std::size_t len) {
  std::vector<double> buf(len * ds.x_dim);
  for (std::size_t i = 0; i < len; ++i) {
    const double* row = ds.x_row(beg + i);
    if (ds.standardized) {
      std::copy(row, row + ds.x_dim, buf.begin() + i * ds.x_dim);
    } else {
      b.scaler.transform_x_row(row, buf.data() + i * ds.x_dim, ds.x_dim);
    }
  }
  return Tensor::from_data(len, ds.x_dim, std::move(buf));
}

void check_dims(const ModelBundle& b, const Dataset& ds, const char* who) {
  if (ds.x_dim != b.arch.x_dim)
    throw ShapeError(std::string(who) + ": dataset x_dim " + std::to_string(ds.x_dim) +
                     " does not match checkpoint x_dim " + std::to_string(b.arch.x_dim));
}

}  // namespace

std::vector<double> predict_ite_all(const ModelBundle& b, const Dataset& ds) {
  check_dims(b, ds, "predict_ite_all");
  const std::size_t n = ds.n();
  std::vector<double> out(n);
  const double y_scale = b.scaler.identity ? 1.0 : b.scaler.y_std;
  const std::size_t chunk = 4096;
  for (std::size_t beg = 0; beg < n; beg += chunk) {
    const std::size_t len = std::min(chunk, n - beg);
    const Tensor x = model_x(b, ds, beg, len);
    const Tensor m0 = Tensor::constant(len, 1, 0.0);
    const Tensor m1 = Tensor::constant(len, 1, 1.0);
    const Tensor f0 = predict_f_batch(b, x, m0, true);
    const Tensor f1 = predict_f_batch(b, x, m1, true);
    for (std::size_t i = 0; i < len; ++i) out[beg + i] = y_scale * (f1.at(i, 0) - f0.at(i, 0));
  }
  return out;
}

double pehe(const ModelBundle& b, const Dataset& ds) {
  if (!ds.has_potential)
    throw std::invalid_argument("pehe: dataset lacks tau_true");
  const std::vector<double> tau_hat = predict_ite_all(b, ds);
  const double y_scale = (ds.standardized && !b.scaler.identity) ? b.scaler.y_std : 1.0;
  double acc = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double diff = tau_hat[i] - y_scale * ds.tau_true[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(ds.n()));
}

std::pair<double, double> counterfactual_variance(const ModelBundle& b, const Dataset& ds) {
  if (!ds.has_potential)
    throw std::invalid_argument("counterfactual_variance: dataset lacks potential outcomes");
  check_dims(b, ds, "counterfactual_variance");
  const std::size_t n = ds.n();
  if (n < 2)
    throw std::invalid_argument("counterfactual_variance: need at least 2 samples");
  std::vector<double> resid(n);
  const std::size_t chunk = 4096;
  for (std::size_t beg = 0; beg < n; beg += chunk) {
    const std::size_t len = std::min(chunk, n - beg);
    const Tensor x = model_x(b, ds, beg, len);
    std::vector<double> fm(len);
    const Tensor m0 = Tensor::constant(len, 1, 0.0);
    const Tensor m1 = Tensor::constant(len, 1, 1.0);
    const Tensor f0 = predict_f_batch(b, x, m0, true);
    const Tensor f1 = predict_f_batch(b, x, m1, true);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t r = beg + i;
      const double pred_model = ds.t[r] == 1 ? f0.at(i, 0) : f1.at(i, 0);
      const double pred = b.scaler.identity ? pred_model : b.scaler.y_from_model(pred_model);
      const double truth_raw = ds.t[r] == 1 ? ds.y0_true[r] : ds.y1_true[r];
      const double truth = (ds.standardized && !b.scaler.identity)
                               ? b.scaler.y_from_model(truth_raw)
                               : truth_raw;
      resid[r] = pred - truth;
    }
  }
  double mean = 0;
  for (double v : resid) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double v : resid) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  return {mean, var};
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["pehe_in"] = pehe_in;
  j["pehe_out"] = pehe_out;
  j["cf_error_mean"] = cf_error_mean;
  j["cf_error_var"] = cf_error_var;
  j["seeds_aggregated"] = seeds_aggregated;
  j["method"] = method;
  j["config_fingerprint"] = config_fingerprint;
  return j.dump();
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  MetricsReport r;
  r.pehe_in = j.at("pehe_in").get<double>();
  r.pehe_out = j.at("pehe_out").get<double>();
  r.cf_error_mean = j.at("cf_error_mean").get<double>();
  r.cf_error_var = j.at("cf_error_var").get<double>();
  r.seeds_aggregated = j.at("seeds_aggregated").get<int>();
  r.method = j.at("method").get<std::string>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  return r;
}

// --- Example-1 oracle --------------------------------------------------------------

namespace {

struct OlsFit {
  Eigen::VectorXd beta;
  double predict(const Eigen::VectorXd& feat) const { return feat.dot(beta); }
};

OlsFit solve_ols(const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xty) {
  Eigen::MatrixXd a = xtx;
  for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += 1e-10;  // ridge for safety
  OlsFit fit;
  fit.beta = a.ldlt().solve(xty);
  if (!fit.beta.allFinite())
    throw std::runtime_error("example1_oracle: singular design matrix");
  return fit;
}

}  // namespace

OracleResult example1_oracle(const Example1Config& cfg, std::size_t n_mc) {
  if (n_mc < 100000)
    throw std::invalid_argument("example1_oracle: n_mc must be >= 1e5");

  Rng rng = Rng(cfg.seed).substream("oracle");
  const std::size_t n = n_mc;
  std::vector<double> X(n), T(n), S(n), U(n), Y(n), Ycf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal(0, cfg.sigma_x);
    const double tstar = x + rng.normal(0, cfg.sigma_t);
    const double t = tstar > 0 ? 1.0 : 0.0;
    const double us = rng.normal(0, cfg.sigma_u);
    const double s = x + cfg.alpha1 * t + us;
    const double y = x + cfg.alpha2 * t + s + rng.normal(0, 1);
    // Fresh independent outcome noise in the true counterfactual draw.
    const double ycf = 2 * x + (cfg.alpha1 + cfg.alpha2) * (1 - t) + us + rng.normal(0, 1);
    X[i] = x; T[i] = t; S[i] = s; U[i] = us; Y[i] = y; Ycf[i] = ycf;
  }

  // Feature builders per regression; T flipped at prediction time, S and u_s
  // kept at their observed values.
  auto feats_xt = [&](std::size_t i, double t) {
    Eigen::VectorXd v(3);
    v << 1.0, X[i], t;
    return v;
  };
  auto feats_xts = [&](std::size_t i, double t) {
    Eigen::VectorXd v(4);
    v << 1.0, X[i], t, S[i];
    return v;
  };
  auto feats_xtu = [&](std::size_t i, double t) {
    Eigen::VectorXd v(4);
    v << 1.0, X[i], t, U[i];
    return v;
  };

  auto run_case = [&](auto feats, int dim) {
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd f = feats(i, T[i]);
      xtx.noalias() += f * f.transpose();
      xty.noalias() += f * Y[i];
    }
    const OlsFit fit = solve_ols(xtx, xty);
    OracleCase c;
    double sum[2] = {0, 0}, sumsq[2] = {0, 0};
    std::size_t cnt[2] = {0, 0};
    double psum = 0, psumsq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pred = fit.predict(feats(i, 1.0 - T[i]));
      const double err = pred - Ycf[i];
      const int arm = static_cast<int>(T[i]);
      sum[arm] += err;
      sumsq[arm] += err * err;
      ++cnt[arm];
      psum += err;
      psumsq += err * err;
    }
    for (int arm = 0; arm < 2; ++arm) {
      const double m = sum[arm] / static_cast<double>(cnt[arm]);
      c.mean_arm[arm] = m;
      c.var_arm[arm] = sumsq[arm] / static_cast<double>(cnt[arm]) - m * m;
    }
    const double pm = psum / static_cast<double>(n);
    c.var_pooled = psumsq / static_cast<double>(n) - pm * pm;
    return c;
  };

  OracleResult res;
  res.n_mc = n;
  res.from_xt = run_case(feats_xt, 3);
  res.from_xts = run_case(feats_xts, 4);
  res.from_xtu = run_case(feats_xtu, 4);

  res.from_xt.target_var = cfg.sigma_u * cfg.sigma_u + 1.0;
  res.from_xts.target_var = 1.0;
  res.from_xts.target_mean_arm[0] = -cfg.alpha1;  // (2t-1) alpha1 at t=0
  res.from_xts.target_mean_arm[1] = cfg.alpha1;
  res.from_xtu.target_var = 1.0;
  return res;
}

std::string OracleResult::to_json() const {
  nlohmann::json j;
  auto dump_case = [](const OracleCase& c) {
    nlohmann::json cj;
    cj["mean_arm0"] = c.mean_arm[0];
    cj["mean_arm1"] = c.mean_arm[1];
    cj["var_arm0"] = c.var_arm[0];
    cj["var_arm1"] = c.var_arm[1];
    cj["var_pooled"] = c.var_pooled;
    cj["target_mean_arm0"] = c.target_mean_arm[0];
    cj["target_mean_arm1"] = c.target_mean_arm[1];
    cj["target_var"] = c.target_var;
    return cj;
  };
  j["from_xt"] = dump_case(from_xt);
  j["from_xts"] = dump_case(from_xts);
  j["from_xtu"] = dump_case(from_xtu);
  j["n_mc"] = n_mc;
  return j.dump(2);
}

// --- Prop-2 inequality check ----------------------------------------------------------

Prop2Family Prop2Family::random(Rng& rng, bool independent_phi) {
  Prop2Family fam;
  const std::size_t cells = 1 + rng.bounded(3);  // 1..3 discrete x values
  double total = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    fam.x_probs.push_back(rng.uniform(0.5, 1.5));
    total += fam.x_probs.back();
    fam.pi1.push_back(rng.uniform(0.2, 0.8));
    const double mu = rng.uniform(-1, 1);
    const double sep = independent_phi ? 0.0 : rng.uniform(0.05, 2.0);
    fam.mu0.push_back(mu);
    fam.mu1.push_back(mu + sep);
    fam.sigma.push_back(rng.uniform(0.5, 1.5));
  }
  for (double& p : fam.x_probs) p /= total;
  return fam;
}

namespace {

double gauss_pdf(double v, double mu, double sd) {
  const double z = (v - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * 2.50662827463100050);
}

double bernoulli_kl(double q, double p) {
  const double lo = 1e-12;
  q = std::min(std::max(q, lo), 1 - lo);
  p = std::min(std::max(p, lo), 1 - lo);
  return q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p));
}

double unbiased_mmd2_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) return 0.0;
  const double sigma = median_bandwidth(a.data(), a.size(), b.data(), b.size(), 1);
  return mmd2_value(a.data(), a.size(), b.data(), b.size(), 1, sigma, /*unbiased=*/true);
}

}  // namespace

Prop2Result prop2_check(const Prop2Family& fam, std::size_t n, std::uint64_t seed) {
  const std::size_t cells = fam.cells();
  for (std::size_t c = 0; c < cells; ++c)
    if (!(fam.pi1[c] > 0) || !(fam.pi1[c] < 1))
      throw std::invalid_argument("prop2_check: overlap violated (pi is 0 or 1)");

  Rng rng = Rng(seed).substream("prop2");
  std::vector<std::vector<double>> phi0(cells), phi1(cells);
  std::vector<double> kl_sum(cells, 0.0);
  std::vector<std::size_t> kl_cnt(cells, 0);

  for (std::size_t i = 0; i < n; ++i) {
    double r = rng.uniform();
    std::size_t cell = 0;
    double acc = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      acc += fam.x_probs[c];
      if (r < acc) {
        cell = c;
        break;
      }
      cell = c;
    }
    const bool treated = rng.bernoulli(fam.pi1[cell]);
    const double mu = treated ? fam.mu1[cell] : fam.mu0[cell];
    const double phi = rng.normal(mu, fam.sigma[cell]);
    (treated ? phi1 : phi0)[cell].push_back(phi);
    // KL(p(t|x,phi) || p(t|x)) at the sampled (x, phi); densities known.
    const double p1 = fam.pi1[cell];
    const double d1 = gauss_pdf(phi, fam.mu1[cell], fam.sigma[cell]);
    const double d0 = gauss_pdf(phi, fam.mu0[cell], fam.sigma[cell]);
    const double post1 = p1 * d1 / (p1 * d1 + (1 - p1) * d0);
    kl_sum[cell] += bernoulli_kl(post1, p1);
    ++kl_cnt[cell];
  }

  Prop2Result out;
  bool all_hold = true;
  double lhs_acc = 0, rhs_acc = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    Prop2CellResult cell;
    cell.n0 = phi0[c].size();
    cell.n1 = phi1[c].size();
    if (cell.n0 < 10 || cell.n1 < 10)
      throw std::runtime_error("prop2_check: an arm has too few samples in cell " +
                               std::to_string(c));
    cell.kl_mean = kl_sum[c] / static_cast<double>(kl_cnt[c]);
    const double pi1 = fam.pi1[c];
    cell.rhs = std::sqrt(std::max(0.0, 2.0 / (pi1 * (1 - pi1)) * cell.kl_mean));
    const double u_full = unbiased_mmd2_u(phi0[c], phi1[c]);
    cell.lhs = std::sqrt(std::max(0.0, u_full));

    // Standard error of the MMD^2 U-statistic from disjoint chunk replicates,
    // propagated through the square root without linearizing (the delta
    // method degenerates at the null).
    const int chunks = 5;
    std::vector<double> reps;
    const std::size_t c0 = cell.n0 / chunks, c1 = cell.n1 / chunks;
    double se_u = 0;
    if (c0 >= 2 && c1 >= 2) {
      for (int k = 0; k < chunks; ++k) {
        std::vector<double> a(phi0[c].begin() + k * c0, phi0[c].begin() + (k + 1) * c0);
        std::vector<double> b(phi1[c].begin() + k * c1, phi1[c].begin() + (k + 1) * c1);
        reps.push_back(unbiased_mmd2_u(a, b));
      }
      double m = 0;
      for (double v : reps) m += v;
      m /= reps.size();
      double var = 0;
      for (double v : reps) var += (v - m) * (v - m);
      var /= (reps.size() - 1);
      se_u = std::sqrt(var / reps.size());
    }
    cell.lhs_se = (std::sqrt(std::max(0.0, u_full + 3.0 * se_u)) - cell.lhs) / 3.0;
    cell.holds = cell.lhs <= cell.rhs + 3.0 * cell.lhs_se;
    all_hold = all_hold && cell.holds;
    lhs_acc += fam.x_probs[c] * cell.lhs;
    rhs_acc += fam.x_probs[c] * cell.rhs;
    out.cells.push_back(cell);
  }
  out.lhs_avg = lhs_acc;
  out.rhs_avg = rhs_acc;
  out.holds = all_hold;
  return out;
}

std::string Prop2Result::to_json() const {
  nlohmann::json j;
  j["lhs_avg"] = lhs_avg;
  j["rhs_avg"] = rhs_avg;
  j["holds"] = holds;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json cj;
    cj["lhs"] = c.lhs;
    cj["rhs"] = c.rhs;
    cj["lhs_se"] = c.lhs_se;
    cj["kl_mean"] = c.kl_mean;
    cj["n0"] = c.n0;
    cj["n1"] = c.n1;
    cj["holds"] = c.holds;
    arr.push_back(cj);
  }
  j["cells"] = std::move(arr);
  return j.dump(2);
}

}  // namespace pipcfr

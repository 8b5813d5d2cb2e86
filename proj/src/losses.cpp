#include "pipcfr/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pipcfr/errors.hpp"

namespace pipcfr {

std::string to_string(KlSign s) {
  return s == KlSign::AsWritten ? "as_written" : "flipped";
}

KlSign kl_sign_from_string(const std::string& s) {
  if (s == "as_written") return KlSign::AsWritten;
  if (s == "flipped") return KlSign::Flipped;
  throw std::invalid_argument("unknown kl_sign '" + s + "'");
}

double Batch::treated_frac() const {
  double u = 0;
  for (int ti : t) u += ti;
  return u / static_cast<double>(t.size());
}

Batch Batch::from_dataset(const Dataset& ds, const std::vector<std::size_t>& row_ids) {
  if (row_ids.empty()) throw std::invalid_argument("Batch: empty row set");
  Batch b;
  b.rows = row_ids;
  const std::size_t n = row_ids.size();
  std::vector<double> xv(n * ds.x_dim), sv(n * ds.s_dim), yv(n), tm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = row_ids[i];
    std::copy(ds.x_row(r), ds.x_row(r) + ds.x_dim, xv.begin() + i * ds.x_dim);
    if (ds.s_dim > 0) std::copy(ds.s_row(r), ds.s_row(r) + ds.s_dim, sv.begin() + i * ds.s_dim);
    yv[i] = ds.y[r];
    tm[i] = static_cast<double>(ds.t[r]);
    b.t.push_back(ds.t[r]);
    (ds.t[r] == 1 ? b.idx1 : b.idx0).push_back(i);
  }
  b.x = Tensor::from_data(n, ds.x_dim, std::move(xv));
  if (ds.s_dim > 0) b.s = Tensor::from_data(n, ds.s_dim, std::move(sv));
  b.y = Tensor::from_data(n, 1, std::move(yv));
  b.tmask = Tensor::from_data(n, 1, tm);
  for (double& v : tm) v = 1.0 - v;
  b.flipmask = Tensor::from_data(n, 1, std::move(tm));
  return b;
}

std::vector<double> batch_weights(const Batch& batch, bool* fallback) {
  const std::size_t n = batch.size();
  const double u = batch.treated_frac();
  std::vector<double> w(n, 1.0);
  if (u <= 0.0 || u >= 1.0) {
    if (fallback) *fallback = true;
    return w;
  }
  if (fallback) *fallback = false;
  for (std::size_t i = 0; i < n; ++i)
    w[i] = batch.t[i] == 1 ? 1.0 / (2.0 * u) : 1.0 / (2.0 * (1.0 - u));
  return w;
}

namespace {

Tensor observed_prob(const Tensor& p1, const Batch& batch) {
  // p(t_i | .) from the treated-probability column.
  const Tensor on = mul(batch.tmask, p1);
  const Tensor off = mul(batch.flipmask, add_scalar(neg(p1), 1.0));
  return add(on, off);
}

void require_s(const ModelBundle& b, const Batch& batch, const char* who) {
  (void)b;
  if (!batch.s.defined())
    throw std::invalid_argument(std::string(who) + ": batch carries no post-treatment variables");
}

}  // namespace

Tensor loss_p(const ModelBundle& b, const Batch& batch, const LossOptions& opt) {
  require_s(b, batch, "loss_p");
  const Tensor phi = phi_rep(b, batch.s, /*frozen=*/opt.detach);
  const Tensor pg = propensity_g(b, batch.x, false);
  const Tensor pgt = propensity_g_tilde(b, batch.x, phi, false);
  const Tensor ll = add(log(observed_prob(pgt, batch)), log(observed_prob(pg, batch)));
  return neg(mean(ll));
}

Tensor loss_kl(const ModelBundle& b, const Batch& batch, const LossOptions& opt) {
  require_s(b, batch, "loss_kl");
  const Tensor phi = phi_rep(b, batch.s, false);
  // g is a fixed target; g~'s own parameters stay out of the tape so only
  // psi_eta receives gradient.
  const Tensor g1 = propensity_g(b, batch.x, /*frozen=*/opt.detach);
  const Tensor gt1 = propensity_g_tilde(b, batch.x, phi, /*frozen=*/opt.detach);
  const Tensor g0 = add_scalar(neg(g1), 1.0);
  const Tensor gt0 = add_scalar(neg(gt1), 1.0);
  const Tensor core =
      add(mul(g1, sub(log(gt1), log(g1))), mul(g0, sub(log(gt0), log(g0))));
  const double sign = opt.kl_sign == KlSign::AsWritten ? 1.0 : -1.0;
  return scale(mean(core), sign * opt.gamma);
}

LossYResult loss_y(const ModelBundle& b, const Batch& batch, const LossOptions& opt,
                   LossYMode mode) {
  require_s(b, batch, "loss_y");
  QFreeze freeze;
  switch (mode) {
    case LossYMode::EtaUpdate: freeze = {true, false, true}; break;
    case LossYMode::HeadsUpdate: freeze = {false, true, false}; break;
    case LossYMode::Full: freeze = {false, false, false}; break;
  }
  if (!opt.detach) freeze = {false, false, false};

  const Tensor rep = rep_alpha(b, batch.x, freeze.alpha);
  const Tensor phi = phi_rep(b, batch.s, freeze.eta);
  const Tensor z = concat_cols(rep, phi);
  const Tensor pred = blend_heads(b.h0, b.h1, z, batch.tmask, freeze.heads);

  LossYResult res;
  const std::vector<double> w = batch_weights(batch);
  const Tensor wt = Tensor::from_data(batch.size(), 1, w);
  Tensor total = mean(mul(wt, square(sub(pred, batch.y))));
  res.factual = total.value();

  const bool groups_ok = !batch.idx0.empty() && !batch.idx1.empty();
  if (!groups_ok) {
    res.ipm_skipped = true;
  } else if (mode != LossYMode::EtaUpdate) {
    const Tensor rep0 = row_select(rep, batch.idx0);
    const Tensor rep1 = row_select(rep, batch.idx1);
    bool conv = true;
    const Tensor ipm = ipm_op(rep0, rep1, opt.ipm, &conv);
    res.ipm_value = ipm.value();
    res.ipm_converged = conv;
    total = add(total, ipm);
  }
  res.total = total;
  return res;
}

Tensor loss_pip(const ModelBundle& b, const Batch& batch, const LossOptions& opt) {
  require_s(b, batch, "loss_pip");
  // Pseudo-outcomes for the unobserved arm; fully detached by default.
  const QFreeze q_freeze{opt.detach, opt.detach, opt.detach};
  const Tensor q_cf = predict_q_batch(b, batch.x, batch.s, batch.flipmask, q_freeze);

  const Tensor rep = b.f_trunk.forward(batch.x, false);
  const Tensor f_fact = blend_heads(b.f0, b.f1, rep, batch.tmask, false);
  const Tensor f_cf = blend_heads(b.f0, b.f1, rep, batch.flipmask, false);

  const Tensor a = sub(f_fact, batch.y);
  const Tensor bb = sub(f_cf, q_cf);
  // Written-out form: a^2 + b^2 - 2ab (algebraically mean((a-b)^2)).
  return add(add(mean(square(a)), mean(square(bb))), scale(mean(mul(a, bb)), -2.0));
}

FUpdateResult loss_f_update(const ModelBundle& b, const Batch& batch, const LossOptions& opt,
                            bool pure_difference) {
  require_s(b, batch, "loss_f_update");
  const QFreeze q_freeze{opt.detach, opt.detach, opt.detach};
  const Tensor q_cf = predict_q_batch(b, batch.x, batch.s, batch.flipmask, q_freeze);

  const Tensor rep = b.f_trunk.forward(batch.x, false);
  const Tensor f_fact = blend_heads(b.f0, b.f1, rep, batch.tmask, false);
  const Tensor f_cf = blend_heads(b.f0, b.f1, rep, batch.flipmask, false);

  const Tensor a = sub(f_fact, batch.y);
  const Tensor bb = sub(f_cf, q_cf);
  const Tensor sq_a = mean(square(a));
  const Tensor sq_b = mean(square(bb));

  FUpdateResult res;
  double cross = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    cross += a.at(i, 0) * bb.at(i, 0);
  cross /= static_cast<double>(batch.size());
  res.pip_value = sq_a.value() + sq_b.value() - 2.0 * cross;
  res.total = pure_difference
                  ? add(add(sq_a, sq_b), scale(mean(mul(a, bb)), -2.0))
                  : add(sq_a, sq_b);
  return res;
}

LossYResult loss_baseline_f(const ModelBundle& b, const Batch& batch, const LossOptions& opt) {
  const Tensor rep = b.f_trunk.forward(batch.x, false);
  const Tensor pred = blend_heads(b.f0, b.f1, rep, batch.tmask, false);

  LossYResult res;
  Tensor total;
  if (b.method == Method::TARNET) {
    total = mean(square(sub(pred, batch.y)));
    res.factual = total.value();
    res.ipm_skipped = true;  // no IPM in the objective
  } else {
    const std::vector<double> w = batch_weights(batch);
    const Tensor wt = Tensor::from_data(batch.size(), 1, w);
    total = mean(mul(wt, square(sub(pred, batch.y))));
    res.factual = total.value();
    const bool groups_ok = !batch.idx0.empty() && !batch.idx1.empty();
    if (!groups_ok) {
      res.ipm_skipped = true;
    } else {
      const Tensor rep0 = row_select(rep, batch.idx0);
      const Tensor rep1 = row_select(rep, batch.idx1);
      bool conv = true;
      const Tensor ipm = ipm_op(rep0, rep1, opt.ipm, &conv);
      res.ipm_value = ipm.value();
      res.ipm_converged = conv;
      total = add(total, ipm);
    }
  }
  res.total = total;
  return res;
}

// --- diagnostics -----------------------------------------------------------------

Diagnostics diagnostics(const ModelBundle& b, const Dataset& ds, const IpmConfig& ipm_cfg) {
  if (!ds.has_potential)
    throw std::invalid_argument("diagnostics: dataset lacks ground-truth potential outcomes");
  if (ds.x_dim != b.arch.x_dim)
    throw ShapeError("diagnostics: dataset x_dim " + std::to_string(ds.x_dim) +
                     " vs model x_dim " + std::to_string(b.arch.x_dim));
  const std::size_t n = ds.n();
  const bool with_q = ds.s_dim > 0 && ds.s_dim == b.arch.s_dim;

  std::vector<double> f0(n), f1(n), q0(n), q1(n);
  std::vector<double> phi_flat;
  const std::size_t phi_dim = b.arch.phi_hidden;
  if (with_q) phi_flat.resize(n * phi_dim);

  const std::size_t chunk = 2048;
  for (std::size_t beg = 0; beg < n; beg += chunk) {
    const std::size_t len = std::min(chunk, n - beg);
    std::vector<std::size_t> rows(len);
    for (std::size_t i = 0; i < len; ++i) rows[i] = beg + i;
    const Batch batch = Batch::from_dataset(ds, rows);
    const Tensor m0 = Tensor::constant(len, 1, 0.0);
    const Tensor m1 = Tensor::constant(len, 1, 1.0);
    const Tensor out0 = predict_f_batch(b, batch.x, m0, true);
    const Tensor out1 = predict_f_batch(b, batch.x, m1, true);
    for (std::size_t i = 0; i < len; ++i) {
      f0[beg + i] = out0.at(i, 0);
      f1[beg + i] = out1.at(i, 0);
    }
    if (with_q) {
      const Tensor phi = phi_rep(b, batch.s, true);
      const Tensor rep = rep_alpha(b, batch.x, true);
      const Tensor z = concat_cols(rep, phi);
      const Tensor qa = b.h0.forward(z, true);
      const Tensor qb = b.h1.forward(z, true);
      for (std::size_t i = 0; i < len; ++i) {
        q0[beg + i] = qa.at(i, 0);
        q1[beg + i] = qb.at(i, 0);
        for (std::size_t c = 0; c < phi_dim; ++c)
          phi_flat[(beg + i) * phi_dim + c] = phi.at(i, c);
      }
    }
  }

  Diagnostics d;
  double var_ite_sq = 0;
  std::size_t n0 = 0, n1 = 0;
  std::vector<double> phi0, phi1;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = ds.t[i];
    const double yt = t == 1 ? ds.y1_true[i] : ds.y0_true[i];
    const double yc = t == 1 ? ds.y0_true[i] : ds.y1_true[i];
    const double ft = t == 1 ? f1[i] : f0[i];
    const double fc = t == 1 ? f0[i] : f1[i];
    const double r_fact = ft - yt;
    const double r_cf = fc - yc;
    d.eps_F += r_fact * r_fact;
    d.eps_CF += r_cf * r_cf;
    d.cross_factual_cf += r_fact * r_cf;
    const double e_ite = (f1[i] - f0[i]) - ds.tau_true[i];
    d.eps_ITE += e_ite * e_ite;
    var_ite_sq += e_ite * e_ite * e_ite * e_ite;
    if (t == 1) {
      ++n1;
      d.eps_F1 += r_fact * r_fact;
    } else {
      ++n0;
      d.eps_F0 += r_fact * r_fact;
    }
    if (with_q) {
      const double qc = t == 1 ? q0[i] : q1[i];
      const double r_tilde = qc - yc;
      const double r_ddot = fc - qc;
      d.eps_CF_tilde += r_tilde * r_tilde;
      d.eps_CF_ddot += r_ddot * r_ddot;
      d.cross_pip += r_fact * r_ddot;
      if (t == 1) {
        d.Q1 += r_tilde * r_tilde;
        phi1.insert(phi1.end(), phi_flat.begin() + i * phi_dim,
                    phi_flat.begin() + (i + 1) * phi_dim);
      } else {
        d.Q0 += r_tilde * r_tilde;
        phi0.insert(phi0.end(), phi_flat.begin() + i * phi_dim,
                    phi_flat.begin() + (i + 1) * phi_dim);
      }
    }
  }
  const double dn = static_cast<double>(n);
  d.eps_F /= dn;
  d.eps_CF /= dn;
  d.cross_factual_cf /= dn;
  d.eps_ITE /= dn;
  d.eps_CF_tilde /= dn;
  d.eps_CF_ddot /= dn;
  d.cross_pip /= dn;
  d.u0 = static_cast<double>(n0) / dn;
  d.u1 = static_cast<double>(n1) / dn;
  if (n0 > 0) d.eps_F0 /= static_cast<double>(n0);
  if (n1 > 0) d.eps_F1 /= static_cast<double>(n1);
  // Q_t averages the q error over the group observed under t.
  if (n0 > 0) d.Q0 /= static_cast<double>(n0);
  if (n1 > 0) d.Q1 /= static_cast<double>(n1);
  d.eps_PIP = d.eps_F + d.eps_CF_ddot - 2.0 * d.cross_pip;
  d.se_eps_ITE = std::sqrt(std::max(0.0, var_ite_sq / dn - d.eps_ITE * d.eps_ITE) / dn);

  if (with_q && n0 > 0 && n1 > 0) {
    const double mmd2 = mmd_from_samples_conditional(phi0, phi1, phi_dim, ipm_cfg);
    d.ipm_phi = std::sqrt(std::max(0.0, mmd2));
  }
  d.delta_hat = d.eps_CF_tilde > 1e-300 ? std::max(0.0, d.cross_pip / d.eps_CF_tilde) : 0.0;
  d.bound_rhs = d.eps_PIP + d.ipm_phi + (2.0 * d.delta_hat + 1.0) * d.eps_CF_tilde +
                2.0 * (d.u0 * std::sqrt(std::max(0.0, d.eps_F0 * d.Q0)) +
                       d.u1 * std::sqrt(std::max(0.0, d.eps_F1 * d.Q1)));
  d.bound_gap = d.bound_rhs - d.eps_ITE;
  return d;
}

std::string Diagnostics::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"eps_F\":" << eps_F << ",\"eps_CF\":" << eps_CF
     << ",\"eps_CF_tilde\":" << eps_CF_tilde << ",\"eps_CF_ddot\":" << eps_CF_ddot
     << ",\"eps_ITE\":" << eps_ITE << ",\"eps_PIP\":" << eps_PIP
     << ",\"ipm_phi\":" << ipm_phi << ",\"Q0\":" << Q0 << ",\"Q1\":" << Q1
     << ",\"bound_gap\":" << bound_gap << "}";
  return os.str();
}

}  // namespace pipcfr

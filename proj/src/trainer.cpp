#include "pipcfr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "pipcfr/adam.hpp"
#include "pipcfr/errors.hpp"
#include "pipcfr/rng.hpp"

namespace pipcfr {

namespace {

std::string batch_snapshot_json(const char* loss_name, double value, int epoch,
                                std::size_t batch_index, const Batch& batch) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"loss\":\"" << loss_name << "\",\"value\":" << value << ",\"epoch\":" << epoch
     << ",\"batch_index\":" << batch_index << ",\"batch_size\":" << batch.size()
     << ",\"n_treated\":" << batch.idx1.size() << ",\"rows\":[";
  for (std::size_t i = 0; i < batch.rows.size(); ++i)
    os << (i ? "," : "") << batch.rows[i];
  os << "]}";
  return os.str();
}

void check_finite(const char* loss_name, double value, int epoch, std::size_t batch_index,
                  const Batch& batch) {
  if (!std::isfinite(value))
    throw NumericalAbort(std::string("training aborted: ") + loss_name + " = " +
                             std::to_string(value) + " at epoch " + std::to_string(epoch),
                         batch_snapshot_json(loss_name, value, epoch, batch_index, batch));
}

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.push_back(p.data());
  return out;
}

bool params_equal(const std::vector<Tensor>& params,
                  const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& d = params[i].data();
    if (d.size() != snap[i].size()) return false;
    if (std::memcmp(d.data(), snap[i].data(), d.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

IpmConfig resolve_ipm(const TrainConfig& cfg) {
  IpmConfig ipm = cfg.ipm;
  ipm.kind = method_ipm_is_wass(cfg.method) ? IpmKind::WASS : IpmKind::MMD;
  return ipm;
}

double validation_factual_mse(const ModelBundle& b, const Dataset& ds) {
  const std::size_t n = ds.n();
  double acc = 0;
  const std::size_t chunk = 4096;
  for (std::size_t beg = 0; beg < n; beg += chunk) {
    const std::size_t len = std::min(chunk, n - beg);
    std::vector<std::size_t> rows(len);
    for (std::size_t i = 0; i < len; ++i) rows[i] = beg + i;
    const Batch batch = Batch::from_dataset(ds, rows);
    const Tensor pred = predict_f_batch(b, batch.x, batch.tmask, /*frozen=*/true);
    for (std::size_t i = 0; i < len; ++i) {
      const double r = pred.at(i, 0) - batch.y.at(i, 0);
      acc += r * r;
    }
  }
  return acc / static_cast<double>(n);
}

namespace {

// mean((a-b)^2) and mean(a^2 + b^2) over a held-out set, one pass.
std::pair<double, double> validation_f_objectives(const ModelBundle& b, const Dataset& ds) {
  const std::size_t n = ds.n();
  double acc_diff = 0, acc_anchor = 0;
  const std::size_t chunk = 4096;
  const QFreeze frozen{true, true, true};
  for (std::size_t beg = 0; beg < n; beg += chunk) {
    const std::size_t len = std::min(chunk, n - beg);
    std::vector<std::size_t> rows(len);
    for (std::size_t i = 0; i < len; ++i) rows[i] = beg + i;
    const Batch batch = Batch::from_dataset(ds, rows);
    const Tensor f_fact = predict_f_batch(b, batch.x, batch.tmask, true);
    const Tensor f_cf = predict_f_batch(b, batch.x, batch.flipmask, true);
    const Tensor q_cf = predict_q_batch(b, batch.x, batch.s, batch.flipmask, frozen);
    for (std::size_t i = 0; i < len; ++i) {
      const double a = f_fact.at(i, 0) - batch.y.at(i, 0);
      const double bb = f_cf.at(i, 0) - q_cf.at(i, 0);
      acc_diff += (a - bb) * (a - bb);
      acc_anchor += a * a + bb * bb;
    }
  }
  return {acc_diff / static_cast<double>(n), acc_anchor / static_cast<double>(n)};
}

}  // namespace

double validation_pip_loss(const ModelBundle& b, const Dataset& ds) {
  return validation_f_objectives(b, ds).first;
}

TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const Scaler& scaler,
                  const TrainConfig& cfg) {
  const std::size_t n = train_ds.n();
  if (n == 0) throw std::invalid_argument("train: empty training set");
  if (cfg.batch_size == 0 || cfg.batch_size > n)
    throw std::invalid_argument("train: batch_size " + std::to_string(cfg.batch_size) +
                                " must be in [1, " + std::to_string(n) + "]");
  const bool pip = method_is_pipcfr(cfg.method);
  if (pip && train_ds.s_dim == 0)
    throw std::invalid_argument("train: " + to_string(cfg.method) +
                                " requires post-treatment variables in the dataset");

  ArchSpec arch = cfg.arch;
  arch.x_dim = train_ds.x_dim;
  arch.s_dim = train_ds.s_dim;
  arch.activation = cfg.activation;

  Rng root(cfg.seed);
  Rng init_rng = root.substream("init");
  Rng batch_rng = root.substream("batch");

  ModelBundle bundle = ModelBundle::init(cfg.method, arch, init_rng);
  bundle.scaler = scaler;

  LossOptions opt;
  opt.gamma = cfg.gamma;
  opt.kl_sign = cfg.kl_sign;
  opt.ipm = resolve_ipm(cfg);
  opt.detach = !cfg.joint_ablation;

  auto make_adam = [&](const std::vector<Tensor>& params) {
    AdamState st;
    st.learning_rate = cfg.lr;
    st.decay_rate = cfg.lr_decay;
    st.init(params);
    return st;
  };
  std::vector<Tensor> p_prop = bundle.params_propensity();
  std::vector<Tensor> p_eta = bundle.params_eta();
  std::vector<Tensor> p_heads = bundle.params_heads();
  std::vector<Tensor> p_f = bundle.params_f();
  AdamState st_prop = make_adam(p_prop);
  AdamState st_eta = make_adam(p_eta);
  AdamState st_heads = make_adam(p_heads);
  AdamState st_f = make_adam(p_f);

  TrainTrace trace;
  trace.best_val_sel = std::numeric_limits<double>::infinity();
  ModelBundle best = bundle.clone();
  int since_improve = 0;
  long batch_counter = 0;

  struct StepAccum {
    double p = 0, kl = 0, y = 0, pipv = 0;
    int count = 0, ipm_skipped = 0;
  };

  // One update kind on one batch. `which`: 0=L_p, 1=L_KL+L_y, 2=L_y, 3=L_pip
  // for PIPCFR; baselines only use which=2 on their own loss.
  auto run_step = [&](int which, const Batch& batch, int epoch, std::size_t bi,
                      StepAccum& acc) {
    const bool routing_check =
        cfg.debug_routing_every > 0 && (batch_counter % cfg.debug_routing_every == 0);
    std::vector<std::vector<double>> snap_prop, snap_eta, snap_heads, snap_f;
    if (routing_check) {
      snap_prop = snapshot_params(p_prop);
      snap_eta = snapshot_params(p_eta);
      snap_heads = snapshot_params(p_heads);
      snap_f = snapshot_params(p_f);
    }
    bundle.zero_all_grads();
    if (!pip) {
      LossYResult r = loss_baseline_f(bundle, batch, opt);
      check_finite("loss_f", r.total.value(), epoch, bi, batch);
      r.total.backward();
      adam_step(p_f, st_f);
      acc.y += r.total.value();
      if (r.ipm_skipped && cfg.method != Method::TARNET) ++acc.ipm_skipped;
      if (!r.ipm_converged) ++trace.ipm_nonconverged_total;
      if (routing_check &&
          (!params_equal(p_prop, snap_prop) || !params_equal(p_eta, snap_eta) ||
           !params_equal(p_heads, snap_heads)))
        throw std::logic_error("gradient routing violated: baseline step touched q-path");
      return;
    }
    switch (which) {
      case 0: {
        Tensor lp = loss_p(bundle, batch, opt);
        check_finite("loss_p", lp.value(), epoch, bi, batch);
        lp.backward();
        adam_step(p_prop, st_prop);
        acc.p += lp.value();
        if (routing_check &&
            (!params_equal(p_eta, snap_eta) || !params_equal(p_heads, snap_heads) ||
             !params_equal(p_f, snap_f)))
          throw std::logic_error("gradient routing violated: L_p step leaked");
        break;
      }
      case 1: {
        Tensor lkl = loss_kl(bundle, batch, opt);
        LossYResult ry = loss_y(bundle, batch, opt, LossYMode::EtaUpdate);
        check_finite("loss_kl", lkl.value(), epoch, bi, batch);
        check_finite("loss_y", ry.total.value(), epoch, bi, batch);
        Tensor total = add(lkl, ry.total);
        total.backward();
        adam_step(p_eta, st_eta);
        acc.kl += lkl.value();
        if (routing_check &&
            (!params_equal(p_prop, snap_prop) || !params_equal(p_heads, snap_heads) ||
             !params_equal(p_f, snap_f)))
          throw std::logic_error("gradient routing violated: psi_eta step leaked");
        break;
      }
      case 2: {
        LossYResult ry = loss_y(bundle, batch, opt, LossYMode::HeadsUpdate);
        check_finite("loss_y", ry.total.value(), epoch, bi, batch);
        ry.total.backward();
        adam_step(p_heads, st_heads);
        acc.y += ry.total.value();
        if (ry.ipm_skipped) ++acc.ipm_skipped;
        if (!ry.ipm_converged) ++trace.ipm_nonconverged_total;
        if (routing_check &&
            (!params_equal(p_prop, snap_prop) || !params_equal(p_eta, snap_eta) ||
             !params_equal(p_f, snap_f)))
          throw std::logic_error("gradient routing violated: (h, psi_alpha) step leaked");
        break;
      }
      case 3: {
        FUpdateResult lf = loss_f_update(bundle, batch, opt, cfg.f_loss_pure_difference);
        check_finite("loss_pip", lf.total.value(), epoch, bi, batch);
        lf.total.backward();
        adam_step(p_f, st_f);
        acc.pipv += lf.pip_value;
        if (routing_check &&
            (!params_equal(p_prop, snap_prop) || !params_equal(p_eta, snap_eta) ||
             !params_equal(p_heads, snap_heads)))
          throw std::logic_error("gradient routing violated: f step leaked");
        break;
      }
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    st_prop.epoch = st_eta.epoch = st_heads.epoch = st_f.epoch = epoch;

    const std::vector<std::size_t> perm = batch_rng.permutation(n);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t beg = 0; beg < n; beg += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - beg);
      batches.emplace_back(perm.begin() + beg, perm.begin() + beg + len);
    }

    StepAccum acc;
    if (!pip || !cfg.epoch_level_alternation) {
      for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const Batch batch = Batch::from_dataset(train_ds, batches[bi]);
        bool single_group_fallback = batch.idx0.empty() || batch.idx1.empty();
        if (single_group_fallback) ++trace.weight_fallback_total;
        if (pip) {
          for (int which = 0; which < 4; ++which) run_step(which, batch, epoch, bi, acc);
        } else {
          run_step(2, batch, epoch, bi, acc);
        }
        ++acc.count;
        ++batch_counter;
      }
    } else {
      for (int which = 0; which < 4; ++which)
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
          const Batch batch = Batch::from_dataset(train_ds, batches[bi]);
          run_step(which, batch, epoch, bi, acc);
          if (which == 0) ++acc.count;
          ++batch_counter;
        }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double denom = acc.count > 0 ? acc.count : 1;
    rec.loss_p = acc.p / denom;
    rec.loss_kl = acc.kl / denom;
    rec.loss_y = acc.y / denom;
    rec.loss_pip = acc.pipv / denom;
    rec.ipm_skipped = acc.ipm_skipped;
    trace.ipm_skipped_total += acc.ipm_skipped;
    rec.val_mse = validation_factual_mse(bundle, val_ds);
    SelectionMetric sel = cfg.selection;
    if (sel == SelectionMetric::Auto)
      sel = pip ? SelectionMetric::PseudoObjective : SelectionMetric::FactualMse;
    switch (sel) {
      case SelectionMetric::FactualMse:
        rec.val_sel = rec.val_mse;
        break;
      case SelectionMetric::PseudoObjective: {
        const auto [diff_obj, anchor_obj] = validation_f_objectives(bundle, val_ds);
        rec.val_sel = cfg.f_loss_pure_difference ? diff_obj : anchor_obj;
        break;
      }
      case SelectionMetric::LastEpoch:
        rec.val_sel = -static_cast<double>(epoch);  // strictly improving
        break;
      case SelectionMetric::Auto:
        break;  // resolved above
    }
    rec.wall_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.epochs.push_back(rec);

    if (rec.val_sel < trace.best_val_sel) {
      trace.best_val_sel = rec.val_sel;
      trace.best_epoch = epoch;
      best = bundle.clone();
      since_improve = 0;
    } else {
      ++since_improve;
      if (cfg.early_stop_patience > 0 && since_improve >= cfg.early_stop_patience) break;
    }
  }

  best.scaler = scaler;
  return {std::move(best), std::move(trace)};
}

void TrainTrace::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("trace: cannot write " + path);
  f << "epoch,loss_p,loss_kl,loss_y,loss_pip,val_mse,val_sel,wall_sec,ipm_skipped\n";
  f.precision(17);
  for (const EpochRecord& r : epochs)
    f << r.epoch << "," << r.loss_p << "," << r.loss_kl << "," << r.loss_y << ","
      << r.loss_pip << "," << r.val_mse << "," << r.val_sel << "," << r.wall_sec << ","
      << r.ipm_skipped << "\n";
}

}  // namespace pipcfr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pipcfr/dataset.hpp"
#include "pipcfr/losses.hpp"
#include "pipcfr/nets.hpp"

namespace pipcfr {

// What the early-stopping / best-bundle tracker watches.
enum class SelectionMetric {
  Auto,             // factual MSE for baselines, the f objective for PIPCFR
  FactualMse,       // validation factual MSE of f
  PseudoObjective,  // validation factual + imputed-counterfactual fit
  LastEpoch,        // no selection; return the final epoch
};

struct TrainConfig {
  Method method = Method::PIPCFR_WASS;
  int epochs = 300;
  std::size_t batch_size = 250;
  double lr = 1e-3;
  double lr_decay = 0.95;  // per-epoch multiplier: lr_epoch = lr * decay^epoch
  double gamma = 1.0;
  IpmConfig ipm;  // kind is aligned with the method unless explicitly pinned
  std::uint64_t seed = 0;
  int early_stop_patience = 30;  // 0 disables early stopping
  KlSign kl_sign = KlSign::AsWritten;
  std::string checkpoint_path;

  bool joint_ablation = false;           // drop every stop-gradient
  bool epoch_level_alternation = false;  // one update kind per pass instead of per batch
  // f update: anchored factual + imputed-counterfactual fit (default) or the
  // written-out difference-only loss (see loss_f_update).
  bool f_loss_pure_difference = false;
  SelectionMetric selection = SelectionMetric::Auto;
  Activation activation = Activation::Relu;
  ArchSpec arch;  // x_dim/s_dim filled from the data when zero

  // > 0: every N batches, assert that each update step left every parameter
  // outside its designated set bit-unchanged.
  int debug_routing_every = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss_p = 0, loss_kl = 0, loss_y = 0, loss_pip = 0;
  double val_mse = 0;  // validation factual MSE of f, always recorded
  double val_sel = 0;  // model-selection metric (see train())
  double wall_sec = 0;
  int ipm_skipped = 0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_sel = 0;
  long ipm_skipped_total = 0;
  long ipm_nonconverged_total = 0;
  long weight_fallback_total = 0;

  void write_csv(const std::string& path) const;
};

struct TrainResult {
  ModelBundle bundle;
  TrainTrace trace;
};

// Alternating minibatch training. For PIPCFR methods each batch runs, in
// order: (1) Adam on (g, g~) for L_p; (2) Adam on psi_eta for L_KL + L_y;
// (3) Adam on (h, psi_alpha) for L_y; (4) Adam on f for L_pip. Baselines
// train f's trunk and heads only.
//
// Model selection / early stopping track a validation metric of the deployed
// predictor's own objective: factual MSE for TARNET/CFRNET, held-out L_pip
// for PIPCFR. The pseudo-outcome matching loss constrains only the head
// difference f(x,t) - f(x,1-t), so factual MSE carries no signal about f
// under PIPCFR. The best-metric bundle is returned; factual MSE is still
// recorded per epoch.
//
// Inputs are expected in standardized units with `scaler` being the fit used;
// the scaler is embedded in the returned bundle so downstream evaluation can
// report original-unit metrics.
TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const Scaler& scaler,
                  const TrainConfig& cfg);

// Resolves cfg.ipm.kind from the method (MMD vs WASS variants).
IpmConfig resolve_ipm(const TrainConfig& cfg);

double validation_factual_mse(const ModelBundle& b, const Dataset& ds);
// Held-out mean((a - b)^2) with everything frozen.
double validation_pip_loss(const ModelBundle& b, const Dataset& ds);

}  // namespace pipcfr

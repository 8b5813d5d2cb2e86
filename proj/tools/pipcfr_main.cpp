// Batch command-line front end: generate / train / eval / sweep / oracle /
// report. Every run writes a resolved-config snapshot next to its outputs so
// any artifact can be reproduced exactly.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "pipcfr/dataset.hpp"
#include "pipcfr/errors.hpp"
#include "pipcfr/eval.hpp"
#include "pipcfr/generators.hpp"
#include "pipcfr/kvconfig.hpp"
#include "pipcfr/losses.hpp"
#include "pipcfr/serialize.hpp"
#include "pipcfr/sweep.hpp"
#include "pipcfr/trainer.hpp"

namespace fs = std::filesystem;
using namespace pipcfr;

namespace {

std::string default_out_root() {
  const char* env = std::getenv("PIPCFR_OUT");
  return env && *env ? env : "out";
}

std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Generator configs from a flat key-value view.
Example1Config example1_from(const KvConfig& c) {
  Example1Config g;
  g.sigma_x = c.get_double("example1.sigma_x", g.sigma_x);
  g.sigma_t = c.get_double("example1.sigma_t", g.sigma_t);
  g.sigma_u = c.get_double("example1.sigma_u", g.sigma_u);
  g.alpha1 = c.get_double("example1.alpha1", g.alpha1);
  g.alpha2 = c.get_double("example1.alpha2", g.alpha2);
  g.n = static_cast<std::size_t>(c.get_int("data.n", 1000));
  g.seed = c.get_u64("data.seed", 0);
  return g;
}

SequentialConfig sequential_from(const KvConfig& c) {
  SequentialConfig g;
  g.n_units = static_cast<std::size_t>(c.get_int("data.n", 747));
  g.x_dim = static_cast<std::size_t>(c.get_int("sequential.x_dim", g.x_dim));
  g.m = static_cast<std::size_t>(c.get_int("sequential.m", g.m));
  g.K = static_cast<std::size_t>(c.get_int("data.K", g.K));
  g.C1 = c.get_double("sequential.C1", g.C1);
  g.laplace_scale = c.get_double("sequential.laplace_scale", g.laplace_scale);
  g.seed = c.get_u64("data.seed", 0);
  return g;
}

ARConfig ar_from(const KvConfig& c) {
  ARConfig g;
  g.n_units = static_cast<std::size_t>(c.get_int("data.n", 5000));
  g.m = static_cast<std::size_t>(c.get_int("ar.m", g.m));
  g.K = static_cast<std::size_t>(c.get_int("data.K", g.K));
  g.C2 = c.get_double("ar.C2", g.C2);
  g.laplace_scale = c.get_double("ar.laplace_scale", g.laplace_scale);
  g.seed = c.get_u64("data.seed", 0);
  return g;
}

TemporalConfig temporal_from(const KvConfig& c) {
  TemporalConfig g;
  g.n_samples = static_cast<std::size_t>(c.get_int("data.n", 10000));
  g.feat_dim = static_cast<std::size_t>(c.get_int("temporal.feat_dim", g.feat_dim));
  g.K = static_cast<std::size_t>(c.get_int("data.K", g.K));
  g.gamma_y = c.get_double("temporal.gamma_y", g.gamma_y);
  g.alpha_window = c.get_double("temporal.alpha_window", g.alpha_window);
  g.C = c.get_double("temporal.C", g.C);
  g.eps_x = c.get_double("temporal.eps_x", g.eps_x);
  g.eps_t = c.get_double("temporal.eps_t", g.eps_t);
  g.eps_v = c.get_double("temporal.eps_v", g.eps_v);
  g.eps_m = c.get_double("temporal.eps_m", g.eps_m);
  g.eps_a = c.get_double("temporal.eps_a", g.eps_a);
  g.eps_u = c.get_double("temporal.eps_u", g.eps_u);
  g.beta_t_out = c.get_double("temporal.beta_t_out", g.beta_t_out);
  g.seed = c.get_u64("data.seed", 0);
  return g;
}

SplitSpec split_from(const KvConfig& c) {
  SplitSpec s;
  s.train_frac = c.get_double("split.train_frac", s.train_frac);
  s.val_frac = c.get_double("split.val_frac", s.val_frac);
  s.test_frac = c.get_double("split.test_frac", s.test_frac);
  s.seed = c.get_u64("split.seed", c.get_u64("data.seed", 0));
  return s;
}

TrainConfig train_from(const KvConfig& c) {
  TrainConfig t;
  t.method = method_from_string(c.get_str("train.method", "PIPCFR_WASS"));
  t.epochs = static_cast<int>(c.get_int("train.epochs", t.epochs));
  t.batch_size = static_cast<std::size_t>(c.get_int("train.batch_size", 250));
  t.lr = c.get_double("train.lr", t.lr);
  t.lr_decay = c.get_double("train.lr_decay", t.lr_decay);
  t.gamma = c.get_double("train.gamma", t.gamma);
  t.seed = c.get_u64("train.seed", 0);
  t.early_stop_patience = static_cast<int>(c.get_int("train.patience", t.early_stop_patience));
  t.kl_sign = kl_sign_from_string(c.get_str("train.kl_sign", "as_written"));
  t.joint_ablation = c.get_bool("train.joint_ablation", false);
  t.epoch_level_alternation = c.get_bool("train.epoch_level_alternation", false);
  t.activation = activation_from_string(c.get_str("train.activation", "relu"));
  t.ipm.rbf_bandwidth = c.get_double("ipm.rbf_bandwidth", 0.0);
  t.ipm.mmd_unbiased = c.get_bool("ipm.mmd_unbiased", false);
  t.ipm.sinkhorn_epsilon = c.get_double("ipm.sinkhorn_epsilon", t.ipm.sinkhorn_epsilon);
  t.ipm.sinkhorn_iters = static_cast<int>(c.get_int("ipm.sinkhorn_iters", t.ipm.sinkhorn_iters));
  t.ipm.sinkhorn_tol = c.get_double("ipm.sinkhorn_tol", t.ipm.sinkhorn_tol);
  t.arch.rep_hidden = static_cast<std::size_t>(c.get_int("arch.rep_hidden", 64));
  t.arch.rep_layers = static_cast<std::size_t>(c.get_int("arch.rep_layers", 3));
  t.arch.head_hidden = static_cast<std::size_t>(c.get_int("arch.head_hidden", 64));
  t.arch.head_layers = static_cast<std::size_t>(c.get_int("arch.head_layers", 4));
  t.arch.phi_hidden = static_cast<std::size_t>(c.get_int("arch.phi_hidden", 128));
  t.arch.phi_layers = static_cast<std::size_t>(c.get_int("arch.phi_layers", 3));
  t.arch.prop_hidden = static_cast<std::size_t>(c.get_int("arch.prop_hidden", 64));
  t.arch.prop_layers = static_cast<std::size_t>(c.get_int("arch.prop_layers", 4));
  return t;
}

Dataset generate_dataset(const KvConfig& cfg) {
  const GenKind kind = gen_kind_from_string(cfg.get_str("data.kind", "temporal"));
  switch (kind) {
    case GenKind::Example1: return gen_example1(example1_from(cfg));
    case GenKind::Sequential: return gen_sequential(sequential_from(cfg));
    case GenKind::AR: return gen_ar(ar_from(cfg));
    case GenKind::Temporal: return gen_temporal(temporal_from(cfg));
  }
  throw std::logic_error("unreachable");
}

int cmd_generate(const KvConfig& cfg) {
  const std::string out = cfg.get_str("out.dir", default_out_root() + "/generate");
  fs::create_directories(out);
  Dataset full = generate_dataset(cfg);
  const SplitDatasets parts = split(full, split_from(cfg));

  write_csv(parts.train, out + "/train.csv");
  write_csv(parts.val, out + "/val.csv");
  write_csv(parts.test, out + "/test.csv");
  cfg.save(out + "/resolved.cfg");

  double tau_mean = 0, tau_min = 0, tau_max = 0;
  if (full.has_potential && full.n() > 0) {
    tau_min = tau_max = full.tau_true[0];
    for (double v : full.tau_true) {
      tau_mean += v;
      tau_min = std::min(tau_min, v);
      tau_max = std::max(tau_max, v);
    }
    tau_mean /= static_cast<double>(full.n());
  }
  nlohmann::json meta;
  meta["kind"] = cfg.get_str("data.kind", "temporal");
  meta["seed"] = cfg.get_u64("data.seed", 0);
  meta["config_hash"] = fnv1a_hash(cfg.serialize());
  meta["rows"] = {{"train", parts.train.n()}, {"val", parts.val.n()}, {"test", parts.test.n()}};
  meta["tau_summary"] = {{"mean", tau_mean}, {"min", tau_min}, {"max", tau_max}};
  meta["created_at"] = iso_now();  // the only non-deterministic field
  std::ofstream mf(out + "/metadata.json", std::ios::binary);
  mf << meta.dump(2);
  std::cout << "wrote " << out << "/{train,val,test}.csv (" << parts.train.n() << "/"
            << parts.val.n() << "/" << parts.test.n() << " rows)\n";
  return 0;
}

int cmd_train(const KvConfig& cfg) {
  const std::string train_path = cfg.get_str("train.data", "");
  const std::string val_path = cfg.get_str("train.val_data", "");
  if (train_path.empty() || val_path.empty())
    throw std::invalid_argument("train: --train-data and --val-data are required");
  const std::string out = cfg.get_str("out.dir", default_out_root() + "/train");
  fs::create_directories(out);

  Dataset train_ds = load_csv(train_path);
  Dataset val_ds = load_csv(val_path);
  const Scaler scaler = standardize(train_ds, {&val_ds});

  const TrainConfig tc = train_from(cfg);
  const TrainResult res = train(train_ds, val_ds, scaler, tc);

  save_bundle(res.bundle, out + "/checkpoint.json");
  res.trace.write_csv(out + "/trace.csv");
  cfg.save(out + "/resolved.cfg");
  std::cout << "best epoch " << res.trace.best_epoch << ", validation metric "
            << res.trace.best_val_sel << "\nwrote " << out << "/checkpoint.json\n";
  return 0;
}

int cmd_eval(const KvConfig& cfg) {
  const std::string ck = cfg.get_str("eval.checkpoint", "");
  const std::string test_path = cfg.get_str("eval.test_data", "");
  if (ck.empty() || test_path.empty())
    throw std::invalid_argument("eval: --checkpoint and --test-data are required");
  const std::string out = cfg.get_str("out.dir", default_out_root() + "/eval");
  fs::create_directories(out);

  const ModelBundle bundle = load_bundle(ck);
  const Dataset test_ds = load_csv(test_path);

  MetricsReport m;
  m.method = to_string(bundle.method);
  m.config_fingerprint = std::to_string(fnv1a_hash(cfg.serialize()));
  m.pehe_out = pehe(bundle, test_ds);
  const auto [cfm, cfv] = counterfactual_variance(bundle, test_ds);
  m.cf_error_mean = cfm;
  m.cf_error_var = cfv;
  const std::string train_path = cfg.get_str("eval.train_data", "");
  if (!train_path.empty()) m.pehe_in = pehe(bundle, load_csv(train_path));

  std::ofstream mf(out + "/metrics.json", std::ios::binary);
  mf << m.to_json();
  if (cfg.get_bool("eval.diagnostics", false)) {
    Dataset std_test = test_ds;
    bundle.scaler.transform(std_test);
    const Diagnostics d = diagnostics(bundle, std_test);
    std::ofstream df(out + "/diagnostics.json", std::ios::binary);
    df << d.to_json();
  }
  std::cout << m.to_json() << "\n";
  return 0;
}

int cmd_sweep(const KvConfig& cfg) {
  SweepSpec spec;
  spec.kind = gen_kind_from_string(cfg.get_str("data.kind", "temporal"));
  spec.example1 = example1_from(cfg);
  spec.sequential = sequential_from(cfg);
  spec.ar = ar_from(cfg);
  spec.temporal = temporal_from(cfg);
  spec.split = split_from(cfg);
  spec.train_base = train_from(cfg);
  spec.methods.clear();
  for (const std::string& m : parse_str_list(cfg.get_str("sweep.methods", "PIPCFR_WASS")))
    spec.methods.push_back(method_from_string(m));
  spec.noise_grid = parse_double_list(cfg.get_str("sweep.noise", ""));
  for (double k : parse_double_list(cfg.get_str("sweep.K", "")))
    spec.k_grid.push_back(static_cast<long>(k));
  spec.gamma_grid = parse_double_list(cfg.get_str("sweep.gamma", ""));
  spec.kl_signs.clear();
  for (const std::string& s : parse_str_list(cfg.get_str("sweep.kl_signs", "as_written")))
    spec.kl_signs.push_back(kl_sign_from_string(s));
  spec.seeds = parse_u64_list(cfg.get_str("sweep.seeds", "0"));
  spec.out_dir = cfg.get_str("out.dir", default_out_root() + "/sweep");
  spec.workers = static_cast<int>(cfg.get_int("sweep.workers", 1));
  fs::create_directories(spec.out_dir);
  cfg.save(spec.out_dir + "/resolved.cfg");
  const std::string agg = run_sweep(spec);
  std::cout << "wrote " << agg << "\n";
  return 0;
}

int cmd_oracle(const KvConfig& cfg) {
  Example1Config g = example1_from(cfg);
  const auto n_mc = static_cast<std::size_t>(cfg.get_int("oracle.n_mc", 1000000));
  const OracleResult r = example1_oracle(g, n_mc);
  const std::string out = cfg.get_str("out.dir", default_out_root() + "/oracle");
  fs::create_directories(out);
  cfg.save(out + "/resolved.cfg");
  std::ofstream f(out + "/oracle.json", std::ios::binary);
  f << r.to_json();
  std::cout << r.to_json() << "\n";
  return 0;
}

struct GroupStats {
  std::vector<double> pehe_in, pehe_out;
};

int cmd_report(const KvConfig& cfg) {
  const std::string dir = cfg.get_str("report.dir", "");
  if (dir.empty()) throw std::invalid_argument("report: --dir is required");

  std::map<std::string, GroupStats> groups;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& p : files) {
    std::ifstream f(p, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (...) {
      continue;
    }
    if (j.value("status", "") != "ok") continue;
    std::ostringstream key;
    key << j.value("method", "?") << "\tnoise=" << j.value("noise", -1.0)
        << "\tK=" << j.value("K", -1L) << "\tgamma=" << j.value("gamma", -1.0) << "\t"
        << j.value("kl_sign", "?");
    const auto& m = j.at("metrics");
    groups[key.str()].pehe_in.push_back(m.value("pehe_in", -1.0));
    groups[key.str()].pehe_out.push_back(m.value("pehe_out", -1.0));
  }

  auto cell = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
    const double sem = sd / std::sqrt(static_cast<double>(v.size()));
    char buf[64];
    // std across runs first, std of the mean in parentheses
    std::snprintf(buf, sizeof buf, "%.2f +- %.2f (%.2f)", mean, sd, sem);
    return std::string(buf);
  };

  std::ostringstream table;
  table << "group\tseeds\tpehe_in\tpehe_out\n";
  for (const auto& [key, st] : groups)
    table << key << "\t" << st.pehe_out.size() << "\t" << cell(st.pehe_in) << "\t"
          << cell(st.pehe_out) << "\n";
  std::cout << table.str();
  const std::string out_file = cfg.get_str("report.out", "");
  if (!out_file.empty()) {
    std::ofstream f(out_file, std::ios::binary);
    f << table.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"counterfactual regression toolkit (PIPCFR and baselines)"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key = value config file");

  // Flag storage; only flags the user actually passes override the file.
  std::map<std::string, std::string> overrides;
  auto add_kv = [&overrides](CLI::App* sub, const std::string& flag, const std::string& key,
                             const std::string& help) {
    auto* opt = sub->add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
    opt->expected(1);
    return opt;
  };

  auto* g = app.add_subcommand("generate", "draw a synthetic dataset and write CSV splits");
  add_kv(g, "--kind", "data.kind", "example1|sequential|ar|temporal");
  add_kv(g, "--n", "data.n", "number of units");
  add_kv(g, "--seed", "data.seed", "root seed");
  add_kv(g, "--K", "data.K", "sequence length");
  add_kv(g, "--feat-dim", "temporal.feat_dim", "temporal covariate dim N");
  add_kv(g, "--eps-u", "temporal.eps_u", "temporal outcome noise scale");
  add_kv(g, "--alpha-window", "temporal.alpha_window", "temporal window fraction");
  add_kv(g, "--sigma-x", "example1.sigma_x", "example1 covariate scale");
  add_kv(g, "--sigma-t", "example1.sigma_t", "example1 assignment noise scale");
  add_kv(g, "--sigma-u", "example1.sigma_u", "example1 exogenous noise scale");
  add_kv(g, "--alpha1", "example1.alpha1", "example1 effect on S");
  add_kv(g, "--alpha2", "example1.alpha2", "example1 direct effect on Y");
  add_kv(g, "--laplace-scale", "sequential.laplace_scale", "sequential noise scale");
  add_kv(g, "--train-frac", "split.train_frac", "");
  add_kv(g, "--val-frac", "split.val_frac", "");
  add_kv(g, "--test-frac", "split.test_frac", "");
  add_kv(g, "--out", "out.dir", "output directory");

  auto* t = app.add_subcommand("train", "train a model from CSV splits");
  add_kv(t, "--train-data", "train.data", "training CSV");
  add_kv(t, "--val-data", "train.val_data", "validation CSV");
  add_kv(t, "--method", "train.method",
         "TARNET|CFRNET_MMD|CFRNET_WASS|PIPCFR_MMD|PIPCFR_WASS");
  add_kv(t, "--epochs", "train.epochs", "");
  add_kv(t, "--batch-size", "train.batch_size", "");
  add_kv(t, "--lr", "train.lr", "");
  add_kv(t, "--lr-decay", "train.lr_decay", "");
  add_kv(t, "--gamma", "train.gamma", "KL weight");
  add_kv(t, "--seed", "train.seed", "");
  add_kv(t, "--patience", "train.patience", "early stop patience (0 disables)");
  add_kv(t, "--kl-sign", "train.kl_sign", "as_written|flipped");
  add_kv(t, "--activation", "train.activation", "relu|elu");
  add_kv(t, "--sinkhorn-iters", "ipm.sinkhorn_iters", "");
  add_kv(t, "--sinkhorn-epsilon", "ipm.sinkhorn_epsilon", "");
  add_kv(t, "--out", "out.dir", "output directory");

  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on CSV data");
  add_kv(e, "--checkpoint", "eval.checkpoint", "checkpoint JSON");
  add_kv(e, "--test-data", "eval.test_data", "test CSV");
  add_kv(e, "--train-data", "eval.train_data", "optional training CSV for PEHE (in)");
  add_kv(e, "--diagnostics", "eval.diagnostics", "true to emit diagnostics JSON");
  add_kv(e, "--out", "out.dir", "output directory");

  auto* s = app.add_subcommand("sweep", "grid of generate->train->eval cells");
  add_kv(s, "--kind", "data.kind", "");
  add_kv(s, "--n", "data.n", "");
  add_kv(s, "--K", "data.K", "base sequence length");
  add_kv(s, "--feat-dim", "temporal.feat_dim", "");
  add_kv(s, "--methods", "sweep.methods", "comma list");
  add_kv(s, "--noise", "sweep.noise", "comma list of noise scales");
  add_kv(s, "--K-grid", "sweep.K", "comma list of K values");
  add_kv(s, "--gammas", "sweep.gamma", "comma list of KL weights");
  add_kv(s, "--kl-signs", "sweep.kl_signs", "comma list");
  add_kv(s, "--seeds", "sweep.seeds", "comma list");
  add_kv(s, "--workers", "sweep.workers", "parallel cells");
  add_kv(s, "--epochs", "train.epochs", "");
  add_kv(s, "--batch-size", "train.batch_size", "");
  add_kv(s, "--patience", "train.patience", "");
  add_kv(s, "--out", "out.dir", "output directory");

  auto* o = app.add_subcommand("oracle", "closed-form regression study on the linear SEM");
  add_kv(o, "--sigma-u", "example1.sigma_u", "");
  add_kv(o, "--alpha1", "example1.alpha1", "");
  add_kv(o, "--alpha2", "example1.alpha2", "");
  add_kv(o, "--n-mc", "oracle.n_mc", "Monte-Carlo draws (>= 1e5)");
  add_kv(o, "--seed", "data.seed", "");
  add_kv(o, "--out", "out.dir", "output directory");

  auto* r = app.add_subcommand("report", "aggregate sweep results into a table");
  add_kv(r, "--dir", "report.dir", "directory of cell JSONs");
  add_kv(r, "--out", "report.out", "optional output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;  // usage error
  }

  try {
    KvConfig cfg;
    if (!config_path.empty()) cfg = KvConfig::from_file(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);

    if (app.got_subcommand(g)) return cmd_generate(cfg);
    if (app.got_subcommand(t)) return cmd_train(cfg);
    if (app.got_subcommand(e)) return cmd_eval(cfg);
    if (app.got_subcommand(s)) return cmd_sweep(cfg);
    if (app.got_subcommand(o)) return cmd_oracle(cfg);
    if (app.got_subcommand(r)) return cmd_report(cfg);
    return 1;
  } catch (const NumericalAbort& err) {
    std::cerr << "error: " << err.what() << "\nsnapshot: " << err.snapshot << "\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
}

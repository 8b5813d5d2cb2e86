#include "pipcfr/sweep.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace fs = std::filesystem;

namespace pipcfr {

std::string to_string(GenKind k) {
  switch (k) {
    case GenKind::Example1: return "example1";
    case GenKind::Sequential: return "sequential";
    case GenKind::AR: return "ar";
    case GenKind::Temporal: return "temporal";
  }
  return "?";
}

GenKind gen_kind_from_string(const std::string& s) {
  if (s == "example1") return GenKind::Example1;
  if (s == "sequential") return GenKind::Sequential;
  if (s == "ar") return GenKind::AR;
  if (s == "temporal") return GenKind::Temporal;
  throw std::invalid_argument("unknown generator kind '" + s + "'");
}

std::string SweepCell::id() const {
  std::ostringstream os;
  os << "m-" << to_string(method);
  if (noise >= 0) os << "_noise-" << noise;
  if (K >= 0) os << "_K-" << K;
  if (gamma >= 0) os << "_gamma-" << gamma;
  os << "_sign-" << to_string(kl_sign) << "_seed-" << seed;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

std::vector<SweepCell> enumerate_cells(const SweepSpec& spec) {
  auto noises = spec.noise_grid.empty() ? std::vector<double>{-1} : spec.noise_grid;
  auto ks = spec.k_grid.empty() ? std::vector<long>{-1} : spec.k_grid;
  auto gammas = spec.gamma_grid.empty() ? std::vector<double>{-1} : spec.gamma_grid;
  std::vector<SweepCell> cells;
  for (Method m : spec.methods)
    for (double nz : noises)
      for (long k : ks)
        for (double g : gammas)
          for (KlSign sign : spec.kl_signs)
            for (std::uint64_t seed : spec.seeds) {
              SweepCell c;
              c.method = m;
              c.noise = nz;
              c.K = k;
              c.gamma = g;
              c.kl_sign = sign;
              c.seed = seed;
              cells.push_back(c);
            }
  return cells;
}

namespace {

Dataset generate_for_cell(const SweepSpec& spec, const SweepCell& cell) {
  switch (spec.kind) {
    case GenKind::Example1: {
      Example1Config cfg = spec.example1;
      if (cell.noise >= 0) cfg.sigma_u = cell.noise;
      cfg.seed = Rng::derive_seed(cell.seed, "data");
      return gen_example1(cfg);
    }
    case GenKind::Sequential: {
      SequentialConfig cfg = spec.sequential;
      if (cell.noise >= 0) cfg.laplace_scale = cell.noise;
      if (cell.K > 0) cfg.K = static_cast<std::size_t>(cell.K);
      cfg.seed = Rng::derive_seed(cell.seed, "data");
      return gen_sequential(cfg);
    }
    case GenKind::AR: {
      ARConfig cfg = spec.ar;
      if (cell.noise >= 0) cfg.laplace_scale = cell.noise;
      if (cell.K > 0) cfg.K = static_cast<std::size_t>(cell.K);
      cfg.seed = Rng::derive_seed(cell.seed, "data");
      return gen_ar(cfg);
    }
    case GenKind::Temporal: {
      TemporalConfig cfg = spec.temporal;
      if (cell.noise >= 0) cfg.eps_u = cell.noise;
      if (cell.K > 0) cfg.K = static_cast<std::size_t>(cell.K);
      cfg.seed = Rng::derive_seed(cell.seed, "data");
      return gen_temporal(cfg);
    }
  }
  throw std::logic_error("generate_for_cell: unreachable");
}

std::string fingerprint(const SweepSpec& spec, const SweepCell& cell) {
  std::ostringstream os;
  os << to_string(spec.kind) << "|" << cell.id();
  return os.str();
}

}  // namespace

CellOutcome run_cell(const SweepSpec& spec, const SweepCell& cell) {
  CellOutcome out;
  out.cell = cell;
  try {
    Dataset full = generate_for_cell(spec, cell);
    SplitSpec split_spec = spec.split;
    split_spec.seed = Rng::derive_seed(cell.seed, "split");
    SplitDatasets parts = split(full, split_spec);
    const Scaler scaler = standardize(parts.train, {&parts.val, &parts.test});

    TrainConfig tc = spec.train_base;
    tc.method = cell.method;
    if (cell.gamma >= 0) tc.gamma = cell.gamma;
    tc.kl_sign = cell.kl_sign;
    tc.seed = Rng::derive_seed(cell.seed, "train");
    TrainResult res = train(parts.train, parts.val, scaler, tc);

    MetricsReport m;
    m.method = to_string(cell.method);
    m.config_fingerprint = fingerprint(spec, cell);
    m.pehe_in = pehe(res.bundle, parts.train);
    m.pehe_out = pehe(res.bundle, parts.test);
    const auto [cf_mean, cf_var] = counterfactual_variance(res.bundle, parts.test);
    m.cf_error_mean = cf_mean;
    m.cf_error_var = cf_var;
    out.metrics = m;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

std::string run_sweep(const SweepSpec& spec) {
  if (spec.out_dir.empty()) throw std::invalid_argument("run_sweep: out_dir required");
  fs::create_directories(spec.out_dir);
  const std::vector<SweepCell> cells = enumerate_cells(spec);

  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) break;
      const SweepCell& cell = cells[i];
      const fs::path cell_path = fs::path(spec.out_dir) / (cell.id() + ".json");
      if (fs::exists(cell_path)) continue;  // resume-safe
      const CellOutcome out = run_cell(spec, cell);
      nlohmann::json j;
      j["cell"] = cell.id();
      j["method"] = to_string(cell.method);
      j["noise"] = cell.noise;
      j["K"] = cell.K;
      j["gamma"] = cell.gamma;
      j["kl_sign"] = to_string(cell.kl_sign);
      j["seed"] = cell.seed;
      if (out.ok) {
        j["status"] = "ok";
        j["metrics"] = nlohmann::json::parse(out.metrics.to_json());
      } else {
        j["status"] = "failed";
        j["error"] = out.error;
      }
      std::lock_guard<std::mutex> lock(io_mutex);
      std::ofstream f(cell_path, std::ios::binary);
      f << j.dump(2);
    }
  };

  const int workers = std::max(1, spec.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Aggregate everything present in the directory.
  const fs::path agg_path = fs::path(spec.out_dir) / "aggregate.csv";
  std::ofstream agg(agg_path, std::ios::binary);
  agg << "cell,method,noise,K,gamma,kl_sign,seed,status,pehe_in,pehe_out,cf_error_mean,cf_"
         "error_var\n";
  agg.precision(17);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(spec.out_dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
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
    agg << j.value("cell", "") << "," << j.value("method", "") << "," << j.value("noise", -1.0)
        << "," << j.value("K", -1L) << "," << j.value("gamma", -1.0) << ","
        << j.value("kl_sign", "") << "," << j.value("seed", 0ULL) << ","
        << j.value("status", "");
    if (j.value("status", "") == "ok") {
      const auto& m = j.at("metrics");
      agg << "," << m.value("pehe_in", -1.0) << "," << m.value("pehe_out", -1.0) << ","
          << m.value("cf_error_mean", 0.0) << "," << m.value("cf_error_var", 0.0);
    } else {
      agg << ",,,,";
    }
    agg << "\n";
  }
  return agg_path.string();
}

}  // namespace pipcfr

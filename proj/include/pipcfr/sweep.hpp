#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pipcfr/eval.hpp"
#include "pipcfr/generators.hpp"
#include "pipcfr/trainer.hpp"

namespace pipcfr {

enum class GenKind { Example1, Sequential, AR, Temporal };
std::string to_string(GenKind k);
GenKind gen_kind_from_string(const std::string& s);

// One grid cell: a full generate -> split -> standardize -> train -> eval
// pipeline keyed by (method, noise scale, K, gamma, kl_sign, seed).
struct SweepCell {
  Method method = Method::PIPCFR_WASS;
  double noise = -1;  // <0: keep base config value
  long K = -1;
  double gamma = -1;
  KlSign kl_sign = KlSign::AsWritten;
  std::uint64_t seed = 0;
  std::string id() const;
};

struct SweepSpec {
  GenKind kind = GenKind::Temporal;
  Example1Config example1;
  SequentialConfig sequential;
  ARConfig ar;
  TemporalConfig temporal;
  SplitSpec split;
  TrainConfig train_base;

  std::vector<Method> methods{Method::PIPCFR_WASS};
  std::vector<double> noise_grid;        // empty: base value only
  std::vector<long> k_grid;              // empty: base value only
  std::vector<double> gamma_grid;        // empty: base value only
  std::vector<KlSign> kl_signs{KlSign::AsWritten};
  std::vector<std::uint64_t> seeds{0};

  std::string out_dir;
  int workers = 1;
};

struct CellOutcome {
  SweepCell cell;
  MetricsReport metrics;
  bool ok = false;
  std::string error;
};

// Runs one cell in isolation (own RNG, engine, bundle).
CellOutcome run_cell(const SweepSpec& spec, const SweepCell& cell);

// Enumerates the grid, skips cells whose result file already exists
// (resume-safe), runs the rest on `workers` threads, records per-cell
// failures without stopping, and writes an aggregate CSV.
// Returns the aggregate path.
std::string run_sweep(const SweepSpec& spec);

std::vector<SweepCell> enumerate_cells(const SweepSpec& spec);

}  // namespace pipcfr

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pipcfr {

// Observational data in struct-of-arrays form: covariates x, binary treatment
// t, post-treatment variables s (possibly a flattened K-step sequence), and
// outcome y. Synthetic generators additionally fill the noiseless potential
// outcomes y0_true/y1_true (tau_true = y1_true - y0_true exactly) and, where
// meaningful, the exogenous-noise record u.
struct Dataset {
  std::size_t x_dim = 0;
  std::size_t s_dim = 0;
  std::size_t u_dim = 0;

  std::vector<double> x;  // n * x_dim, row-major
  std::vector<int> t;
  std::vector<double> s;  // n * s_dim
  std::vector<double> y;

  bool has_potential = false;
  std::vector<double> y0_true;
  std::vector<double> y1_true;
  std::vector<double> tau_true;

  std::vector<double> u;  // n * u_dim; in-memory only, not persisted

  bool standardized = false;

  std::size_t n() const { return t.size(); }
  const double* x_row(std::size_t i) const { return x.data() + i * x_dim; }
  const double* s_row(std::size_t i) const { return s.data() + i * s_dim; }

  void append(const std::vector<double>& xi, int ti, const std::vector<double>& si, double yi);
  void set_potential(std::size_t i, double y0, double y1);
  // Checks the structural invariants; throws on violation.
  void validate() const;
};

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seed-deterministic shuffle partition; the three index sets are disjoint and
// cover 0..n-1. Throws if any resulting split would be empty or the fractions
// do not sum to 1 within 1e-12.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct SplitDatasets {
  Dataset train, val, test;
};
SplitDatasets split(const Dataset& ds, const SplitSpec& spec);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx);

// Per-feature affine transform fit on the training split only. Features with
// zero spread pass through unchanged. y0_true/y1_true share y's transform and
// tau_true is scaled by 1/y_std, so ground truth stays consistent with y.
struct Scaler {
  std::vector<double> x_mean, x_std;
  std::vector<double> s_mean, s_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  bool identity = true;

  void transform(Dataset& ds) const;
  void inverse(Dataset& ds) const;
  void transform_x_row(const double* in, double* out, std::size_t dim) const;
  void transform_s_row(const double* in, double* out, std::size_t dim) const;
  double y_to_model(double v) const { return (v - y_mean) / y_std; }
  double y_from_model(double v) const { return v * y_std + y_mean; }
};

Scaler fit_scaler(const Dataset& train);

// Fits on `train`, applies in place to every dataset passed.
Scaler standardize(Dataset& train, std::vector<Dataset*> others = {});

// CSV columns: x_0..x_{p-1}, t, s_0..s_{q-1}, y[, y0_true, y1_true].
// UTF-8, comma-separated, '.' decimal, full round-trip precision.
void write_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path);

}  // namespace pipcfr

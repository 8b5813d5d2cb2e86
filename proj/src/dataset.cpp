#include "pipcfr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pipcfr/errors.hpp"
#include "pipcfr/rng.hpp"

namespace pipcfr {

void Dataset::append(const std::vector<double>& xi, int ti, const std::vector<double>& si,
                     double yi) {
  if (n() == 0 && x_dim == 0 && s_dim == 0) {
    x_dim = xi.size();
    s_dim = si.size();
  }
  if (xi.size() != x_dim || si.size() != s_dim)
    throw ShapeError("Dataset::append: row dims (" + std::to_string(xi.size()) + ", " +
                     std::to_string(si.size()) + ") vs dataset (" + std::to_string(x_dim) +
                     ", " + std::to_string(s_dim) + ")");
  x.insert(x.end(), xi.begin(), xi.end());
  s.insert(s.end(), si.begin(), si.end());
  t.push_back(ti);
  y.push_back(yi);
  if (has_potential) {
    y0_true.push_back(0);
    y1_true.push_back(0);
    tau_true.push_back(0);
  }
}

void Dataset::set_potential(std::size_t i, double y0, double y1) {
  if (!has_potential) {
    has_potential = true;
    y0_true.assign(n(), 0.0);
    y1_true.assign(n(), 0.0);
    tau_true.assign(n(), 0.0);
  }
  y0_true[i] = y0;
  y1_true[i] = y1;
  tau_true[i] = y1 - y0;
}

void Dataset::validate() const {
  const std::size_t m = n();
  if (x.size() != m * x_dim || s.size() != m * s_dim || y.size() != m)
    throw ShapeError("Dataset: inconsistent array lengths");
  for (std::size_t i = 0; i < m; ++i)
    if (t[i] != 0 && t[i] != 1)
      throw ParseError("Dataset: non-binary treatment " + std::to_string(t[i]) + " at row " +
                       std::to_string(i));
  if (has_potential) {
    if (y0_true.size() != m || y1_true.size() != m || tau_true.size() != m)
      throw ShapeError("Dataset: potential-outcome arrays have wrong length");
    for (std::size_t i = 0; i < m; ++i)
      if (tau_true[i] != y1_true[i] - y0_true[i])
        throw ShapeError("Dataset: tau_true != y1_true - y0_true at row " + std::to_string(i));
  }
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  const double total = spec.train_frac + spec.val_frac + spec.test_frac;
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("split: fractions sum to " + std::to_string(total));
  if (spec.train_frac < 0 || spec.val_frac < 0 || spec.test_frac < 0)
    throw std::invalid_argument("split: negative fraction");

  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * n));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * n));
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw std::invalid_argument("split: empty split for n=" + std::to_string(n) + " at " +
                                std::to_string(spec.train_frac) + "/" +
                                std::to_string(spec.val_frac) + "/" +
                                std::to_string(spec.test_frac));

  Rng rng = Rng(spec.seed).substream("split");
  const std::vector<std::size_t> perm = rng.permutation(n);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + n_train);
  out.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  out.test.assign(perm.begin() + n_train + n_val, perm.end());
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.x_dim = ds.x_dim;
  out.s_dim = ds.s_dim;
  out.u_dim = ds.u_dim;
  out.has_potential = ds.has_potential;
  out.standardized = ds.standardized;
  out.x.reserve(idx.size() * ds.x_dim);
  out.s.reserve(idx.size() * ds.s_dim);
  for (std::size_t i : idx) {
    out.x.insert(out.x.end(), ds.x_row(i), ds.x_row(i) + ds.x_dim);
    out.s.insert(out.s.end(), ds.s_row(i), ds.s_row(i) + ds.s_dim);
    out.t.push_back(ds.t[i]);
    out.y.push_back(ds.y[i]);
    if (ds.has_potential) {
      out.y0_true.push_back(ds.y0_true[i]);
      out.y1_true.push_back(ds.y1_true[i]);
      out.tau_true.push_back(ds.tau_true[i]);
    }
    if (ds.u_dim > 0)
      out.u.insert(out.u.end(), ds.u.data() + i * ds.u_dim, ds.u.data() + (i + 1) * ds.u_dim);
  }
  return out;
}

SplitDatasets split(const Dataset& ds, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(ds.n(), spec);
  return {subset(ds, idx.train), subset(ds, idx.val), subset(ds, idx.test)};
}

namespace {

// Population moments, matching StandardScaler. Constant features keep
// mean 0 / std 1 so the transform is an exact identity for them.
void fit_columns(const std::vector<double>& a, std::size_t n, std::size_t dim,
                 std::vector<double>& mean, std::vector<double>& stdev) {
  mean.assign(dim, 0.0);
  stdev.assign(dim, 1.0);
  if (n == 0 || dim == 0) return;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) mean[c] += a[i * dim + c];
  for (std::size_t c = 0; c < dim; ++c) mean[c] /= static_cast<double>(n);
  std::vector<double> var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = a[i * dim + c] - mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < dim; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(n));
    if (sd > 0) {
      stdev[c] = sd;
    } else {
      mean[c] = 0.0;
      stdev[c] = 1.0;
    }
  }
}

void apply_columns(std::vector<double>& a, std::size_t n, std::size_t dim,
                   const std::vector<double>& mean, const std::vector<double>& stdev,
                   bool forward) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) {
      double& v = a[i * dim + c];
      v = forward ? (v - mean[c]) / stdev[c] : v * stdev[c] + mean[c];
    }
}

}  // namespace

Scaler fit_scaler(const Dataset& train) {
  if (train.n() == 0) throw std::invalid_argument("fit_scaler: empty training split");
  Scaler sc;
  fit_columns(train.x, train.n(), train.x_dim, sc.x_mean, sc.x_std);
  fit_columns(train.s, train.n(), train.s_dim, sc.s_mean, sc.s_std);
  std::vector<double> ym, ys;
  fit_columns(train.y, train.n(), 1, ym, ys);
  sc.y_mean = ym[0];
  sc.y_std = ys[0];
  sc.identity = false;
  return sc;
}

void Scaler::transform(Dataset& ds) const {
  if (identity) return;
  apply_columns(ds.x, ds.n(), ds.x_dim, x_mean, x_std, true);
  apply_columns(ds.s, ds.n(), ds.s_dim, s_mean, s_std, true);
  for (std::size_t i = 0; i < ds.n(); ++i) ds.y[i] = y_to_model(ds.y[i]);
  if (ds.has_potential)
    for (std::size_t i = 0; i < ds.n(); ++i) {
      ds.y0_true[i] = y_to_model(ds.y0_true[i]);
      ds.y1_true[i] = y_to_model(ds.y1_true[i]);
      ds.tau_true[i] /= y_std;
    }
  ds.standardized = true;
}

void Scaler::inverse(Dataset& ds) const {
  if (identity) return;
  apply_columns(ds.x, ds.n(), ds.x_dim, x_mean, x_std, false);
  apply_columns(ds.s, ds.n(), ds.s_dim, s_mean, s_std, false);
  for (std::size_t i = 0; i < ds.n(); ++i) ds.y[i] = y_from_model(ds.y[i]);
  if (ds.has_potential)
    for (std::size_t i = 0; i < ds.n(); ++i) {
      ds.y0_true[i] = y_from_model(ds.y0_true[i]);
      ds.y1_true[i] = y_from_model(ds.y1_true[i]);
      ds.tau_true[i] *= y_std;
    }
  ds.standardized = false;
}

void Scaler::transform_x_row(const double* in, double* out, std::size_t dim) const {
  for (std::size_t c = 0; c < dim; ++c)
    out[c] = identity ? in[c] : (in[c] - x_mean[c]) / x_std[c];
}

void Scaler::transform_s_row(const double* in, double* out, std::size_t dim) const {
  for (std::size_t c = 0; c < dim; ++c)
    out[c] = identity ? in[c] : (in[c] - s_mean[c]) / s_std[c];
}

Scaler standardize(Dataset& train, std::vector<Dataset*> others) {
  Scaler sc = fit_scaler(train);
  sc.transform(train);
  for (Dataset* d : others) sc.transform(*d);
  return sc;
}

// --- CSV ----------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, std::size_t row, const std::string& col) {
  double v = 0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || p != e)
    throw ParseError("csv: unparsable number '" + tok + "' at row " + std::to_string(row) +
                     ", column " + col);
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_csv: cannot open " + path);
  for (std::size_t c = 0; c < ds.x_dim; ++c) f << "x_" << c << ",";
  f << "t";
  for (std::size_t c = 0; c < ds.s_dim; ++c) f << ",s_" << c;
  f << ",y";
  if (ds.has_potential) f << ",y0_true,y1_true";
  f << "\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t c = 0; c < ds.x_dim; ++c) f << fmt_double(ds.x[i * ds.x_dim + c]) << ",";
    f << ds.t[i];
    for (std::size_t c = 0; c < ds.s_dim; ++c) f << "," << fmt_double(ds.s[i * ds.s_dim + c]);
    f << "," << fmt_double(ds.y[i]);
    if (ds.has_potential)
      f << "," << fmt_double(ds.y0_true[i]) << "," << fmt_double(ds.y1_true[i]);
    f << "\n";
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError("csv: empty file " + path);
  const std::vector<std::string> header = split_line(line);

  // Map named columns; x_* and s_* must form contiguous 0..k-1 ranges.
  int t_col = -1, y_col = -1, y0_col = -1, y1_col = -1;
  std::vector<int> x_cols, s_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    auto indexed = [&](const char* prefix) -> int {
      const std::size_t plen = std::string(prefix).size();
      if (h.rfind(prefix, 0) != 0 || h.size() == plen) return -1;
      int k = -1;
      auto [p, ec] = std::from_chars(h.data() + plen, h.data() + h.size(), k);
      if (ec != std::errc{} || p != h.data() + h.size()) return -1;
      return k;
    };
    if (h == "t") t_col = static_cast<int>(c);
    else if (h == "y") y_col = static_cast<int>(c);
    else if (h == "y0_true") y0_col = static_cast<int>(c);
    else if (h == "y1_true") y1_col = static_cast<int>(c);
    else if (int k = indexed("x_"); k >= 0) {
      x_cols.resize(std::max<std::size_t>(x_cols.size(), k + 1), -1);
      x_cols[k] = static_cast<int>(c);
    } else if (int k2 = indexed("s_"); k2 >= 0) {
      s_cols.resize(std::max<std::size_t>(s_cols.size(), k2 + 1), -1);
      s_cols[k2] = static_cast<int>(c);
    }
  }
  if (t_col < 0) throw ParseError("csv: missing required column 't' in " + path);
  if (y_col < 0) throw ParseError("csv: missing required column 'y' in " + path);
  if (x_cols.empty()) throw ParseError("csv: no x_* columns in " + path);
  for (std::size_t k = 0; k < x_cols.size(); ++k)
    if (x_cols[k] < 0) throw ParseError("csv: missing column x_" + std::to_string(k));
  for (std::size_t k = 0; k < s_cols.size(); ++k)
    if (s_cols[k] < 0) throw ParseError("csv: missing column s_" + std::to_string(k));
  const bool with_po = y0_col >= 0 && y1_col >= 0;
  if ((y0_col >= 0) != (y1_col >= 0))
    throw ParseError("csv: y0_true/y1_true must both be present or both absent");

  Dataset ds;
  ds.x_dim = x_cols.size();
  ds.s_dim = s_cols.size();
  ds.has_potential = with_po;

  std::vector<double> xi(ds.x_dim), si(ds.s_dim);
  std::size_t row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> tok = split_line(line);
    if (tok.size() != header.size())
      throw ParseError("csv: row " + std::to_string(row) + " has " + std::to_string(tok.size()) +
                       " fields, header has " + std::to_string(header.size()));
    for (std::size_t k = 0; k < ds.x_dim; ++k)
      xi[k] = parse_double(tok[x_cols[k]], row, "x_" + std::to_string(k));
    for (std::size_t k = 0; k < ds.s_dim; ++k)
      si[k] = parse_double(tok[s_cols[k]], row, "s_" + std::to_string(k));
    const double tv = parse_double(tok[t_col], row, "t");
    if (tv != 0.0 && tv != 1.0)
      throw ParseError("csv: non-binary t value '" + tok[t_col] + "' at row " +
                       std::to_string(row));
    const double yv = parse_double(tok[y_col], row, "y");
    ds.x.insert(ds.x.end(), xi.begin(), xi.end());
    ds.s.insert(ds.s.end(), si.begin(), si.end());
    ds.t.push_back(static_cast<int>(tv));
    ds.y.push_back(yv);
    if (with_po) {
      const double y0 = parse_double(tok[y0_col], row, "y0_true");
      const double y1 = parse_double(tok[y1_col], row, "y1_true");
      ds.y0_true.push_back(y0);
      ds.y1_true.push_back(y1);
      ds.tau_true.push_back(y1 - y0);
    }
  }
  ds.validate();
  return ds;
}

}  // namespace pipcfr

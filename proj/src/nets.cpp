#include "pipcfr/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "pipcfr/errors.hpp"

namespace pipcfr {

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "elu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "elu") return Activation::Elu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("MlpSpec: need at least input and output sizes");
  for (std::size_t sz : layer_sizes)
    if (sz == 0) throw std::invalid_argument("MlpSpec: zero layer size");
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    const std::size_t fan_in = spec_.layer_sizes[l];
    const std::size_t fan_out = spec_.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    weights_.push_back(Tensor::from_data(fan_in, fan_out, std::move(w), true));
    biases_.push_back(Tensor::zeros(1, fan_out, true));
  }
}

Mlp::Mlp(MlpSpec spec, std::vector<std::vector<double>> weights,
         std::vector<std::vector<double>> biases)
    : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t layers = spec_.layer_sizes.size() - 1;
  if (weights.size() != layers || biases.size() != layers)
    throw ShapeError("Mlp: expected " + std::to_string(layers) + " weight/bias pairs");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t fan_in = spec_.layer_sizes[l];
    const std::size_t fan_out = spec_.layer_sizes[l + 1];
    weights_.push_back(Tensor::from_data(fan_in, fan_out, std::move(weights[l]), true));
    if (biases[l].size() != fan_out)
      throw ShapeError("Mlp: bias " + std::to_string(l) + " has " +
                       std::to_string(biases[l].size()) + " values, expected " +
                       std::to_string(fan_out));
    biases_.push_back(Tensor::from_data(1, fan_out, std::move(biases[l]), true));
  }
}

Tensor Mlp::forward(const Tensor& x, bool frozen) const {
  if (x.cols() != in_dim())
    throw ShapeError("Mlp: input " + x.shape_str() + " does not match expected width " +
                     std::to_string(in_dim()));
  Tensor a = x;
  const std::size_t layers = weights_.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor w = frozen ? weights_[l].detach() : weights_[l];
    const Tensor b = frozen ? biases_[l].detach() : biases_[l];
    Tensor z = add(matmul(a, w), b);
    if (l + 1 < layers) {
      a = spec_.activation == Activation::Relu ? relu(z) : elu(z);
    } else {
      a = spec_.output_activation == OutputActivation::Sigmoid ? sigmoid(z) : z;
    }
  }
  return a;
}

std::vector<Tensor> Mlp::params() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

Mlp Mlp::clone() const {
  std::vector<std::vector<double>> w, b;
  for (const Tensor& t : weights_) w.push_back(t.data());
  for (const Tensor& t : biases_) b.push_back(t.data());
  return Mlp(spec_, std::move(w), std::move(b));
}

// --- methods ---------------------------------------------------------------

std::string to_string(Method m) {
  switch (m) {
    case Method::TARNET: return "TARNET";
    case Method::CFRNET_MMD: return "CFRNET_MMD";
    case Method::CFRNET_WASS: return "CFRNET_WASS";
    case Method::PIPCFR_MMD: return "PIPCFR_MMD";
    case Method::PIPCFR_WASS: return "PIPCFR_WASS";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "TARNET") return Method::TARNET;
  if (s == "CFRNET_MMD") return Method::CFRNET_MMD;
  if (s == "CFRNET_WASS") return Method::CFRNET_WASS;
  if (s == "PIPCFR_MMD") return Method::PIPCFR_MMD;
  if (s == "PIPCFR_WASS") return Method::PIPCFR_WASS;
  throw std::invalid_argument("unknown method '" + s + "'");
}

bool method_is_pipcfr(Method m) {
  return m == Method::PIPCFR_MMD || m == Method::PIPCFR_WASS;
}

bool method_uses_ipm(Method m) { return m != Method::TARNET; }

bool method_ipm_is_wass(Method m) {
  return m == Method::CFRNET_WASS || m == Method::PIPCFR_WASS;
}

// --- bundle ------------------------------------------------------------------

namespace {

std::vector<std::size_t> stack_sizes(std::size_t in, std::size_t hidden, std::size_t layers,
                                     std::size_t out) {
  std::vector<std::size_t> sizes{in};
  for (std::size_t l = 0; l + 1 < layers; ++l) sizes.push_back(hidden);
  sizes.push_back(out);
  return sizes;
}

void extend(std::vector<Tensor>& dst, const std::vector<Tensor>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

ModelBundle ModelBundle::init(Method method, const ArchSpec& arch, Rng& rng) {
  if (arch.x_dim == 0) throw std::invalid_argument("ModelBundle: x_dim must be positive");
  if (method_is_pipcfr(method) && arch.s_dim == 0)
    throw std::invalid_argument("ModelBundle: " + to_string(method) +
                                " requires post-treatment variables (s_dim > 0)");
  const std::size_t s_dim = arch.s_dim > 0 ? arch.s_dim : 1;

  ModelBundle b;
  b.method = method;
  b.arch = arch;
  const Activation act = arch.activation;
  auto trunk = [&](std::size_t in, std::size_t hidden, std::size_t layers) {
    return MlpSpec{stack_sizes(in, hidden, layers, hidden), act, OutputActivation::Linear};
  };
  auto head = [&](std::size_t in, std::size_t hidden, std::size_t layers,
                  OutputActivation out_act) {
    return MlpSpec{stack_sizes(in, hidden, layers, 1), act, out_act};
  };

  b.psi_alpha = Mlp(trunk(arch.x_dim, arch.rep_hidden, arch.rep_layers), rng);
  b.psi_eta = Mlp(trunk(s_dim, arch.phi_hidden, arch.phi_layers), rng);
  const std::size_t q_in = arch.rep_hidden + arch.phi_hidden;
  b.h0 = Mlp(head(q_in, arch.head_hidden, arch.head_layers, OutputActivation::Linear), rng);
  b.h1 = Mlp(head(q_in, arch.head_hidden, arch.head_layers, OutputActivation::Linear), rng);
  b.f_trunk = Mlp(trunk(arch.x_dim, arch.rep_hidden, arch.rep_layers), rng);
  b.f0 = Mlp(head(arch.rep_hidden, arch.head_hidden, arch.head_layers,
                  OutputActivation::Linear),
             rng);
  b.f1 = Mlp(head(arch.rep_hidden, arch.head_hidden, arch.head_layers,
                  OutputActivation::Linear),
             rng);
  b.g = Mlp(head(arch.x_dim, arch.prop_hidden, arch.prop_layers, OutputActivation::Sigmoid),
            rng);
  b.g_tilde = Mlp(head(arch.x_dim + arch.phi_hidden, arch.prop_hidden, arch.prop_layers,
                       OutputActivation::Sigmoid),
                  rng);
  return b;
}

ModelBundle ModelBundle::clone() const {
  ModelBundle b;
  b.method = method;
  b.arch = arch;
  b.scaler = scaler;
  b.psi_alpha = psi_alpha.clone();
  b.psi_eta = psi_eta.clone();
  b.h0 = h0.clone();
  b.h1 = h1.clone();
  b.f_trunk = f_trunk.clone();
  b.f0 = f0.clone();
  b.f1 = f1.clone();
  b.g = g.clone();
  b.g_tilde = g_tilde.clone();
  return b;
}

std::vector<Tensor> ModelBundle::params_propensity() const {
  std::vector<Tensor> out;
  extend(out, g.params());
  extend(out, g_tilde.params());
  return out;
}

std::vector<Tensor> ModelBundle::params_eta() const { return psi_eta.params(); }

std::vector<Tensor> ModelBundle::params_heads() const {
  std::vector<Tensor> out;
  extend(out, h0.params());
  extend(out, h1.params());
  extend(out, psi_alpha.params());
  return out;
}

std::vector<Tensor> ModelBundle::params_f() const {
  std::vector<Tensor> out;
  extend(out, f_trunk.params());
  extend(out, f0.params());
  extend(out, f1.params());
  return out;
}

std::vector<Tensor> ModelBundle::all_params() const {
  std::vector<Tensor> out;
  extend(out, params_propensity());
  extend(out, params_eta());
  extend(out, params_heads());
  extend(out, params_f());
  return out;
}

void ModelBundle::zero_all_grads() const {
  for (const Tensor& p : all_params()) p.zero_grad();
}

// --- prediction paths -----------------------------------------------------------

Tensor rep_alpha(const ModelBundle& b, const Tensor& x, bool frozen) {
  return b.psi_alpha.forward(x, frozen);
}

Tensor phi_rep(const ModelBundle& b, const Tensor& s, bool frozen) {
  return b.psi_eta.forward(s, frozen);
}

Tensor blend_heads(const Mlp& head0, const Mlp& head1, const Tensor& z, const Tensor& tmask,
                   bool frozen) {
  const Tensor out0 = head0.forward(z, frozen);
  const Tensor out1 = head1.forward(z, frozen);
  const Tensor keep1 = mul(tmask, out1);
  const Tensor keep0 = mul(add_scalar(neg(tmask), 1.0), out0);
  return add(keep1, keep0);
}

Tensor predict_q_batch(const ModelBundle& b, const Tensor& x, const Tensor& s,
                       const Tensor& tmask, const QFreeze& freeze) {
  const Tensor rep = rep_alpha(b, x, freeze.alpha);
  const Tensor phi = phi_rep(b, s, freeze.eta);
  const Tensor z = concat_cols(rep, phi);
  return blend_heads(b.h0, b.h1, z, tmask, freeze.heads);
}

Tensor predict_f_batch(const ModelBundle& b, const Tensor& x, const Tensor& tmask,
                       bool frozen) {
  const Tensor rep = b.f_trunk.forward(x, frozen);
  return blend_heads(b.f0, b.f1, rep, tmask, frozen);
}

Tensor propensity_g(const ModelBundle& b, const Tensor& x, bool frozen) {
  return clamp(b.g.forward(x, frozen), kPropClamp, 1.0 - kPropClamp);
}

Tensor propensity_g_tilde(const ModelBundle& b, const Tensor& x, const Tensor& phi,
                          bool frozen) {
  return clamp(b.g_tilde.forward(concat_cols(x, phi), frozen), kPropClamp, 1.0 - kPropClamp);
}

namespace {

void check_t(int t) {
  if (t != 0 && t != 1)
    throw std::invalid_argument("treatment must be 0 or 1, got " + std::to_string(t));
}

}  // namespace

double predict_q(const ModelBundle& b, const std::vector<double>& x, int t,
                 const std::vector<double>& s) {
  check_t(t);
  const Tensor xt = Tensor::from_data(1, x.size(), x);
  const Tensor st = Tensor::from_data(1, s.size(), s);
  const Tensor mask = Tensor::scalar(static_cast<double>(t));
  return predict_q_batch(b, xt, st, mask, QFreeze{}).value();
}

double predict_f(const ModelBundle& b, const std::vector<double>& x, int t) {
  check_t(t);
  const Tensor xt = Tensor::from_data(1, x.size(), x);
  const Tensor mask = Tensor::scalar(static_cast<double>(t));
  return predict_f_batch(b, xt, mask, true).value();
}

double predict_ite(const ModelBundle& b, const std::vector<double>& x) {
  return predict_f(b, x, 1) - predict_f(b, x, 0);
}

}  // namespace pipcfr

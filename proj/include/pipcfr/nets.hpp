#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pipcfr/dataset.hpp"
#include "pipcfr/rng.hpp"
#include "pipcfr/tensor.hpp"

namespace pipcfr {

enum class Activation { Relu, Elu };
enum class OutputActivation { Linear, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // [in, hidden..., out]
  Activation activation = Activation::Relu;
  OutputActivation output_activation = OutputActivation::Linear;
  void validate() const;
};

// Fully connected stack. Kaiming-uniform fan-in init for weights, zero
// biases. A frozen forward routes gradients through the layer maths to the
// inputs while leaving the parameters outside the tape.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& rng);
  Mlp(MlpSpec spec, std::vector<std::vector<double>> weights,
      std::vector<std::vector<double>> biases);

  Tensor forward(const Tensor& x, bool frozen = false) const;
  std::vector<Tensor> params() const;  // shared handles, alternating W, b
  Mlp clone() const;                   // deep parameter copy

  const MlpSpec& spec() const { return spec_; }
  std::size_t in_dim() const { return spec_.layer_sizes.front(); }
  std::size_t out_dim() const { return spec_.layer_sizes.back(); }
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }
  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }

 private:
  MlpSpec spec_;
  std::vector<Tensor> weights_;  // [in, out] each
  std::vector<Tensor> biases_;   // [1, out] each
};

enum class Method { TARNET, CFRNET_MMD, CFRNET_WASS, PIPCFR_MMD, PIPCFR_WASS };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool method_is_pipcfr(Method m);
bool method_uses_ipm(Method m);
bool method_ipm_is_wass(Method m);

struct ArchSpec {
  std::size_t x_dim = 0;
  std::size_t s_dim = 0;
  std::size_t rep_hidden = 64;   // psi_alpha and f trunk width
  std::size_t rep_layers = 3;
  std::size_t head_hidden = 64;  // h and f head width
  std::size_t head_layers = 4;
  std::size_t phi_hidden = 128;  // psi_eta width; also dim(phi)
  std::size_t phi_layers = 3;
  std::size_t prop_hidden = 64;  // g and g~ width
  std::size_t prop_layers = 4;
  Activation activation = Activation::Relu;
};

// Parameter sets for one estimator. q(x,t,phi) = h_t(psi_alpha(x), phi) is
// the pseudo-outcome constructor; f is the deployable outcome predictor and
// consumes (x, t) only, over its own trunk, so updating f never perturbs q
// and erasing s from test samples cannot change tau estimates.
struct ModelBundle {
  Method method = Method::PIPCFR_WASS;
  ArchSpec arch;
  Mlp psi_alpha;  // x -> rep
  Mlp psi_eta;    // s -> phi
  Mlp h0, h1;     // (rep ++ phi) -> R
  Mlp f_trunk;    // x -> rep
  Mlp f0, f1;     // rep -> R
  Mlp g;          // x -> (0,1)
  Mlp g_tilde;    // (x ++ phi) -> (0,1)
  Scaler scaler;

  static ModelBundle init(Method method, const ArchSpec& arch, Rng& rng);
  ModelBundle clone() const;

  std::vector<Tensor> params_propensity() const;  // g, g~
  std::vector<Tensor> params_eta() const;         // psi_eta
  std::vector<Tensor> params_heads() const;       // h0, h1, psi_alpha
  std::vector<Tensor> params_f() const;           // f trunk + heads
  std::vector<Tensor> all_params() const;
  void zero_all_grads() const;
};

// Propensity outputs are clamped into [kPropClamp, 1 - kPropClamp] before any
// logarithm, which keeps overlap numerically strict.
inline constexpr double kPropClamp = 1e-6;

Tensor rep_alpha(const ModelBundle& b, const Tensor& x, bool frozen);
Tensor phi_rep(const ModelBundle& b, const Tensor& s, bool frozen);

// Per-row head blend: tmask selects head 1, (1 - tmask) head 0.
Tensor blend_heads(const Mlp& head0, const Mlp& head1, const Tensor& z, const Tensor& tmask,
                   bool frozen);

struct QFreeze {
  bool alpha = true;
  bool eta = true;
  bool heads = true;
};
Tensor predict_q_batch(const ModelBundle& b, const Tensor& x, const Tensor& s,
                       const Tensor& tmask, const QFreeze& freeze);
Tensor predict_f_batch(const ModelBundle& b, const Tensor& x, const Tensor& tmask, bool frozen);
Tensor propensity_g(const ModelBundle& b, const Tensor& x, bool frozen);
Tensor propensity_g_tilde(const ModelBundle& b, const Tensor& x, const Tensor& phi, bool frozen);

// Single-sample conveniences (model/standardized units). t outside {0,1}
// raises an error.
double predict_q(const ModelBundle& b, const std::vector<double>& x, int t,
                 const std::vector<double>& s);
double predict_f(const ModelBundle& b, const std::vector<double>& x, int t);
double predict_ite(const ModelBundle& b, const std::vector<double>& x);

}  // namespace pipcfr

#include "pipcfr/serialize.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace pipcfr {

namespace {

using json = nlohmann::json;

json mlp_to_json(const Mlp& m) {
  json j;
  j["layer_sizes"] = m.spec().layer_sizes;
  j["activation"] = to_string(m.spec().activation);
  j["output_activation"] =
      m.spec().output_activation == OutputActivation::Sigmoid ? "sigmoid" : "linear";
  json w = json::array(), b = json::array();
  for (const Tensor& t : m.weights()) w.push_back(t.data());
  for (const Tensor& t : m.biases()) b.push_back(t.data());
  j["weights"] = std::move(w);
  j["biases"] = std::move(b);
  return j;
}

Mlp mlp_from_json(const json& j) {
  MlpSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  spec.activation = activation_from_string(j.at("activation").get<std::string>());
  spec.output_activation = j.at("output_activation").get<std::string>() == "sigmoid"
                               ? OutputActivation::Sigmoid
                               : OutputActivation::Linear;
  auto w = j.at("weights").get<std::vector<std::vector<double>>>();
  auto b = j.at("biases").get<std::vector<std::vector<double>>>();
  return Mlp(spec, std::move(w), std::move(b));
}

json scaler_to_json(const Scaler& s) {
  json j;
  j["identity"] = s.identity;
  j["x_mean"] = s.x_mean;
  j["x_std"] = s.x_std;
  j["s_mean"] = s.s_mean;
  j["s_std"] = s.s_std;
  j["y_mean"] = s.y_mean;
  j["y_std"] = s.y_std;
  return j;
}

Scaler scaler_from_json(const json& j) {
  Scaler s;
  s.identity = j.at("identity").get<bool>();
  s.x_mean = j.at("x_mean").get<std::vector<double>>();
  s.x_std = j.at("x_std").get<std::vector<double>>();
  s.s_mean = j.at("s_mean").get<std::vector<double>>();
  s.s_std = j.at("s_std").get<std::vector<double>>();
  s.y_mean = j.at("y_mean").get<double>();
  s.y_std = j.at("y_std").get<double>();
  return s;
}

}  // namespace

std::string bundle_to_json(const ModelBundle& b) {
  json j;
  j["format"] = "pipcfr-checkpoint";
  j["version"] = 1;
  j["method"] = to_string(b.method);
  json arch;
  arch["x_dim"] = b.arch.x_dim;
  arch["s_dim"] = b.arch.s_dim;
  arch["rep_hidden"] = b.arch.rep_hidden;
  arch["rep_layers"] = b.arch.rep_layers;
  arch["head_hidden"] = b.arch.head_hidden;
  arch["head_layers"] = b.arch.head_layers;
  arch["phi_hidden"] = b.arch.phi_hidden;
  arch["phi_layers"] = b.arch.phi_layers;
  arch["prop_hidden"] = b.arch.prop_hidden;
  arch["prop_layers"] = b.arch.prop_layers;
  arch["activation"] = to_string(b.arch.activation);
  j["arch"] = std::move(arch);
  j["scaler"] = scaler_to_json(b.scaler);
  json nets;
  nets["psi_alpha"] = mlp_to_json(b.psi_alpha);
  nets["psi_eta"] = mlp_to_json(b.psi_eta);
  nets["h0"] = mlp_to_json(b.h0);
  nets["h1"] = mlp_to_json(b.h1);
  nets["f_trunk"] = mlp_to_json(b.f_trunk);
  nets["f0"] = mlp_to_json(b.f0);
  nets["f1"] = mlp_to_json(b.f1);
  nets["g"] = mlp_to_json(b.g);
  nets["g_tilde"] = mlp_to_json(b.g_tilde);
  j["nets"] = std::move(nets);
  return j.dump();
}

ModelBundle bundle_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format").get<std::string>() != "pipcfr-checkpoint")
    throw std::runtime_error("checkpoint: unexpected format tag");
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  ModelBundle b;
  b.method = method_from_string(j.at("method").get<std::string>());
  const json& arch = j.at("arch");
  b.arch.x_dim = arch.at("x_dim").get<std::size_t>();
  b.arch.s_dim = arch.at("s_dim").get<std::size_t>();
  b.arch.rep_hidden = arch.at("rep_hidden").get<std::size_t>();
  b.arch.rep_layers = arch.at("rep_layers").get<std::size_t>();
  b.arch.head_hidden = arch.at("head_hidden").get<std::size_t>();
  b.arch.head_layers = arch.at("head_layers").get<std::size_t>();
  b.arch.phi_hidden = arch.at("phi_hidden").get<std::size_t>();
  b.arch.phi_layers = arch.at("phi_layers").get<std::size_t>();
  b.arch.prop_hidden = arch.at("prop_hidden").get<std::size_t>();
  b.arch.prop_layers = arch.at("prop_layers").get<std::size_t>();
  b.arch.activation = activation_from_string(arch.at("activation").get<std::string>());
  b.scaler = scaler_from_json(j.at("scaler"));
  const json& nets = j.at("nets");
  b.psi_alpha = mlp_from_json(nets.at("psi_alpha"));
  b.psi_eta = mlp_from_json(nets.at("psi_eta"));
  b.h0 = mlp_from_json(nets.at("h0"));
  b.h1 = mlp_from_json(nets.at("h1"));
  b.f_trunk = mlp_from_json(nets.at("f_trunk"));
  b.f0 = mlp_from_json(nets.at("f0"));
  b.f1 = mlp_from_json(nets.at("f1"));
  b.g = mlp_from_json(nets.at("g"));
  b.g_tilde = mlp_from_json(nets.at("g_tilde"));
  return b;
}

void save_bundle(const ModelBundle& b, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_bundle: cannot open " + path);
  f << bundle_to_json(b);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_bundle: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bundle_from_json(text);
}

}  // namespace pipcfr

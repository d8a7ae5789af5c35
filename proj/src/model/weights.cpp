#include <random>
#include <string>

#include "pcw/container.hpp"
#include "pcw/error.hpp"
#include "pcw/model.hpp"

namespace pcw {

namespace {

std::string layer_name(std::size_t i, const char* suffix) { return "h." + std::to_string(i) + "." + suffix; }

struct Expect {
  std::string name;
  std::vector<std::size_t> shape;
};

// Every tensor a config requires, in a fixed order.
std::vector<Expect> expected_tensors(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  std::vector<Expect> out = {{"wte", {c.vocab_size, d}}};
  if (c.positional_kind == PositionalKind::learned_absolute) out.push_back({"wpe", {c.max_positions, d}});
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    out.push_back({layer_name(i, "ln_1.weight"), {d}});
    out.push_back({layer_name(i, "ln_1.bias"), {d}});
    out.push_back({layer_name(i, "attn.c_attn.weight"), {d, 3 * d}});
    out.push_back({layer_name(i, "attn.c_attn.bias"), {3 * d}});
    out.push_back({layer_name(i, "attn.c_proj.weight"), {d, d}});
    out.push_back({layer_name(i, "attn.c_proj.bias"), {d}});
    out.push_back({layer_name(i, "ln_2.weight"), {d}});
    out.push_back({layer_name(i, "ln_2.bias"), {d}});
    out.push_back({layer_name(i, "mlp.c_fc.weight"), {d, c.d_ff}});
    out.push_back({layer_name(i, "mlp.c_fc.bias"), {c.d_ff}});
    out.push_back({layer_name(i, "mlp.c_proj.weight"), {c.d_ff, d}});
    out.push_back({layer_name(i, "mlp.c_proj.bias"), {d}});
  }
  out.push_back({"ln_f.weight", {d}});
  out.push_back({"ln_f.bias", {d}});
  if (!c.tie_lm_head) out.push_back({"lm_head.weight", {c.vocab_size, d}});
  return out;
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

class TensorTaker {
 public:
  TensorTaker(TensorMap& tensors, const ModelConfig& config) : tensors_(tensors) {
    for (auto& e : expected_tensors(config)) shapes_[e.name] = e.shape;
  }

  std::vector<float> vec(const std::string& name) { return take(name).data; }

  Matrix mat(const std::string& name) {
    auto t = take(name);
    return Matrix(t.shape[0], t.shape[1], std::move(t.data));
  }

 private:
  TensorRecord take(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw LoadError("weights: missing tensor '" + name + "'");
    const auto& want = shapes_.at(name);
    if (it->second.shape != want) {
      throw LoadError("weights: tensor '" + name + "' has shape " + shape_str(it->second.shape) + ", expected " +
                      shape_str(want));
    }
    if (!all_finite(it->second.data)) throw LoadError("weights: tensor '" + name + "' has non-finite values");
    TensorRecord t = std::move(it->second);
    tensors_.erase(it);
    return t;
  }

  TensorMap& tensors_;
  std::map<std::string, std::vector<std::size_t>> shapes_;
};

Weights weights_from_tensors(TensorMap tensors, const ModelConfig& config) {
  config.validate();
  TensorTaker take(tensors, config);
  Weights w;
  w.config = config;
  w.token_embedding = take.mat("wte");
  if (config.positional_kind == PositionalKind::learned_absolute) w.positional_table = take.mat("wpe");
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    LayerWeights l;
    l.ln1_gamma = take.vec(layer_name(i, "ln_1.weight"));
    l.ln1_beta = take.vec(layer_name(i, "ln_1.bias"));
    l.attn_qkv = take.mat(layer_name(i, "attn.c_attn.weight"));
    l.attn_qkv_bias = take.vec(layer_name(i, "attn.c_attn.bias"));
    l.attn_proj = take.mat(layer_name(i, "attn.c_proj.weight"));
    l.attn_proj_bias = take.vec(layer_name(i, "attn.c_proj.bias"));
    l.ln2_gamma = take.vec(layer_name(i, "ln_2.weight"));
    l.ln2_beta = take.vec(layer_name(i, "ln_2.bias"));
    l.mlp_fc = take.mat(layer_name(i, "mlp.c_fc.weight"));
    l.mlp_fc_bias = take.vec(layer_name(i, "mlp.c_fc.bias"));
    l.mlp_proj = take.mat(layer_name(i, "mlp.c_proj.weight"));
    l.mlp_proj_bias = take.vec(layer_name(i, "mlp.c_proj.bias"));
    w.layers.push_back(std::move(l));
  }
  w.ln_f_gamma = take.vec("ln_f.weight");
  w.ln_f_beta = take.vec("ln_f.bias");
  if (!config.tie_lm_head) w.lm_head = take.mat("lm_head.weight");
  return w;
}

TensorRecord record(const Matrix& m) {
  return {{m.rows(), m.cols()}, std::vector<float>(m.values().begin(), m.values().end())};
}

TensorRecord record(const std::vector<float>& v) { return {{v.size()}, v}; }

TensorMap to_tensors(const Weights& w) {
  TensorMap t;
  t["wte"] = record(w.token_embedding);
  if (w.config.positional_kind == PositionalKind::learned_absolute) t["wpe"] = record(w.positional_table);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const auto& l = w.layers[i];
    t[layer_name(i, "ln_1.weight")] = record(l.ln1_gamma);
    t[layer_name(i, "ln_1.bias")] = record(l.ln1_beta);
    t[layer_name(i, "attn.c_attn.weight")] = record(l.attn_qkv);
    t[layer_name(i, "attn.c_attn.bias")] = record(l.attn_qkv_bias);
    t[layer_name(i, "attn.c_proj.weight")] = record(l.attn_proj);
    t[layer_name(i, "attn.c_proj.bias")] = record(l.attn_proj_bias);
    t[layer_name(i, "ln_2.weight")] = record(l.ln2_gamma);
    t[layer_name(i, "ln_2.bias")] = record(l.ln2_beta);
    t[layer_name(i, "mlp.c_fc.weight")] = record(l.mlp_fc);
    t[layer_name(i, "mlp.c_fc.bias")] = record(l.mlp_fc_bias);
    t[layer_name(i, "mlp.c_proj.weight")] = record(l.mlp_proj);
    t[layer_name(i, "mlp.c_proj.bias")] = record(l.mlp_proj_bias);
  }
  t["ln_f.weight"] = record(w.ln_f_gamma);
  t["ln_f.bias"] = record(w.ln_f_beta);
  if (!w.config.tie_lm_head) t["lm_head.weight"] = record(w.lm_head);
  return t;
}

}  // namespace

Weights load_weights(const std::filesystem::path& container, const ModelConfig& config) {
  return weights_from_tensors(read_container(container), config);
}

void save_weights(const std::filesystem::path& container, const Weights& weights) {
  write_container(container, to_tensors(weights));
}

Weights random_weights(const ModelConfig& config, std::uint64_t seed, float scale) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  TensorMap tensors;
  for (const auto& e : expected_tensors(config)) {
    std::size_t n = 1;
    for (std::size_t d : e.shape) n *= d;
    TensorRecord t{e.shape, std::vector<float>(n)};
    const bool gain = e.name.find("ln_") != std::string::npos && e.name.ends_with(".weight");
    for (float& v : t.data) v = (gain ? 1.0f : 0.0f) + scale * normal(rng);
    tensors.emplace(e.name, std::move(t));
  }
  return weights_from_tensors(std::move(tensors), config);
}

}  // namespace pcw

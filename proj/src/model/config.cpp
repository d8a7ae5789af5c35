#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcw/container.hpp"
#include "pcw/error.hpp"
#include "pcw/model.hpp"

namespace pcw {

using nlohmann::json;

void ModelConfig::validate() const {
  if (n_layers == 0) throw ConfigError("config: n_layers must be positive");
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    throw ConfigError("config: d_model must be a positive multiple of n_heads");
  }
  if (d_ff == 0) throw ConfigError("config: d_ff must be positive");
  if (vocab_size == 0) throw ConfigError("config: vocab_size must be positive");
  if (max_positions < 2) throw ConfigError("config: max_positions must be at least 2");
  if (!(ln_eps > 0.0f)) throw ConfigError("config: ln_eps must be positive");
  if (positional_kind == PositionalKind::rotary && head_dim() % 2 != 0) {
    throw ConfigError("config: rotary embeddings need an even head dimension");
  }
}

ModelConfig parse_config(const std::string& json_text) {
  ModelConfig c;
  try {
    const json j = json::parse(json_text);
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_positions = j.at("max_positions").get<std::size_t>();
    const auto kind = j.value("positional_kind", std::string("learned_absolute"));
    if (kind == "learned_absolute") {
      c.positional_kind = PositionalKind::learned_absolute;
    } else if (kind == "rotary") {
      c.positional_kind = PositionalKind::rotary;
    } else {
      throw ConfigError("config: unknown positional_kind '" + kind + "'");
    }
    c.ln_eps = j.value("ln_eps", 1e-5f);
    c.tie_lm_head = j.value("tie_lm_head", true);
    const auto gelu = j.value("gelu", std::string("tanh"));
    if (gelu == "tanh") {
      c.gelu = GeluKind::tanh;
    } else if (gelu == "erf") {
      c.gelu = GeluKind::erf;
    } else {
      throw ConfigError("config: unknown gelu variant '" + gelu + "'");
    }
    c.rotary_base = j.value("rotary_base", 10000.0f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_to_json(const ModelConfig& c) {
  json j;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["positional_kind"] = c.positional_kind == PositionalKind::rotary ? "rotary" : "learned_absolute";
  j["ln_eps"] = c.ln_eps;
  j["tie_lm_head"] = c.tie_lm_head;
  j["gelu"] = c.gelu == GeluKind::tanh ? "tanh" : "erf";
  j["rotary_base"] = c.rotary_base;
  return j.dump(2) + "\n";
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const ModelConfig& config) {
  write_file_atomic(path, config_to_json(config));
}

}  // namespace pcw

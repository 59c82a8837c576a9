#include "ecf/runconfig.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "ecf/common.hpp"

namespace ecf {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_int(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto r = std::from_chars(begin, end, out);
  check<ConfigError>(r.ec == std::errc() && r.ptr == end,
                     "config key " + key + " needs an integer, got '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto r = std::from_chars(begin, end, out);
  check<ConfigError>(r.ec == std::errc() && r.ptr == end,
                     "config key " + key + " needs a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key " + key + " needs true or false, got '" + value + "'");
}

std::string fmt_int(int64_t v) { return std::to_string(v); }
std::string fmt_u64(uint64_t v) { return std::to_string(v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct KeyDef {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Sorted by key; canonical_config emits them in this order.
const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {"data.blur_sigma", [](const RunConfig& c) { return fmt_double(c.phantom.blur_sigma); },
       [](RunConfig& c, const std::string& v) { c.phantom.blur_sigma = parse_double("data.blur_sigma", v); }},
      {"data.count", [](const RunConfig& c) { return fmt_int(c.data_count); },
       [](RunConfig& c, const std::string& v) { c.data_count = parse_int<int>("data.count", v); }},
      {"data.ellipses", [](const RunConfig& c) { return fmt_int(c.phantom.ellipses); },
       [](RunConfig& c, const std::string& v) { c.phantom.ellipses = parse_int<int>("data.ellipses", v); }},
      {"data.manifest", [](const RunConfig& c) { return c.data_manifest; },
       [](RunConfig& c, const std::string& v) { c.data_manifest = v; }},
      {"data.noise_sigma", [](const RunConfig& c) { return fmt_double(c.phantom.noise_sigma); },
       [](RunConfig& c, const std::string& v) { c.phantom.noise_sigma = parse_double("data.noise_sigma", v); }},
      {"data.size", [](const RunConfig& c) { return fmt_int(c.phantom.size); },
       [](RunConfig& c, const std::string& v) { c.phantom.size = parse_int<int>("data.size", v); }},
      {"model.base_channels", [](const RunConfig& c) { return fmt_int(c.model.base_channels); },
       [](RunConfig& c, const std::string& v) { c.model.base_channels = parse_int<int>("model.base_channels", v); }},
      {"model.edge_residual_blocks", [](const RunConfig& c) { return fmt_int(c.model.edge_residual_blocks); },
       [](RunConfig& c, const std::string& v) { c.model.edge_residual_blocks = parse_int<int>("model.edge_residual_blocks", v); }},
      {"model.heads", [](const RunConfig& c) { return fmt_int(c.model.heads); },
       [](RunConfig& c, const std::string& v) { c.model.heads = parse_int<int>("model.heads", v); }},
      {"model.norm_eps", [](const RunConfig& c) { return fmt_double(c.model.norm_eps); },
       [](RunConfig& c, const std::string& v) { c.model.norm_eps = parse_double("model.norm_eps", v); }},
      {"model.reduction", [](const RunConfig& c) { return fmt_int(c.model.reduction); },
       [](RunConfig& c, const std::string& v) { c.model.reduction = parse_int<int>("model.reduction", v); }},
      {"model.residual_blocks", [](const RunConfig& c) { return fmt_int(c.model.residual_blocks); },
       [](RunConfig& c, const std::string& v) { c.model.residual_blocks = parse_int<int>("model.residual_blocks", v); }},
      {"model.scale", [](const RunConfig& c) { return fmt_int(c.model.scale); },
       [](RunConfig& c, const std::string& v) { c.model.scale = parse_int<int>("model.scale", v); }},
      {"model.ttm_alternative_binding", [](const RunConfig& c) { return fmt_bool(c.model.ttm_alternative_binding); },
       [](RunConfig& c, const std::string& v) { c.model.ttm_alternative_binding = parse_bool("model.ttm_alternative_binding", v); }},
      {"model.use_alignment", [](const RunConfig& c) { return fmt_bool(c.model.use_alignment); },
       [](RunConfig& c, const std::string& v) { c.model.use_alignment = parse_bool("model.use_alignment", v); }},
      {"model.use_structure_branch", [](const RunConfig& c) { return fmt_bool(c.model.use_structure_branch); },
       [](RunConfig& c, const std::string& v) { c.model.use_structure_branch = parse_bool("model.use_structure_branch", v); }},
      {"model.use_texture_transfer", [](const RunConfig& c) { return fmt_bool(c.model.use_texture_transfer); },
       [](RunConfig& c, const std::string& v) { c.model.use_texture_transfer = parse_bool("model.use_texture_transfer", v); }},
      {"out.dir", [](const RunConfig& c) { return c.out_dir; },
       [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"seed", [](const RunConfig& c) { return fmt_u64(c.seed()); },
       [](RunConfig& c, const std::string& v) { c.set_seed(parse_int<uint64_t>("seed", v)); }},
      {"train.batch_size", [](const RunConfig& c) { return fmt_int(c.train.batch_size); },
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_int<int>("train.batch_size", v); }},
      {"train.beta1", [](const RunConfig& c) { return fmt_double(c.train.adam.beta1); },
       [](RunConfig& c, const std::string& v) { c.train.adam.beta1 = parse_double("train.beta1", v); }},
      {"train.beta2", [](const RunConfig& c) { return fmt_double(c.train.adam.beta2); },
       [](RunConfig& c, const std::string& v) { c.train.adam.beta2 = parse_double("train.beta2", v); }},
      {"train.checkpoint_every", [](const RunConfig& c) { return fmt_int(c.train.checkpoint_every); },
       [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = parse_int<int>("train.checkpoint_every", v); }},
      {"train.epochs", [](const RunConfig& c) { return fmt_int(c.train.epochs); },
       [](RunConfig& c, const std::string& v) { c.train.epochs = parse_int<int>("train.epochs", v); }},
      {"train.eps", [](const RunConfig& c) { return fmt_double(c.train.adam.eps); },
       [](RunConfig& c, const std::string& v) { c.train.adam.eps = parse_double("train.eps", v); }},
      {"train.holdout", [](const RunConfig& c) { return fmt_int(c.train.holdout); },
       [](RunConfig& c, const std::string& v) { c.train.holdout = parse_int<int>("train.holdout", v); }},
      {"train.lr", [](const RunConfig& c) { return fmt_double(c.train.adam.lr); },
       [](RunConfig& c, const std::string& v) { c.train.adam.lr = parse_double("train.lr", v); }},
  };
  return defs;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& def : key_defs())
    if (key == def.key) return &def;
  return nullptr;
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  check<ConfigError>(eq != std::string::npos,
                     "expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  check<ConfigError>(!key.empty(), "empty config key in '" + assignment + "'");
  const KeyDef* def = find_key(key);
  check<ConfigError>(def != nullptr, "unknown config key: " + key);
  def->set(cfg, value);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  check<IoError>(is.good(), "cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& def : key_defs()) {
    out += def.key;
    out += '=';
    out += def.get(cfg);
    out += '\n';
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  const uint64_t h = fnv1a64(canonical_config(cfg));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ecf

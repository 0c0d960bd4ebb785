#include "cdsim/config.hpp"

#include <cmath>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>
#include <type_traits>

#include <yaml-cpp/yaml.h>

#include "cdsim/errors.hpp"
#include "defaults_yaml.hpp"

namespace cdsim {

namespace {

nlohmann::json scalar_to_json(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  if (s == "~" || s == "null" || s.empty()) return nullptr;
  // YAML 1.2 core schema: plain words such as "inf" or "nan" stay strings.
  static const std::regex int_re(R"([-+]?[0-9]+)");
  static const std::regex float_re(R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
  if (std::regex_match(s, int_re)) {
    errno = 0;
    const long long i = std::strtoll(s.c_str(), nullptr, 10);
    if (errno == 0) return i;
  }
  if (std::regex_match(s, int_re) || std::regex_match(s, float_re)) {
    return std::strtod(s.c_str(), nullptr);
  }
  if (s == ".inf" || s == "+.inf") return std::numeric_limits<double>::infinity();
  if (s == "-.inf") return -std::numeric_limits<double>::infinity();
  if (s == ".nan") return std::numeric_limits<double>::quiet_NaN();
  return s;
}

nlohmann::json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      nlohmann::json obj = nlohmann::json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

const char* kind_name(const nlohmann::json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "list";
  if (j.is_object()) return "mapping";
  return "null";
}

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  return std::string(kind_name(a)) == kind_name(b);
}

void merge(nlohmann::json& base, const nlohmann::json& user, const std::string& prefix) {
  if (!user.is_object()) {
    throw ConfigError("config " + (prefix.empty() ? std::string("document") : "key '" + prefix + "'") +
                      " must be a mapping");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, path);
    } else if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + path + "' expects a " + kind_name(slot) +
                        ", got a " + kind_name(value));
    } else {
      slot = value;
    }
  }
}

template <class T>
T get(const nlohmann::json& doc, const char* dotted) {
  const nlohmann::json* node = &doc;
  std::string key(dotted);
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = key.find('.', start);
    node = &node->at(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    if (node->is_number_float() || (std::is_unsigned_v<T> && node->is_number() &&
                                    node->template get<double>() < 0.0)) {
      throw ConfigError(std::string("config key '") + dotted +
                        "' must be a non-negative integer");
    }
  }
  try {
    return node->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + dotted + "' has the wrong type");
  }
}

double positive(double v, const char* key) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("config key '") + key + "' must be positive");
  }
  return v;
}

}  // namespace

std::string_view default_config_text() { return kDefaultsYaml; }

const nlohmann::json& default_config() {
  static const nlohmann::json doc = parse_yaml(kDefaultsYaml, "defaults.yaml");
  return doc;
}

nlohmann::json parse_yaml(std::string_view text, std::string_view source) {
  try {
    const YAML::Node root = YAML::Load(std::string(text));
    nlohmann::json j = yaml_to_json(root);
    if (j.is_null()) j = nlohmann::json::object();
    return j;
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    // A per-run manifest inside a sweep nests the sweep's config one level down.
    if (j.contains("config")) j = j.at("config");
    if (j.is_object() && j.contains("sweep_config")) return j.at("sweep_config");
    return j;
  }
  return parse_yaml(ss.str(), path.string());
}

nlohmann::json resolve_config(const nlohmann::json& user) {
  nlohmann::json doc = default_config();
  merge(doc, user, "");
  return doc;
}

std::filesystem::path RunConfig::run_dir() const {
  return out_dir / experiment() / label;
}

RunConfig interpret(const nlohmann::json& doc) {
  RunConfig c;
  c.document = doc;
  c.label = get<std::string>(doc, "label");
  if (c.label.empty() || c.label.find('/') != std::string::npos) {
    throw ConfigError("config key 'label' must be a non-empty name without '/'");
  }

  RunSpec& s = c.sweep.base;
  s.kind = experiment_kind_from_string(get<std::string>(doc, "experiment"));
  s.protocol = get<std::string>(doc, "protocol");
  s.model = get<std::string>(doc, "model");
  try {
    (void)protocol_by_name(s.protocol);
    (void)model_by_name(s.model);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto seed = get<long long>(doc, "seed");
  if (seed < 0) throw ConfigError("config key 'seed' must be non-negative");
  s.seed = static_cast<std::uint64_t>(seed);
  const auto n = get<long long>(doc, "n");
  if (n < 3) throw ConfigError("config key 'n' must be at least 3");
  s.n = static_cast<std::size_t>(n);
  s.dt = get<double>(doc, "dt");
  if (s.dt < 0.0) throw ConfigError("config key 'dt' must be >= 0");
  s.tau = positive(get<double>(doc, "tau"), "tau");
  s.cd_order = get<int>(doc, "cd_order");
  if (s.cd_order < 0 || s.cd_order > 12) throw ConfigError("config key 'cd_order' must lie in [0, 12]");
  s.beta_f = positive(get<double>(doc, "linear.beta_f"), "linear.beta_f");
  s.v = positive(get<double>(doc, "linear.v"), "linear.v");

  const auto wait_kind = wait_kind_from_string(get<std::string>(doc, "wait.kind"));
  const double fixed = get<double>(doc, "wait.fixed");
  const double lo = get<double>(doc, "wait.min");
  const double hi = get<double>(doc, "wait.max");
  auto policy = [&](WaitPolicy::Kind k) {
    switch (k) {
      case WaitPolicy::Kind::fixed: return WaitPolicy::fixed(fixed);
      case WaitPolicy::Kind::uniform: return WaitPolicy::uniform(lo, hi);
      default: return WaitPolicy::none();
    }
  };
  s.wait = policy(wait_kind);
  s.wait.validate();

  SweepSpec& sw = c.sweep;
  sw.axis = sweep_axis_from_string(get<std::string>(doc, "sweep.axis"));
  sw.common_seed = get<bool>(doc, "sweep.common_seed");
  sw.tau = get<std::vector<double>>(doc, "sweep.tau");
  sw.cd_order = get<std::vector<int>>(doc, "sweep.cd_order");
  sw.beta_f = get<std::vector<double>>(doc, "sweep.beta_f");
  sw.v = get<std::vector<double>>(doc, "sweep.v");
  for (const auto& k : get<std::vector<std::string>>(doc, "sweep.wait_kind")) {
    sw.wait.push_back(policy(wait_kind_from_string(k)));
    sw.wait.back().validate();
  }
  for (double t : sw.tau) positive(t, "sweep.tau");
  for (double b : sw.beta_f) positive(b, "sweep.beta_f");
  for (double v : sw.v) positive(v, "sweep.v");
  for (int l : sw.cd_order) {
    if (l < 0 || l > 12) throw ConfigError("config key 'sweep.cd_order' entries must lie in [0, 12]");
  }
  (void)expand(sw);  // rejects empty axes

  c.cd.mu = get<double>(doc, "cd.mu");
  c.cd.grid_size = get<std::size_t>(doc, "cd.grid_size");
  if (c.cd.grid_size < 2) throw ConfigError("config key 'cd.grid_size' must be at least 2");
  c.cd.reference_tau = positive(get<double>(doc, "cd.reference_tau"), "cd.reference_tau");
  c.cd.reference_n = get<std::size_t>(doc, "cd.reference_n");
  if (c.cd.reference_n < 3) throw ConfigError("config key 'cd.reference_n' must be at least 3");
  c.cd.seed = get<std::uint64_t>(doc, "cd.seed");
  c.cd.max_degree = get<int>(doc, "cd.max_degree");
  if (c.cd.max_degree < 4 || c.cd.max_degree > 120) {
    throw ConfigError("config key 'cd.max_degree' must lie in [4, 120]");
  }

  c.cd.moments = moment_source_from_string(get<std::string>(doc, "cd.moments"));

  c.agp_order = get<int>(doc, "agp.order");
  if (c.agp_order < 1 || c.agp_order > 12) throw ConfigError("config key 'agp.order' must lie in [1, 12]");
  c.agp_embed_basis = get<bool>(doc, "agp.embed_basis");
  c.agp_query_beta = get<std::vector<double>>(doc, "agp.query_beta");

  c.out_dir = get<std::string>(doc, "output.dir");
  c.dump_trajectories = get<bool>(doc, "output.dump_trajectories");
  c.dump_max_points = get<std::size_t>(doc, "output.dump_max_points");
  c.dump_stride = get<std::size_t>(doc, "output.dump_stride");
  if (c.dump_stride == 0) throw ConfigError("config key 'output.dump_stride' must be positive");
  return c;
}

void set_override(nlohmann::json& doc, std::string_view dotted_key,
                  nlohmann::json value) {
  nlohmann::json patch = value;
  std::string key(dotted_key);
  for (std::size_t dot = key.rfind('.'); dot != std::string::npos; dot = key.rfind('.')) {
    patch = nlohmann::json{{key.substr(dot + 1), patch}};
    key.resize(dot);
  }
  patch = nlohmann::json{{key, patch}};
  merge(doc, patch, "");
}

}  // namespace cdsim

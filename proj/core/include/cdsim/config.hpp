#pragma once

// Run configuration: YAML documents validated against the embedded defaults.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdsim/experiments.hpp"

namespace cdsim {

/// The shipped defaults document, which doubles as the schema.
const nlohmann::json& default_config();
std::string_view default_config_text();

/// YAML text to JSON. Plain scalars that parse as numbers or booleans become
/// numbers or booleans; quoted scalars stay strings. Throws ConfigError.
nlohmann::json parse_yaml(std::string_view text, std::string_view source = "<string>");

/// A YAML config, or a manifest.json whose embedded "config" is used.
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Overlays `user` on the defaults. Unknown keys and type mismatches throw
/// ConfigError naming the dotted key.
nlohmann::json resolve_config(const nlohmann::json& user);

/// Typed view of a resolved config.
struct RunConfig {
  nlohmann::json document;
  std::string label;
  SweepSpec sweep;
  CdSettings cd;
  int agp_order = 3;
  bool agp_embed_basis = true;
  std::vector<double> agp_query_beta;
  std::filesystem::path out_dir;
  bool dump_trajectories = false;
  std::size_t dump_max_points = 4;
  std::size_t dump_stride = 100;

  std::string experiment() const { return std::string(to_string(sweep.base.kind)); }
  /// <out_dir>/<experiment>/<label>
  std::filesystem::path run_dir() const;
};

RunConfig interpret(const nlohmann::json& resolved);

/// Sets `dotted.key` in a resolved document, for command-line overrides.
void set_override(nlohmann::json& doc, std::string_view dotted_key,
                  nlohmann::json value);

}  // namespace cdsim

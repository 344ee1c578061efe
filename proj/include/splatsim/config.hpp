#pragma once

#include "splatsim/material.hpp"
#include "splatsim/mpm.hpp"
#include "splatsim/padding.hpp"
#include "splatsim/reconstruct.hpp"
#include "splatsim/renderer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace splatsim {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8765;
  double max_steps_per_sec = 30.0;
  int width = 640;
  int height = 512;

  void validate() const;
};

/// Every tunable of the pipeline. Sections map one-to-one onto config.json objects.
struct PipelineConfig {
  MaterialParams material;
  OptimConfig optim;
  RenderOptions render;
  PaddingOptions padding;
  SimConfig sim;
  ServiceConfig service;
  std::uint64_t seed = 0;
  /// Set once a material section or override was read; a scene's stored material
  /// is used otherwise.
  bool material_overridden = false;

  /// Optimizer settings with the shared render options and seed applied.
  OptimConfig optim_config() const;
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// Overlays `j` onto `base`. Unknown keys and wrongly typed values raise ValidationError.
PipelineConfig merge_json(const PipelineConfig& base, const nlohmann::json& j);
PipelineConfig load_config(const std::string& path, const PipelineConfig& base = {});
/// Applies "section.field=value" overrides; value is parsed as JSON, falling back to a string.
PipelineConfig apply_overrides(const PipelineConfig& base, const std::vector<std::string>& assignments);

}  // namespace splatsim

// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/scene/train_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dgs {

namespace {

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field make_field(T TrainConfig::* member) {
  return Field{
      [member](TrainConfig& c, const std::string& s) {
        std::istringstream in(s);
        T v;
        if constexpr (std::is_same_v<T, bool>) {
          std::string word;
          in >> word;
          v = (word == "true" || word == "1");
        } else {
          in >> v;
        }
        if (in.fail()) throw FormatError("bad config value: " + s);
        c.*member = v;
      },
      [member](const TrainConfig& c) {
        std::ostringstream out;
        if constexpr (std::is_same_v<T, bool>)
          out << ((c.*member) ? "true" : "false");
        else
          out << (c.*member);
        return out.str();
      }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"lambda_eikonal", make_field(&TrainConfig::lambda_eikonal)},
      {"lambda_nd", make_field(&TrainConfig::lambda_nd)},
      {"lambda_l1", make_field(&TrainConfig::lambda_l1)},
      {"lambda_ssim", make_field(&TrainConfig::lambda_ssim)},
      {"lambda_mask", make_field(&TrainConfig::lambda_mask)},
      {"lambda_tv", make_field(&TrainConfig::lambda_tv)},
      {"iterations", make_field(&TrainConfig::iterations)},
      {"phase_a_fraction", make_field(&TrainConfig::phase_a_fraction)},
      {"rays_per_batch", make_field(&TrainConfig::rays_per_batch)},
      {"samples_per_ray", make_field(&TrainConfig::samples_per_ray)},
      {"stratified_samples", make_field(&TrainConfig::stratified_samples)},
      {"lr_diffuse", make_field(&TrainConfig::lr_diffuse)},
      {"lr_specular", make_field(&TrainConfig::lr_specular)},
      {"lr_roughness", make_field(&TrainConfig::lr_roughness)},
      {"lr_normal", make_field(&TrainConfig::lr_normal)},
      {"lr_opacity", make_field(&TrainConfig::lr_opacity)},
      {"lr_environment", make_field(&TrainConfig::lr_environment)},
      {"lr_sdf", make_field(&TrainConfig::lr_sdf)},
      {"lr_sdf_color", make_field(&TrainConfig::lr_sdf_color)},
      {"lr_deviation", make_field(&TrainConfig::lr_deviation)},
      {"densify_from", make_field(&TrainConfig::densify_from)},
      {"densify_until", make_field(&TrainConfig::densify_until)},
      {"densify_interval", make_field(&TrainConfig::densify_interval)},
      {"densify_grad_threshold", make_field(&TrainConfig::densify_grad_threshold)},
      {"prune_opacity", make_field(&TrainConfig::prune_opacity)},
      {"train_env_res", make_field(&TrainConfig::train_env_res)},
      {"train_precompute_samples", make_field(&TrainConfig::train_precompute_samples)},
      {"init_gaussians", make_field(&TrainConfig::init_gaussians)},
      {"grid_cells", make_field(&TrainConfig::grid_cells)},
      {"reseed_at_phase_b", make_field(&TrainConfig::reseed_at_phase_b)},
      {"lr_decay", make_field(&TrainConfig::lr_decay)},
      {"white_background", make_field(&TrainConfig::white_background)},
      {"image_dump_interval", make_field(&TrainConfig::image_dump_interval)},
      {"seed", make_field(&TrainConfig::seed)},
      {"threads", make_field(&TrainConfig::threads)},
  };
  return table;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config: " + path);
  TrainConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      // blank or comment-only line
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw FormatError("config line " + std::to_string(line_no) + " is not key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      const size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end())
      throw FormatError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
    it->second.set(config, value);
  }
  if (!config.valid()) throw ConsistencyError("config violates invariants");
  return config;
}

void save_train_config(const TrainConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for write: " + path);
  for (const auto& [key, field] : fields()) out << key << " = " << field.get(config) << "\n";
}

}  // namespace dgs

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/strategies.hpp"
#include "labelforge/verification.hpp"

namespace labelforge {

struct ServerSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path webroot;
  /// Env var holding the operator token. Unset means operator endpoints
  /// are open (loopback deployments only).
  std::string operator_token_env = "LABELFORGE_OPERATOR_TOKEN";
};

struct WorkflowDefaults {
  ResolutionPolicy policy = ResolutionPolicy::any_reject_drops;
  double overlap = 0.1;
  /// Zero lets assignment pick the smallest feasible cap.
  std::size_t per_coder_cap = 0;
  double split_ratio = 0.7;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 100;
  std::size_t workers = 4;
};

/// Operator configuration, read from TOML (or JSON). Secrets are never
/// part of it: backends name the env var that holds their credential.
struct AppConfig {
  std::filesystem::path store = "labelforge.db";
  ServerSettings server;
  WorkflowDefaults defaults;
  std::vector<BackendConfig> backends;
  std::vector<PromptTemplate> templates;
  /// Strategy configs making up the crowd ensemble.
  std::vector<StrategyConfig> crowd;

  /// Relative paths are resolved against `base_dir`.
  static AppConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static AppConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  TemplateSet template_set() const;
  const BackendConfig& backend(const std::string& name) const;
};

}  // namespace labelforge

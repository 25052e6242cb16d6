#include "labelforge/config.hpp"

#include <set>

#include <fmt/format.h>

#include "labelforge/corpus.hpp"
#include "labelforge/error.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError(fmt::format("{}: unknown key '{}'", where, k));
  }
}

// Inline credentials are refused outright so they never land in snapshots.
void reject_inline_secrets(const json& backend) {
  static const std::set<std::string> kSecretKeys{"api_key", "apikey", "key", "token", "secret", "password"};
  for (const auto& [k, v] : backend.items()) {
    if (kSecretKeys.count(ascii_lower(k))) {
      throw ConfigError(fmt::format("backend '{}': '{}' must not appear in config; put the secret in an env var and "
                                    "reference it with auth.env",
                                    backend.value("name", std::string{"?"}), k));
    }
  }
}

fs::path resolve_path(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

AppConfig AppConfig::from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"store", "server", "defaults", "backends", "templates", "crowd"}, "config");
  AppConfig c;
  try {
    if (j.contains("store")) c.store = j["store"].get<std::string>();
    c.store = resolve_path(c.store, base_dir);
    if (j.contains("server")) {
      const auto& s = j["server"];
      reject_unknown(s, {"host", "port", "webroot", "operator_token_env"}, "[server]");
      c.server.host = s.value("host", c.server.host);
      c.server.port = s.value("port", c.server.port);
      if (s.contains("webroot")) c.server.webroot = resolve_path(s["webroot"].get<std::string>(), base_dir);
      c.server.operator_token_env = s.value("operator_token_env", c.server.operator_token_env);
    }
    if (j.contains("defaults")) {
      const auto& d = j["defaults"];
      reject_unknown(d, {"policy", "overlap", "per_coder_cap", "split_ratio", "seed", "checkpoint_every", "workers"},
                     "[defaults]");
      if (d.contains("policy")) c.defaults.policy = resolution_policy_from_string(d["policy"].get<std::string>());
      c.defaults.overlap = d.value("overlap", c.defaults.overlap);
      c.defaults.per_coder_cap = d.value("per_coder_cap", c.defaults.per_coder_cap);
      c.defaults.split_ratio = d.value("split_ratio", c.defaults.split_ratio);
      c.defaults.seed = d.value("seed", c.defaults.seed);
      c.defaults.checkpoint_every = d.value("checkpoint_every", c.defaults.checkpoint_every);
      c.defaults.workers = d.value("workers", c.defaults.workers);
    }
    std::set<std::string> names;
    for (const auto& b : j.value("backends", json::array())) {
      reject_inline_secrets(b);
      auto cfg = BackendConfig::from_json(b);
      if (!names.insert(cfg.name).second) throw ConfigError(fmt::format("duplicate backend '{}'", cfg.name));
      c.backends.push_back(std::move(cfg));
    }
    for (const auto& t : j.value("templates", json::array())) c.templates.push_back(PromptTemplate::from_json(t));
    for (const auto& s : j.value("crowd", json::array())) {
      auto sc = StrategyConfig::from_json(s);
      if (!names.count(sc.backend)) {
        throw ConfigError(fmt::format("crowd entry '{}' names unknown backend '{}'", sc.key(), sc.backend));
      }
      c.crowd.push_back(std::move(sc));
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed config: {}", e.what()));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  } catch (const StrategyError& e) {
    throw ConfigError(e.what());
  }
  if (c.server.port < 0 || c.server.port > 65535) throw ConfigError(fmt::format("invalid port {}", c.server.port));
  return c;
}

AppConfig AppConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file {} not found", path.string()));
  json j;
  try {
    j = path.extension() == ".toml" ? parse_toml_file(path) : json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const TaxonomyError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j, path.parent_path());
}

json AppConfig::to_json() const {
  json backends_j = json::array();
  for (const auto& b : backends) backends_j.push_back(b.to_json());
  json crowd_j = json::array();
  for (const auto& s : crowd) crowd_j.push_back(s.to_json());
  json templates_j = json::array();
  for (const auto& t : templates) templates_j.push_back({{"id", t.id}, {"sha", t.fingerprint()}});
  return {{"store", store.string()},
          {"server", {{"host", server.host}, {"port", server.port}, {"webroot", server.webroot.string()}}},
          {"defaults",
           {{"policy", to_string(defaults.policy)},
            {"overlap", defaults.overlap},
            {"per_coder_cap", defaults.per_coder_cap},
            {"split_ratio", defaults.split_ratio},
            {"seed", defaults.seed},
            {"checkpoint_every", defaults.checkpoint_every},
            {"workers", defaults.workers}}},
          {"backends", backends_j},
          {"templates", templates_j},
          {"crowd", crowd_j}};
}

TemplateSet AppConfig::template_set() const {
  TemplateSet set;
  for (const auto& t : templates) set.add(t);
  return set;
}

const BackendConfig& AppConfig::backend(const std::string& name) const {
  for (const auto& b : backends) {
    if (b.name == name) return b;
  }
  throw ConfigError(fmt::format("no backend named '{}' in config", name));
}

}  // namespace labelforge

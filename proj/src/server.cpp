#include "labelforge/server.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "labelforge/error.hpp"
#include "labelforge/pipeline.hpp"
#include "labelforge/strategies.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, std::string kind, const std::string& message)
      : std::runtime_error(message), status(status), kind(std::move(kind)) {}
  int status;
  std::string kind;
};

struct Principal {
  bool op = false;
  std::optional<CoderInfo> coder;
};

enum class Access { open, coder_or_operator, operator_only };

json error_body(const std::string& kind, const std::string& message) {
  return {{"error", kind}, {"message", message}};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError(400, "bad_request", fmt::format("request body is not valid JSON: {}", e.what()));
  }
}

std::optional<std::string> bearer(const httplib::Request& req) {
  const auto auth = req.get_header_value("Authorization");
  if (auth.rfind("Bearer ", 0) == 0) return auth.substr(7);
  if (req.has_param("token")) return req.get_param_value("token");
  return std::nullopt;
}

}  // namespace

struct Server::Impl {
  Store& store;
  AppConfig config;
  std::shared_ptr<Transport> transport;
  httplib::Server http;
  std::mutex jobs_mu;
  std::vector<std::jthread> job_threads;

  Impl(Store& s, AppConfig c, std::shared_ptr<Transport> t)
      : store(s), config(std::move(c)), transport(t ? std::move(t) : make_http_transport()) {
    // The library default adds SO_REUSEPORT, which would let a second
    // instance share the port with this one.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
  }

  std::optional<std::string> operator_token() const {
    const char* v = std::getenv(config.server.operator_token_env.c_str());
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  }

  Principal authenticate(const httplib::Request& req, Access access) const {
    Principal p;
    const auto token = bearer(req);
    const auto op = operator_token();
    if (token) {
      if (op && *token == *op) {
        p.op = true;
        return p;
      }
      p.coder = store.coder_by_token(*token);
      if (!p.coder && access != Access::open) throw HttpError(401, "unauthorized", "unknown token");
    } else if (!op) {
      p.op = true;  // no operator token configured: trusted local deployment
    }
    if (access == Access::operator_only && !p.op) throw HttpError(403, "forbidden", "operator token required");
    if (access == Access::coder_or_operator && !p.op && !p.coder) {
      throw HttpError(401, "unauthorized", "coder or operator token required");
    }
    return p;
  }

  std::string project_for(const httplib::Request& req, const Principal& p, const json& body = json::object()) const {
    if (p.coder) return p.coder->project_id;
    std::string id;
    if (req.has_param("project")) id = req.get_param_value("project");
    if (id.empty() && body.is_object() && body.contains("project")) id = body["project"].get<std::string>();
    if (id.empty()) {
      const auto all = store.projects();
      if (all.size() == 1) return all.front().id;
      throw HttpError(400, "bad_request",
                      all.empty() ? "no projects exist" : "several projects exist; pass ?project=<id>");
    }
    store.project(id);  // throws for unknown ids
    return id;
  }

  using Handler = std::function<json(const httplib::Request&, httplib::Response&, const Principal&)>;

  void route(const std::string& method, const std::string& pattern, Access access, Handler handler) {
    auto wrapped = [this, access, handler](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        const auto principal = authenticate(req, access);
        res.status = 200;
        body = handler(req, res, principal);
      } catch (const HttpError& e) {
        res.status = e.status;
        body = error_body(e.kind, e.what());
      } catch (const ValidationError& e) {
        res.status = 400;
        body = error_body("validation", e.what());
      } catch (const ConflictError& e) {
        res.status = 409;
        body = error_body("conflict", e.what());
      } catch (const NotReadyError& e) {
        res.status = 409;
        body = error_body("not_ready", e.what());
      } catch (const SizingError& e) {
        res.status = 400;
        body = error_body("sizing", e.what());
      } catch (const TaxonomyError& e) {
        res.status = 400;
        body = error_body("taxonomy", e.what());
      } catch (const json::exception& e) {
        res.status = 400;
        body = error_body("bad_request", e.what());
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        res.status = 500;
        body = error_body("internal", e.what());
      }
      res.set_content(body.dump(), "application/json");
    };
    for (const std::string prefix : {"/api/v1", "/api"}) {
      const auto full = prefix + pattern;
      if (method == "GET") {
        http.Get(full, wrapped);
      } else {
        http.Post(full, wrapped);
      }
    }
  }

  void start_job(const std::string& job_id, std::function<json(const std::function<void(const json&)>&)> work) {
    std::lock_guard lock(jobs_mu);
    job_threads.emplace_back([this, job_id, work = std::move(work)] {
      try {
        store.update_job(job_id, "running", json::object());
        auto report = [&](const json& progress) { store.update_job(job_id, "running", progress); };
        auto result = work(report);
        store.update_job(job_id, result.value("halted", false) ? "halted" : "completed", result);
      } catch (const std::exception& e) {
        spdlog::error("job {} failed: {}", job_id, e.what());
        store.update_job(job_id, "failed", {{"error", e.what()}});
      }
    });
  }

  fs::path job_dir(const std::string& job_id) const {
    auto base = config.store.has_parent_path() ? config.store.parent_path() : fs::path(".");
    return base / "jobs" / job_id;
  }

  void import_completions(const fs::path& journal) {
    for (const auto& r : CompletionJournal::load(journal)) store.put_completion(r);
  }

  json crowd_job(const std::string& project, const std::string& job_id, std::vector<StrategyConfig> configs,
                 const std::function<void(const json&)>& report) {
    const auto corpus = store.corpus(project);
    const auto dir = job_dir(job_id);
    fs::create_directories(dir);
    CompletionJournal journal(dir / "completions.jsonl");
    Gateway gateway(transport, &journal);
    for (const auto& b : config.backends) gateway.add_backend(b);
    const auto templates = config.template_set();
    report({{"documents", corpus.size()}, {"configs", configs.size()}});
    CrowdOptions opts;
    opts.workers = config.defaults.workers;
    opts.journal = dir / "pairs.jsonl";
    auto run = run_crowd(corpus, configs, gateway, templates, opts);
    import_completions(dir / "completions.jsonl");
    if (!run.halted) {
      store.put_candidates(project, run.results);
      json snapshot = json::array();
      for (const auto& c : configs) snapshot.push_back(c.to_json());
      store.advance_stage(project, Stage::crowd_done, {{"crowd", snapshot}, {"job", job_id}});
    }
    return {{"executed_pairs", run.executed_pairs}, {"skipped_pairs", run.skipped_pairs}, {"calls", run.calls},
            {"halted", run.halted},                 {"halt_reason", run.halt_reason}};
  }

  json scale_job(const std::string& project, const std::string& job_id, const StrategyConfig& strategy,
                 const std::function<void(const json&)>& report) {
    const auto corpus = store.corpus(project);
    const auto dir = job_dir(job_id);
    fs::create_directories(dir);
    CompletionJournal journal(dir / "completions.jsonl");
    Gateway gateway(transport, &journal);
    for (const auto& b : config.backends) gateway.add_backend(b);
    const auto templates = config.template_set();
    ScaleOptions opts;
    opts.job_id = job_id;
    opts.dir = dir;
    opts.strategy = strategy;
    opts.checkpoint_every = config.defaults.checkpoint_every;
    opts.workers = config.backend(strategy.backend).max_concurrency;
    std::size_t written = 0;
    opts.on_prediction = [&](const ScalePrediction&) {
      if (++written % opts.checkpoint_every == 0) report({{"written", written}, {"total", corpus.size()}});
    };
    store.advance_stage(project, Stage::scaling, {{"job", job_id}, {"strategy", strategy.to_json()}});
    auto summary = run_scale(corpus, gateway, templates, opts);
    import_completions(dir / "completions.jsonl");
    auto out = summary.to_json();
    out["output"] = predictions_path(dir).string();
    return out;
  }

  void install_routes() {
    route("GET", "/health", Access::open, [this](auto&, auto&, auto&) {
      return json{{"status", "ok"}, {"schema_version", store.version()}, {"version", LABELFORGE_VERSION}};
    });

    route("GET", "/projects", Access::operator_only, [this](auto&, auto&, auto&) {
      json out = json::array();
      for (const auto& p : store.projects()) out.push_back(p.to_json());
      return out;
    });

    route("POST", "/projects", Access::operator_only, [this](const httplib::Request& req, httplib::Response& res,
                                                             auto&) {
      const auto body = parse_body(req);
      if (!body.contains("name") || !body.contains("taxonomy")) {
        throw HttpError(400, "bad_request", "name and taxonomy are required");
      }
      const auto tax = Taxonomy::from_json(body["taxonomy"]);
      const auto id = store.create_project(body["name"].get<std::string>(), tax, config.to_json());
      res.status = 201;
      return store.project(id).to_json();
    });

    route("GET", R"(/projects/([^/]+))", Access::operator_only, [this](const httplib::Request& req, auto&, auto&) {
      auto j = store.project(req.matches[1]).to_json();
      j["history"] = store.stage_history(req.matches[1]);
      return j;
    });

    route("GET", "/taxonomy", Access::coder_or_operator, [this](const httplib::Request& req, auto&, auto& p) {
      return store.taxonomy(project_for(req, p))->to_json();
    });

    route("GET", "/coders", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      json out = json::array();
      for (const auto& c : store.coders(project_for(req, p))) {
        out.push_back({{"id", c.id}, {"display_name", c.display_name}, {"role", to_string(c.role)}});
      }
      return out;
    });

    route("GET", "/assignments", Access::coder_or_operator, [this](const httplib::Request& req, auto&, auto& p) {
      const auto project = project_for(req, p);
      std::optional<std::string> coder;
      if (req.has_param("coder")) coder = req.get_param_value("coder");
      if (p.coder) {
        if (coder && *coder != p.coder->coder.id) {
          throw HttpError(403, "forbidden", "coders may only list their own assignments");
        }
        coder = p.coder->coder.id;
      }
      std::optional<std::string> status;
      if (req.has_param("status")) status = req.get_param_value("status");
      json out = json::array();
      for (const auto& a : store.assignments(project, coder)) {
        if (status && to_string(a.status) != *status) continue;
        out.push_back({{"coder_id", a.coder_id},
                       {"doc_id", a.doc_id},
                       {"status", to_string(a.status)},
                       {"assigned_at", a.assigned_at}});
      }
      return out;
    });

    route("GET", R"(/docs/([^/]+))", Access::coder_or_operator, [this](const httplib::Request& req, auto&, auto& p) {
      const auto project = project_for(req, p);
      const std::string doc_id = req.matches[1];
      if (p.coder) {
        bool assigned = false;
        for (const auto& a : store.assignments(project, p.coder->coder.id)) assigned |= a.doc_id == doc_id;
        if (!assigned) throw HttpError(403, "forbidden", fmt::format("'{}' is not assigned to you", doc_id));
      }
      const auto doc = store.document(project, doc_id);
      if (!doc) throw HttpError(404, "not_found", fmt::format("no document '{}'", doc_id));
      const auto tax = store.taxonomy(project);
      const bool with_provenance = req.has_param("provenance") && req.get_param_value("provenance") != "0" &&
                                   req.get_param_value("provenance") != "false";
      json cands = json::array();
      if (auto cr = store.candidates(project, doc_id)) {
        for (const auto& c : cr->candidates) {
          const auto& l = tax->label(c.label);
          json item{{"id", l.id},
                    {"name", l.name},
                    {"description", l.description},
                    {"group", l.group},
                    {"provenance_count", c.provenance.size()}};
          if (with_provenance) {
            json prov = json::array();
            for (const auto& pv : c.provenance) {
              prov.push_back({{"config", pv.config},
                              {"backend", pv.backend},
                              {"strategy", to_string(pv.strategy)},
                              {"fallback", pv.fallback}});
            }
            item["provenance"] = std::move(prov);
          }
          cands.push_back(std::move(item));
        }
      }
      return json{{"id", doc->id}, {"text", doc->text}, {"candidates", cands}};
    });

    route("POST", "/reviews", Access::coder_or_operator,
          [this](const httplib::Request& req, httplib::Response& res, auto& p) {
            const auto body = parse_body(req);
            const auto project = project_for(req, p, body);
            std::string coder;
            if (p.coder) {
              coder = p.coder->coder.id;
            } else if (body.contains("coder_id")) {
              coder = body["coder_id"].get<std::string>();
            } else {
              throw HttpError(400, "bad_request", "coder_id is required for operator submissions");
            }
            if (!body.contains("doc_id")) throw HttpError(400, "bad_request", "doc_id is required");
            DecisionMap decisions;
            const auto raw_decisions = body.value("decisions", json::object());
            for (const auto& [label, d] : raw_decisions.items()) {
              decisions[label] = decision_from_string(d.template get<std::string>());
            }
            std::optional<std::string> key;
            if (body.contains("idempotency_key") && !body["idempotency_key"].is_null()) {
              key = body["idempotency_key"].get<std::string>();
            } else if (req.has_header("Idempotency-Key")) {
              key = req.get_header_value("Idempotency-Key");
            }
            const auto before = store.reviews(project).size();
            auto rec = store.submit_review(project, coder, body["doc_id"].get<std::string>(), decisions,
                                           body.value("none_apply", false), body.value("supersede", false), key);
            res.status = store.reviews(project).size() > before ? 201 : 200;
            return rec.to_json();
          });

    route("GET", "/reviews", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      json out = json::array();
      for (const auto& r : store.reviews(project_for(req, p))) out.push_back(r.to_json());
      return out;
    });

    route("GET", "/progress", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      return store.progress(project_for(req, p));
    });

    route("GET", "/reliability", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      const auto project = project_for(req, p);
      const auto records = store.current_reviews(project);
      return reliability_report(records, *store.taxonomy(project));
    });

    route("POST", "/resolve", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      const auto body = parse_body(req);
      const auto project = project_for(req, p, body);
      const auto policy = body.contains("policy")
                              ? resolution_policy_from_string(body["policy"].get<std::string>())
                              : config.defaults.policy;
      auto resolved = store.resolve(project, policy);
      store.advance_stage(project, Stage::resolved, {{"policy", to_string(policy)}});
      json out = json::array();
      for (const auto& r : resolved) out.push_back(r.to_json());
      return out;
    });

    route("GET", "/resolutions", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      json out = json::array();
      for (const auto& r : store.resolutions(project_for(req, p))) out.push_back(r.to_json());
      return out;
    });

    route("GET", "/jobs", Access::operator_only, [this](const httplib::Request& req, auto&, auto& p) {
      json out = json::array();
      for (const auto& j : store.jobs(project_for(req, p))) out.push_back(j.to_json());
      return out;
    });

    route("GET", R"(/jobs/([^/]+))", Access::operator_only, [this](const httplib::Request& req, auto&, auto&) {
      auto j = store.job(req.matches[1]);
      if (!j) throw HttpError(404, "not_found", fmt::format("no job '{}'", std::string(req.matches[1])));
      return j->to_json();
    });

    route("POST", "/jobs", Access::operator_only,
          [this](const httplib::Request& req, httplib::Response& res, auto& p) {
            const auto body = parse_body(req);
            const auto project = project_for(req, p, body);
            const auto kind = body.value("kind", std::string{});
            if (kind == "crowd") {
              std::vector<StrategyConfig> configs;
              for (const auto& c : body.value("configs", json::array())) configs.push_back(StrategyConfig::from_json(c));
              if (configs.empty()) configs = config.crowd;
              if (configs.empty()) throw HttpError(400, "bad_request", "no crowd configs given or configured");
              for (const auto& c : configs) {
                config.backend(c.backend);
                check_strategy(c, *store.taxonomy(project));
              }
              const auto id = store.create_job(project, kind, body);
              start_job(id, [this, project, id, configs](const auto& report) {
                return crowd_job(project, id, configs, report);
              });
              res.status = 202;
              return json{{"id", id}, {"status", "queued"}};
            }
            if (kind == "scale") {
              if (!body.contains("strategy")) throw HttpError(400, "bad_request", "scale jobs need a strategy");
              auto strategy = StrategyConfig::from_json(body["strategy"]);
              config.backend(strategy.backend);
              check_strategy(strategy, *store.taxonomy(project));
              const auto id = store.create_job(project, kind, body);
              start_job(id, [this, project, id, strategy](const auto& report) {
                return scale_job(project, id, strategy, report);
              });
              res.status = 202;
              return json{{"id", id}, {"status", "queued"}};
            }
            throw HttpError(400, "bad_request", fmt::format("unknown job kind '{}' (crowd or scale)", kind));
          });

    if (!config.server.webroot.empty()) {
      if (!fs::is_directory(config.server.webroot)) {
        throw ConfigError(fmt::format("webroot {} is not a directory", config.server.webroot.string()));
      }
      http.set_mount_point("/", config.server.webroot.string());
    }
    http.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

Server::Server(Store& store, AppConfig config, std::shared_ptr<Transport> transport)
    : impl_(std::make_unique<Impl>(store, std::move(config), std::move(transport))) {
  if (store.version() != Store::kSchemaVersion) {
    throw StoreError(fmt::format("store is at schema version {}, expected {}; run migrations first", store.version(),
                                 Store::kSchemaVersion));
  }
  impl_->install_routes();
}

Server::~Server() {
  stop();
  std::lock_guard lock(impl_->jobs_mu);
  impl_->job_threads.clear();
}

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw ConfigError(fmt::format("cannot bind {}", host));
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) throw ConfigError(fmt::format("cannot bind {}:{}", host, port));
  return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

void Server::wait_until_ready() { impl_->http.wait_until_ready(); }

}  // namespace labelforge

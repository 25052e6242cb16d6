#pragma once

#include <memory>
#include <string>

#include "labelforge/config.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/store.hpp"

namespace labelforge {

/// JSON API under /api/v1 (with /api aliases) plus the static web bundle.
///
/// Coders authenticate with the capability token issued when they were
/// added; it goes in `Authorization: Bearer <token>` or a `token` query
/// parameter. Operator endpoints require the token named by
/// `ServerSettings::operator_token_env` when that variable is set.
class Server {
 public:
  /// `transport` backs crowd and scale jobs; defaults to real HTTP.
  Server(Store& store, AppConfig config, std::shared_ptr<Transport> transport = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws ConfigError
  /// when the address cannot be bound.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();
  void wait_until_ready();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace labelforge

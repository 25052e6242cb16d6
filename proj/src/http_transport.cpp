#include <fmt/format.h>

#include "httplib.h"
#include "labelforge/error.hpp"
#include "labelforge/gateway.hpp"

namespace labelforge {

namespace {

class HttpTransport final : public Transport {
 public:
  HttpReply post(const BackendConfig& backend, const std::string& body, const HeaderList& headers) override {
    httplib::Client client(backend.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(backend.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(backend.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(backend.path, h, body, "application/json");
    if (!res) {
      throw TransportFailure(fmt::format("{}{}: {}", backend.base_url, backend.path, httplib::to_string(res.error())));
    }
    return {res->status, res->body};
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttpTransport>(); }

}  // namespace labelforge

#pragma once

#include <string>

#include "httplib.h"
#include "json.hpp"
#include "paracosm/backends.hpp"

namespace paracosm {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::ConfigError, "endpoint '" + url + "' is not a URL");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// JSON-over-HTTP transport: POSTs the request body to the descriptor's
/// endpoint. 408/429/5xx replies and socket timeouts are retryable; other
/// non-2xx replies are rejections carrying the server's {error} message.
class HttpTransport : public Transport {
 public:
  nlohmann::json post(const BackendDescriptor& backend, const nlohmann::json& body) override {
    auto url = parse_url(backend.endpoint);
    httplib::Client client(url.origin);
    auto secs = static_cast<time_t>(backend.timeout_s);
    auto usecs = static_cast<time_t>((backend.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(url.path, body.dump(), "application/json");
    if (!res) {
      auto err = res.error();
      std::string what = "POST " + backend.endpoint + ": " + httplib::to_string(err);
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read || err == httplib::Error::Write)
        throw Error(ErrorKind::BackendTimeout, what);
      throw Error(ErrorKind::BackendUnavailable, what);
    }
    if (res->status < 200 || res->status >= 300) {
      std::string message = res->body;
      try {
        auto j = nlohmann::json::parse(res->body);
        if (j.contains("error") && j["error"].is_string()) message = j["error"].get<std::string>();
      } catch (const nlohmann::json::exception&) {
      }
      std::string what = backend.endpoint + " -> HTTP " + std::to_string(res->status) + ": " + message;
      if (res->status == 408 || res->status == 504) throw Error(ErrorKind::BackendTimeout, what);
      if (res->status == 429 || res->status >= 500) throw Error(ErrorKind::BackendUnavailable, what);
      throw Error(ErrorKind::BackendRejected, what);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedResponse, backend.endpoint + " returned non-JSON body: " + e.what());
    }
  }
};

}  // namespace paracosm

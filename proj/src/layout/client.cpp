#include "nsplat/layout/client.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "nsplat/core/error.hpp"

namespace nsplat::layout {

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

bool parse_http_url(const std::string& url, ParsedUrl& out) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) return false;
  std::string rest = url.substr(scheme.size());
  const auto slash = rest.find('/');
  std::string hostport = rest.substr(0, slash);
  out.path = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = hostport.find(':');
  if (colon == std::string::npos) {
    out.host = hostport;
    out.port = 80;
  } else {
    out.host = hostport.substr(0, colon);
    try {
      out.port = std::stoi(hostport.substr(colon + 1));
    } catch (...) {
      return false;
    }
  }
  return !out.host.empty() && out.port > 0 && out.port < 65536;
}

}  // namespace

LayoutFetch request_layout(const std::string& endpoint,
                           const std::string& description,
                           std::chrono::milliseconds timeout) {
  LayoutFetch result;
  ParsedUrl url;
  if (!parse_http_url(endpoint, url)) {
    result.status = FetchStatus::transport_error;
    result.message = "unsupported endpoint url '" + endpoint +
                     "' (expected http://host[:port][/path])";
    return result;
  }

  nlohmann::json body;
  body["description"] = description;
  body["schema_version"] = 1;

  httplib::Client client(url.host, url.port);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  client.set_connection_timeout(static_cast<time_t>(sec.count()),
                                static_cast<time_t>(usec.count()));
  client.set_read_timeout(static_cast<time_t>(sec.count()),
                          static_cast<time_t>(usec.count()));
  client.set_write_timeout(static_cast<time_t>(sec.count()),
                           static_cast<time_t>(usec.count()));

  const httplib::Result res =
      client.Post(url.path, body.dump(), "application/json");
  if (!res) {
    result.status = FetchStatus::transport_error;
    result.message =
        "request to '" + endpoint + "' failed: " + httplib::to_string(res.error());
    return result;
  }
  if (res->status < 200 || res->status >= 300) {
    result.status = FetchStatus::transport_error;
    result.message = "endpoint '" + endpoint + "' returned status " +
                     std::to_string(res->status);
    return result;
  }

  try {
    result.layout = parse_layout_json(res->body);
  } catch (const Error& e) {
    result.status = FetchStatus::validation_error;
    result.message = e.what();
    return result;
  }
  result.status = FetchStatus::ok;
  return result;
}

}  // namespace nsplat::layout

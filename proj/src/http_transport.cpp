#include "arena/gateway.hpp"

#include <httplib.h>

namespace arena::gateway {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  HttpResponse post(const HttpRequest& request) override {
    auto [origin, path] = split_url(request.url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin.rfind("https://", 0) == 0) return HttpResponse{0, "built without TLS support", {}};
#endif
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (k == "Content-Type") content_type = v;
      else headers.emplace(k, v);
    }
    auto result = client.Post(path, headers, request.body, content_type);
    if (!result) return HttpResponse{0, httplib::to_string(result.error()), {}};
    HttpResponse out;
    out.status = result->status;
    out.body = result->body;
    for (const auto& [k, v] : result->headers) out.headers[k] = v;
    return out;
  }

 private:
  std::chrono::seconds timeout_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(std::chrono::seconds timeout) {
  return std::make_unique<HttpTransport>(timeout);
}

}  // namespace arena::gateway

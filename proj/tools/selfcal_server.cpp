// selfcal-server: HTTP front end for SessionService.
//
// Environment:
//   SELFCAL_BIND          host:port to listen on (default 127.0.0.1:8080)
//   SELFCAL_DATA_DIR      directory for session logs (default ./selfcal-data)
//   SELFCAL_EMBEDDER_URL  remote audio embedder; unset uses the built-in one
//   SELFCAL_EMBEDDER_DIM  embedding length of the remote embedder (default 128)

#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>

#include "selfcal/service.hpp"
#include "selfcal/http_embedder.hpp"
#include "selfcal/server_routes.hpp"

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main() {
  using namespace selfcal;
  const std::string bind = env_or("SELFCAL_BIND", "127.0.0.1:8080");
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "SELFCAL_BIND must be host:port\n";
    return 2;
  }
  const std::string host = bind.substr(0, colon);
  const int port = std::stoi(bind.substr(colon + 1));

  ServiceOptions options;
  options.data_dir = env_or("SELFCAL_DATA_DIR", "selfcal-data");
  if (const std::string url = env_or("SELFCAL_EMBEDDER_URL", ""); !url.empty()) {
    options.embedder = std::make_shared<HttpEmbedder>(url, std::stoul(env_or("SELFCAL_EMBEDDER_DIM", "128")));
  }
  SessionService service(options);
  const std::size_t restored = service.load_existing();

  httplib::Server server;
  register_routes(server, service);
  std::cout << "listening on " << host << ":" << port << " (" << restored << " sessions restored)" << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << bind << "\n";
    return 1;
  }
  return 0;
}

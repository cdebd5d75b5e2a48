#pragma once

// Embedder backed by a remote model server. POSTs
// {"sample_rate": r, "samples": [...]} and expects {"embedding": [...]}.

#include <string>

// signals.hpp (Eigen) must precede httplib.h: <resolv.h> defines a `_res` macro.
#include "selfcal/signals.hpp"
#include "json.hpp"
#include "httplib.h"

namespace selfcal {

class HttpEmbedder final : public Embedder {
 public:
  // base_url like "http://127.0.0.1:9000"; path is the POST route.
  HttpEmbedder(std::string base_url, std::size_t dimension, std::string path = "/embed")
      : base_url_(std::move(base_url)), path_(std::move(path)), dimension_(dimension) {}

  std::size_t dimension() const override { return dimension_; }

  std::vector<double> embed(std::span<const double> window, double sample_rate) const override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    const nlohmann::json request{{"sample_rate", sample_rate}, {"samples", std::vector<double>(window.begin(), window.end())}};
    auto res = client.Post(path_, request.dump(), "application/json");
    if (!res) throw Error(ErrorCode::EmbedderFailure, "embedder unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::EmbedderFailure, "embedder returned " + std::to_string(res->status));
    try {
      const auto body = nlohmann::json::parse(res->body);
      auto out = body.at("embedding").get<std::vector<double>>();
      if (out.size() != dimension_) throw Error(ErrorCode::EmbedderFailure, "embedding has wrong length");
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::EmbedderFailure, std::string("bad embedder response: ") + e.what());
    }
  }

 private:
  std::string base_url_;
  std::string path_;
  std::size_t dimension_;
};

}  // namespace selfcal

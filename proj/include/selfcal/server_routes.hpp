#pragma once

// HTTP routes for SessionService.

#include "selfcal/service.hpp"
#include "httplib.h"

namespace selfcal {

inline void register_routes(httplib::Server& server, SessionService& service) {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<json> {
    if (req.body.empty()) return json::object();
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return std::nullopt;
    return body;
  };
  auto bad_body = [reply](httplib::Response& res, ErrorCode code) {
    reply(res, error_response(Error(code, "request body is not valid JSON")));
  };

  server.Post("/sessions", [=, &service](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse(req);
    if (!body) return bad_body(res, ErrorCode::InvalidConfig);
    reply(res, service.create_session(*body));
  });
  server.Get(R"(/sessions/([^/]+))", [=, &service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_session(req.matches[1]));
  });
  server.Post(R"(/sessions/([^/]+)/actions)", [=, &service](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse(req);
    if (!body) return bad_body(res, ErrorCode::MalformedSignal);
    reply(res, service.post_action(req.matches[1], *body));
  });
  server.Get(R"(/sessions/([^/]+)/dashboard)", [=, &service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_dashboard(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+)/log)", [=, &service](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse r = service.get_log(req.matches[1]);
    if (r.status != 200) return reply(res, r);
    std::string lines;
    for (const auto& record : r.body) lines += record.dump() + "\n";
    res.set_content(lines, "application/x-ndjson");
  });
}

}  // namespace selfcal

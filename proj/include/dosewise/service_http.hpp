#pragma once

#include <functional>
#include <string>

// Eigen first: httplib pulls in <resolv.h>, whose _res macro breaks Eigen.
#include "dosewise/service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace dosewise::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline json error_body(int status, const std::string& msg) {
  return {{"error", {{"status", status}, {"message", msg}}}};
}

// Runs a handler, maps errors to status codes and honours Idempotency-Key on
// mutating requests.
inline void guarded(SessionService& svc, const httplib::Request& req, httplib::Response& res,
                    int ok_status, const std::function<json()>& fn) {
  const std::string key = req.get_header_value("Idempotency-Key");
  const std::string scoped = key.empty() ? "" : req.method + " " + req.path + " " + key;
  if (!scoped.empty()) {
    if (auto hit = svc.lookup_idempotent(scoped)) {
      res.status = hit->first;
      res.set_header("Idempotent-Replay", "true");
      res.set_content(hit->second, "application/json");
      return;
    }
  }
  int status = ok_status;
  json body;
  try {
    body = fn();
  } catch (const ServiceError& e) {
    status = e.status();
    body = error_body(status, e.what());
  } catch (const json::exception& e) {
    status = 422;
    body = error_body(status, std::string("invalid JSON: ") + e.what());
  } catch (const std::exception& e) {
    status = 500;
    body = error_body(status, e.what());
  }
  send_json(res, status, body);
  // Only settled outcomes are replayed; a 500 may succeed on retry.
  if (!scoped.empty() && status < 500) svc.remember_idempotent(scoped, status, res.body);
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw unprocessable(std::string("request body is not JSON: ") + e.what());
  }
}

}  // namespace detail

inline void bind_routes(httplib::Server& server, SessionService& svc) {
  using detail::guarded;
  using detail::parse_body;
  using Req = httplib::Request;
  using Res = httplib::Response;

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(.*)", [](const Req&, Res& res) { res.status = 204; });

  server.Get("/healthz", [](const Req&, Res& res) {
    detail::send_json(res, 200, {{"status", "ok"}, {"api_version", kApiVersion}});
  });
  server.Get("/schema", [](const Req&, Res& res) {
    detail::send_json(res, 200, SessionService::schema());
  });

  server.Post("/sessions", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 201, [&] { return svc.create_session(parse_body(req)); });
  });
  server.Get(R"(/sessions/([^/]+))", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 200, [&] { return svc.get_session(req.matches[1]); });
  });
  server.Get(R"(/sessions/([^/]+)/export)", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 200, [&] { return svc.export_session(req.matches[1]); });
  });
  server.Post(R"(/sessions/([^/]+)/measurements)", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 200,
            [&] { return svc.post_measurement(req.matches[1], parse_body(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/forecast)", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 200, [&] { return svc.forecast(req.matches[1], parse_body(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/optimize)", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 202, [&] { return svc.optimize(req.matches[1], parse_body(req)); });
  });
  server.Get(R"(/sessions/([^/]+)/jobs/([^/]+))", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 200, [&] { return svc.job_status(req.matches[1], req.matches[2]); });
  });
  server.Post(R"(/sessions/([^/]+)/decisions)", [&svc](const Req& req, Res& res) {
    guarded(svc, req, res, 201,
            [&] { return svc.record_decision(req.matches[1], parse_body(req)); });
  });
}

}  // namespace dosewise::service

// dosewise-service: session HTTP API.

#include <csignal>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dosewise/service_http.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dosewise-service: session API for the clinician console"};
  std::string config, host = "127.0.0.1", snapshots;
  int port = 8080;
  app.add_option("--config", config, "model configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--host", host, "bind address");
  app.add_option("--port", port, "port");
  app.add_option("--snapshots", snapshots, "directory for write-through session snapshots");
  CLI11_PARSE(app, argc, argv);

  dosewise::Config cfg;
  try {
    cfg = config.empty() ? dosewise::default_config() : dosewise::load_config(config);
    dosewise::build_problem(cfg);
  } catch (const dosewise::ConfigError& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "config"}, {"message", e.what()}, {"path", e.path()}}}}.dump()
              << "\n";
    return 2;
  }

  dosewise::service::SessionService svc(cfg, snapshots);
  httplib::Server server;
  dosewise::service::bind_routes(server, svc);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << host << ":" << port << " (config " << cfg.hash << ")\n";
  if (!server.listen(host, port)) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  svc.wait_for_jobs();
  return 0;
}

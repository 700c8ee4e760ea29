// Copyright 2026 The instructrl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "instructrl/server.h"

#include <chrono>

#include "httplib.h"
#include "instructrl/errors.h"

namespace instructrl {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw SessionError(400, "bad_json", e.what());
  }
}

// Runs a handler and maps failures onto JSON error bodies.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const SessionError& e) {
    send_json(res, e.status(), e.to_json());
  } catch (const ConfigError& e) {
    send_json(res, 400, SessionError(400, "bad_request", e.what()).to_json());
  } catch (const std::exception& e) {
    send_json(res, 500, SessionError(500, "internal", e.what()).to_json());
  }
}

std::string sse_frame(const nlohmann::json& ev) {
  return "id: " + ev.at("seq").dump() + "\nevent: " + ev.at("event").get<std::string>() +
         "\ndata: " + ev.dump() + "\n\n";
}

}  // namespace

SessionServer::SessionServer(SessionManager& manager)
    : manager_(manager), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

SessionServer::~SessionServer() { stop(); }

void SessionServer::install_routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200,
              {{"protocol_version", kProtocolVersion},
               {"status", "ok"},
               {"sessions", manager_.size()}});
  });
  s.Get("/agents", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"protocol_version", kProtocolVersion}, {"agents", manager_.agents_json()}});
  });
  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto session = manager_.create(parse_body(req));
      send_json(res, 201,
                {{"protocol_version", kProtocolVersion},
                 {"session_id", session->id()},
                 {"view", session->view()}});
    });
  });
  s.Get(R"(/sessions/([0-9a-f]+)/view)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, manager_.get(req.matches[1])->view()); });
  });
  s.Post(R"(/sessions/([0-9a-f]+)/actions)",
         [this](const httplib::Request& req, httplib::Response& res) {
           guarded(res, [&] {
             const auto session = manager_.get(req.matches[1]);
             send_json(res, 200, session->act(parse_body(req)));
           });
         });
  s.Post(R"(/sessions/([0-9a-f]+)/result)",
         [this](const httplib::Request& req, httplib::Response& res) {
           guarded(res, [&] {
             send_json(res, 201,
                       {{"protocol_version", kProtocolVersion},
                        {"record", manager_.record_result(req.matches[1], parse_body(req))}});
           });
         });
  s.Get(R"(/sessions/([0-9a-f]+)/events)", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
    std::shared_ptr<Session> session;
    try {
      session = manager_.get(req.matches[1]);
    } catch (const SessionError& e) {
      send_json(res, e.status(), e.to_json());
      return;
    }
    int64_t after = 0;
    if (req.has_header("Last-Event-ID")) {
      try {
        after = std::stoll(req.get_header_value("Last-Event-ID"));
      } catch (const std::exception&) {
        after = 0;
      }
    } else if (req.has_param("after")) {
      after = std::atoll(req.get_param_value("after").c_str());
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, session, after, idle = 0](size_t, httplib::DataSink& sink) mutable {
          if (stopping_ || session->closed()) {
            sink.done();
            return true;
          }
          const auto events = session->events_after(after, std::chrono::milliseconds(500));
          for (const auto& ev : events) {
            const std::string frame = sse_frame(ev);
            if (!sink.write(frame.data(), frame.size())) return false;
            after = ev.at("seq").get<int64_t>();
          }
          // Comment line every ~15 s so proxies keep the stream open.
          if (events.empty() && ++idle % 30 == 0) {
            static const std::string ping = ": keepalive\n\n";
            if (!sink.write(ping.data(), ping.size())) return false;
          }
          // The stream ends once the game is over and the result is in.
          if (!events.empty() && events.back().at("event") == "result") sink.done();
          return true;
        });
  });
}

int SessionServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool SessionServer::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

bool SessionServer::listen_after_bind() { return server_->listen_after_bind(); }

void SessionServer::stop() {
  stopping_ = true;
  manager_.shutdown();
  if (server_) server_->stop();
}

}  // namespace instructrl

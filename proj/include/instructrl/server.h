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

// HTTP front of the session service. Commands are JSON over HTTP; each
// session has a server-sent-events stream of turn events.
//
//   GET  /healthz
//   GET  /agents
//   POST /sessions                  {agent, human_seat, instruction_visible, seed?}
//   GET  /sessions/{id}/view
//   POST /sessions/{id}/actions     {action} or {type, value}
//   POST /sessions/{id}/result      {survey?: [q1, q2]}
//   GET  /sessions/{id}/events      text/event-stream, honors Last-Event-ID

#ifndef INSTRUCTRL_SERVER_H_
#define INSTRUCTRL_SERVER_H_

#include <atomic>
#include <memory>
#include <string>

#include "instructrl/session.h"

namespace httplib {
class Server;
}

namespace instructrl {

class SessionServer {
 public:
  explicit SessionServer(SessionManager& manager);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  // Binds to an ephemeral port and returns it; -1 on failure.
  int bind_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();

 private:
  void install_routes();

  SessionManager& manager_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace instructrl

#endif  // INSTRUCTRL_SERVER_H_

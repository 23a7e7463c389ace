#pragma once

#include <atomic>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "weld/session_service.hpp"

namespace weld::session {

// Serves the line protocol over TCP. A connection that opens with an HTTP
// GET is upgraded to WebSocket and then carries one message per text frame;
// everything else is newline-delimited.
//
// Client messages:
//   HELLO scenario=<name> [mode=scripted|driver] [realtime=0|1]
//   HELLO session=<id>            observe an existing session
//   INPUT <t> <x> <y>             driver sessions only
//   FINISH                        driver sessions only
//   SNAPSHOT                      current confidence map as MAP
// Server messages: HELLO, SEAM, UPDATE, REPORT, MAP, ERROR <code> <stage> <text>.
class ProtocolServer {
 public:
  ProtocolServer(SessionService& service, std::string host, int port);
  ~ProtocolServer();

  /// Binds and listens; throws Error(kIo) when the address is unavailable.
  void listen();
  /// Port actually bound (useful with port 0).
  int port() const { return port_; }
  /// Accept loop; returns after stop().
  void run();
  void stop();

 private:
  void handle(int fd);

  SessionService& service_;
  std::string host_;
  int port_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::set<int> clients_;
  std::vector<std::thread> workers_;
};

std::string websocket_accept_key(const std::string& client_key);

}  // namespace weld::session

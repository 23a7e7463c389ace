#include "weld/protocol_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <spdlog/spdlog.h>

#include "weld/error.hpp"

namespace weld::session {

namespace {

bool send_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(fd, data, n, MSG_NOSIGNAL);
    if (k <= 0) {
      if (k < 0 && errno == EINTR) continue;
      return false;
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
  return true;
}

class Transport {
 public:
  explicit Transport(int fd) : fd_(fd) {}
  virtual ~Transport() = default;
  virtual std::optional<std::string> read_message() = 0;
  virtual bool write_message(const std::string& m) = 0;

 protected:
  // Reads at least one more byte into buf_; false on EOF or error.
  bool fill() {
    char tmp[4096];
    while (true) {
      const ssize_t k = ::recv(fd_, tmp, sizeof tmp, 0);
      if (k < 0 && errno == EINTR) continue;
      if (k <= 0) return false;
      buf_.append(tmp, static_cast<std::size_t>(k));
      return true;
    }
  }

  int fd_;
  std::string buf_;
  std::mutex write_mutex_;

  friend std::unique_ptr<Transport> open_transport(int fd);
};

class LineTransport : public Transport {
 public:
  using Transport::Transport;

  std::optional<std::string> read_message() override {
    while (true) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (!fill()) return std::nullopt;
    }
  }

  bool write_message(const std::string& m) override {
    std::lock_guard lock(write_mutex_);
    const std::string line = m + "\n";
    return send_all(fd_, line.data(), line.size());
  }
};

class WebSocketTransport : public Transport {
 public:
  using Transport::Transport;

  std::optional<std::string> read_message() override {
    while (pending_.empty()) {
      auto frame = read_frame();
      if (!frame) return std::nullopt;
      std::istringstream lines(*frame);
      std::string line;
      while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) pending_.push_back(line);
      }
    }
    std::string m = std::move(pending_.front());
    pending_.erase(pending_.begin());
    return m;
  }

  bool write_message(const std::string& m) override { return write_frame(0x1, m); }

 private:
  bool need(std::size_t n) {
    while (buf_.size() < n) {
      if (!fill()) return false;
    }
    return true;
  }

  bool write_frame(int opcode, const std::string& payload) {
    std::string f;
    f.push_back(static_cast<char>(0x80 | opcode));
    const std::size_t n = payload.size();
    if (n < 126) {
      f.push_back(static_cast<char>(n));
    } else if (n < 65536) {
      f.push_back(126);
      f.push_back(static_cast<char>(n >> 8));
      f.push_back(static_cast<char>(n & 0xff));
    } else {
      f.push_back(127);
      for (int s = 56; s >= 0; s -= 8) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> s) & 0xff));
    }
    f += payload;
    std::lock_guard lock(write_mutex_);
    return send_all(fd_, f.data(), f.size());
  }

  // Text payload of the next complete data message; control frames handled inline.
  std::optional<std::string> read_frame() {
    std::string message;
    while (true) {
      if (!need(2)) return std::nullopt;
      const auto b0 = static_cast<unsigned char>(buf_[0]);
      const auto b1 = static_cast<unsigned char>(buf_[1]);
      const bool fin = b0 & 0x80;
      const int opcode = b0 & 0x0f;
      const bool masked = b1 & 0x80;
      std::uint64_t len = b1 & 0x7f;
      std::size_t at = 2;
      if (len == 126) {
        if (!need(4)) return std::nullopt;
        len = (static_cast<unsigned char>(buf_[2]) << 8) | static_cast<unsigned char>(buf_[3]);
        at = 4;
      } else if (len == 127) {
        if (!need(10)) return std::nullopt;
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<unsigned char>(buf_[2 + i]);
        at = 10;
      }
      if (len > (1u << 20)) return std::nullopt;
      unsigned char mask[4] = {0, 0, 0, 0};
      if (masked) {
        if (!need(at + 4)) return std::nullopt;
        std::memcpy(mask, buf_.data() + at, 4);
        at += 4;
      }
      if (!need(at + len)) return std::nullopt;
      std::string payload = buf_.substr(at, len);
      buf_.erase(0, at + len);
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ mask[i % 4]);

      if (opcode == 0x8) {
        write_frame(0x8, "");
        return std::nullopt;
      }
      if (opcode == 0x9) {
        write_frame(0xA, payload);
        continue;
      }
      if (opcode == 0xA) continue;
      message += payload;
      if (fin) return message;
    }
  }

  std::vector<std::string> pending_;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Sniffs the first bytes: an HTTP upgrade request selects WebSocket.
std::unique_ptr<Transport> open_transport(int fd) {
  auto line = std::make_unique<LineTransport>(fd);
  if (!line->fill()) return nullptr;
  while (line->buf_.size() < 4 && std::string("GET ").compare(0, line->buf_.size(), line->buf_) == 0) {
    if (!line->fill()) return nullptr;
  }
  if (line->buf_.compare(0, 4, "GET ") != 0) return line;

  while (line->buf_.find("\r\n\r\n") == std::string::npos) {
    if (line->buf_.size() > 16384 || !line->fill()) return nullptr;
  }
  const auto end = line->buf_.find("\r\n\r\n");
  std::istringstream request(line->buf_.substr(0, end));
  std::string header;
  std::string key;
  while (std::getline(request, header)) {
    const auto colon = header.find(':');
    if (colon == std::string::npos) continue;
    if (lower(header.substr(0, colon)) == "sec-websocket-key") {
      key = header.substr(colon + 1);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t\r") + 1);
    }
  }
  if (key.empty()) {
    const std::string bad = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n";
    send_all(fd, bad.data(), bad.size());
    return nullptr;
  }
  const std::string reply = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                            "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n";
  if (!send_all(fd, reply.data(), reply.size())) return nullptr;
  auto ws = std::make_unique<WebSocketTransport>(fd);
  ws->buf_ = line->buf_.substr(end + 4);
  return ws;
}

std::map<std::string, std::string> key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string kv;
  while (in >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kParseError, "protocol", "expected key=value, got '" + kv + "'");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

sim::Scenario load_named_scenario(const std::filesystem::path& data_dir, const std::string& name) {
  const bool plain = !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
  if (!plain) fail(ErrorCode::kInvalidArgument, "protocol", "scenario names are [A-Za-z0-9_-]+");
  const auto path = data_dir / "scenarios" / (name + ".scn");
  if (!std::filesystem::exists(path)) fail(ErrorCode::kInvalidArgument, "protocol", "no scenario named " + name);
  return sim::load_scenario(path);
}

}  // namespace

std::string websocket_accept_key(const std::string& client_key) {
  const std::string src = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(src.data()), src.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<const char*>(out), static_cast<std::size_t>(n));
}

ProtocolServer::ProtocolServer(SessionService& service, std::string host, int port)
    : service_(service), host_(std::move(host)), port_(port) {}

ProtocolServer::~ProtocolServer() {
  stop();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

void ProtocolServer::listen() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(port_);
  if (::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    fail(ErrorCode::kIo, "serve", "cannot resolve " + host_);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    fail(ErrorCode::kIo, "serve", std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd);
    fail(ErrorCode::kIo, "serve", "cannot bind " + host_ + ":" + port + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
}

void ProtocolServer::run() {
  if (listen_fd_ < 0) listen();
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    std::lock_guard lock(mutex_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    clients_.insert(fd);
    workers_.emplace_back([this, fd] { handle(fd); });
  }
}

void ProtocolServer::stop() {
  if (stopping_.exchange(true)) return;
  std::lock_guard lock(mutex_);
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
}

void ProtocolServer::handle(int fd) {
  std::shared_ptr<Transport> io(open_transport(fd));
  std::string id;
  bool owner = false;
  bool driver = false;
  std::thread writer;
  std::thread runner;

  auto send_error = [&](const Error& e) { io->write_message(error_message(e)); };
  try {
    const auto first = io ? io->read_message() : std::nullopt;
    if (!first) throw std::runtime_error("closed before HELLO");
    std::istringstream in(*first);
    std::string verb;
    in >> verb;
    if (verb != "HELLO") fail(ErrorCode::kParseError, "protocol", "expected HELLO, got '" + verb + "'");
    auto kv = key_values(in);

    if (kv.count("session")) {
      id = kv["session"];
    } else {
      const std::string mode = kv.count("mode") ? kv["mode"] : "scripted";
      if (mode != "scripted" && mode != "driver") fail(ErrorCode::kParseError, "protocol", "unknown mode " + mode);
      driver = mode == "driver";
      auto config = SessionConfig::for_scenario(load_named_scenario(service_.data_dir(), kv["scenario"]),
                                                kv["scenario"]);
      config.mode = driver ? FeedMode::kDriver : FeedMode::kScripted;
      id = service_.create_session(std::move(config));
      owner = true;
      spdlog::info("session {} created ({} mode, scenario {})", id, mode, kv["scenario"]);
    }
    auto sub = service_.subscribe(id);
    writer = std::thread([io, sub, fd] {
      while (auto m = sub->next()) {
        if (!io->write_message(*m)) break;
      }
      if (sub->dropped()) io->write_message("ERROR QueueOverflow stream subscriber fell too far behind");
      ::shutdown(fd, SHUT_RD);  // stream over: unblock the reader
    });
    if (owner && !driver) {
      const bool realtime = kv.count("realtime") && kv["realtime"] == "1";
      runner = std::thread([this, id, realtime, io] {
        try {
          service_.run_scripted(id, realtime);
        } catch (const Error& e) {
          io->write_message(error_message(e));
          service_.abandon(id);
        }
      });
    }

    while (auto msg = io->read_message()) {
      std::istringstream cmd(*msg);
      std::string v;
      if (!(cmd >> v)) continue;
      try {
        if (v == "INPUT") {
          if (!(owner && driver)) fail(ErrorCode::kInvalidArgument, "protocol", "INPUT needs a driver session");
          std::int64_t t = 0;
          double x = 0.0;
          double y = 0.0;
          if (!(cmd >> t >> x >> y)) fail(ErrorCode::kParseError, "protocol", "INPUT t x y");
          service_.ingest_input(id, t, {x, y});
        } else if (v == "FINISH") {
          if (!(owner && driver)) fail(ErrorCode::kInvalidArgument, "protocol", "FINISH needs a driver session");
          service_.finalize_session(id);
        } else if (v == "SNAPSHOT") {
          io->write_message(service_.map_snapshot(id));
        } else {
          fail(ErrorCode::kParseError, "protocol", "unknown message '" + v + "'");
        }
      } catch (const Error& e) {
        send_error(e);
      }
    }
  } catch (const Error& e) {
    if (io) send_error(e);
  } catch (const std::exception& e) {
    spdlog::debug("connection closed: {}", e.what());
  }

  if (runner.joinable()) runner.join();
  if (owner && driver) service_.abandon(id);
  ::shutdown(fd, SHUT_RDWR);
  if (writer.joinable()) writer.join();
  {
    std::lock_guard lock(mutex_);
    clients_.erase(fd);
  }
  ::close(fd);
}

}  // namespace weld::session

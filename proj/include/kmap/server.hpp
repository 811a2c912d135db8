#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "kmap/transport.hpp"

namespace kmap {

// Serves newline-delimited JSON on a TCP port: one thread per connection,
// requests on a connection answered in order.
class TcpServer {
 public:
  explicit TcpServer(MessageHandler& handler);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  // Binds and starts accepting; port 0 picks a free port. Returns the bound
  // port. Throws IoError on bind failure.
  std::uint16_t start(const std::string& host, std::uint16_t port);
  void stop();
  std::uint16_t port() const noexcept { return port_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  MessageHandler& handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex connections_mutex_;
  std::list<std::pair<int, std::thread>> connections_;
};

// POST /v1/message with a protocol message as the body; the response body is
// the protocol response.
class HttpGateway {
 public:
  explicit HttpGateway(MessageHandler& handler);
  ~HttpGateway();
  HttpGateway(const HttpGateway&) = delete;
  HttpGateway& operator=(const HttpGateway&) = delete;

  std::uint16_t start(const std::string& host, std::uint16_t port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kmap

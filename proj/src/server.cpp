#include "kmap/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "httplib.h"
#include "kmap/error.hpp"

namespace kmap {

TcpServer::TcpServer(MessageHandler& handler) : handler_(handler) {}

TcpServer::~TcpServer() { stop(); }

std::uint16_t TcpServer::start(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const char* node = (host.empty() || host == "0.0.0.0") ? nullptr : host.c_str();
  if (::getaddrinfo(node, std::to_string(port).c_str(), &hints, &result) != 0) {
    fail(ErrorCode::IoError, "cannot resolve listen address " + host);
  }
  int fd = -1;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 128) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd < 0) fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));

  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  return port_;
}

void TcpServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    int ready = ::poll(&pfd, 1, 100);
    if (ready <= 0) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(connections_mutex_);
    // Reap finished connections.
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (it->first < 0) {
        it->second.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
    auto& slot = connections_.emplace_back(fd, std::thread{});
    slot.second = std::thread([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::serve_connection(int fd) {
  std::string buffer;
  char chunk[8192];
  bool open = true;
  while (open && running_) {
    pollfd pfd{fd, POLLIN, 0};
    int ready = ::poll(&pfd, 1, 100);
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) continue;
    ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::string reply = handler_.handle_line(line) + "\n";
      std::size_t sent = 0;
      while (sent < reply.size()) {
        ssize_t w = ::send(fd, reply.data() + sent, reply.size() - sent, MSG_NOSIGNAL);
        if (w < 0 && errno == EINTR) continue;
        if (w <= 0) {
          open = false;
          break;
        }
        sent += static_cast<std::size_t>(w);
      }
    }
  }
  ::close(fd);
  std::lock_guard lock(connections_mutex_);
  for (auto& [cfd, thread] : connections_) {
    if (cfd == fd && thread.get_id() == std::this_thread::get_id()) cfd = -1;
  }
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<std::pair<int, std::thread>> connections;
  {
    std::lock_guard lock(connections_mutex_);
    connections.swap(connections_);
  }
  for (auto& [fd, thread] : connections) {
    if (thread.joinable()) thread.join();
  }
}

struct HttpGateway::Impl {
  httplib::Server server;
  std::thread thread;
};

HttpGateway::HttpGateway(MessageHandler& handler) : impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/v1/message", [&handler](const httplib::Request& req, httplib::Response& res) {
    res.set_content(handler.handle_line(req.body), "application/json");
  });
}

HttpGateway::~HttpGateway() { stop(); }

std::uint16_t HttpGateway::start(const std::string& host, std::uint16_t port) {
  const std::string bind_host = host.empty() ? "0.0.0.0" : host;
  int bound = port == 0 ? impl_->server.bind_to_any_port(bind_host) : (impl_->server.bind_to_port(bind_host, port) ? port : -1);
  if (bound < 0) fail(ErrorCode::IoError, "cannot bind HTTP gateway on " + bind_host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void HttpGateway::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace kmap

#include "kmap/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace kmap {

using nlohmann::json;

std::string MessageHandler::handle_line(std::string_view line) {
  Message message;
  try {
    message = decode_message(line);
  } catch (const Error& e) {
    return encode(Response::failure(salvage_request_id(line), e));
  }
  try {
    Response response = handle(message);
    response.request_id = message.request_id;
    return encode(response);
  } catch (const Error& e) {
    return encode(Response::failure(message.request_id, e));
  } catch (const json::exception& e) {
    return encode(Response::failure(message.request_id, ErrorCode::MalformedRequest, e.what()));
  } catch (const std::exception& e) {
    return encode(Response::failure(message.request_id, ErrorCode::Internal, e.what()));
  }
}

json Channel::request(MessageKind kind, json payload) {
  Message m;
  m.request_id = "c" + std::to_string(next_id_.fetch_add(1));
  m.kind = kind;
  m.payload = std::move(payload);
  return call(m).value();
}

namespace {

class LoopbackChannel : public Channel {
 public:
  LoopbackChannel(LoopbackNetwork& network, std::string name) : network_(network), name_(std::move(name)) {}

  Response call(const Message& message) override {
    return decode_response(network_.deliver(name_, encode(message)));
  }

 private:
  LoopbackNetwork& network_;
  std::string name_;
};

}  // namespace

void LoopbackNetwork::bind(const std::string& name, MessageHandler& handler) {
  std::lock_guard lock(mutex_);
  endpoints_[name] = Endpoint{&handler, false};
}

void LoopbackNetwork::unbind(const std::string& name) {
  std::lock_guard lock(mutex_);
  endpoints_.erase(name);
}

void LoopbackNetwork::set_down(const std::string& name, bool down) {
  std::lock_guard lock(mutex_);
  auto it = endpoints_.find(name);
  if (it != endpoints_.end()) it->second.down = down;
}

std::shared_ptr<Channel> LoopbackNetwork::connect(const std::string& address) {
  std::string_view name = address;
  if (name.starts_with(kScheme)) name.remove_prefix(kScheme.size());
  return std::make_shared<LoopbackChannel>(*this, std::string(name));
}

std::string LoopbackNetwork::deliver(const std::string& name, std::string_view line) {
  MessageHandler* handler = nullptr;
  {
    std::lock_guard lock(mutex_);
    auto it = endpoints_.find(name);
    if (it == endpoints_.end() || it->second.down) {
      fail(ErrorCode::SiteUnreachable, "endpoint loop://" + name + " unreachable");
    }
    handler = it->second.handler;
  }
  return handler->handle_line(line);
}

HostPort parse_host_port(std::string_view text, std::string_view default_host) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) fail(ErrorCode::InvalidPath, "address '" + std::string(text) + "' lacks ':port'");
  HostPort hp;
  hp.host = std::string(text.substr(0, colon));
  if (hp.host.empty()) hp.host = std::string(default_host);
  std::string_view port = text.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
    fail(ErrorCode::InvalidPath, "bad port in address '" + std::string(text) + "'");
  }
  hp.port = static_cast<std::uint16_t>(value);
  return hp;
}

TcpChannel::TcpChannel(HostPort endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

TcpChannel::~TcpChannel() {
  std::lock_guard lock(mutex_);
  close_locked();
}

void TcpChannel::close_locked() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  buffer_.clear();
}

void TcpChannel::connect_locked() {
  const std::string where = endpoint_.host + ":" + std::to_string(endpoint_.port);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (::getaddrinfo(endpoint_.host.c_str(), std::to_string(endpoint_.port).c_str(), &hints, &result) != 0) {
    fail(ErrorCode::SiteUnreachable, "cannot resolve " + where);
  }
  int fd = -1;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd < 0) fail(ErrorCode::SiteUnreachable, "cannot connect to " + where);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  fd_ = fd;
}

std::string TcpChannel::exchange_locked(const std::string& frame) {
  const std::string where = endpoint_.host + ":" + std::to_string(endpoint_.port);
  std::string out = frame + "\n";
  std::size_t sent = 0;
  while (sent < out.size()) {
    ssize_t n = ::send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::SiteUnreachable, "send to " + where + " failed");
    }
    sent += static_cast<std::size_t>(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      timed_out_ = true;
      fail(ErrorCode::SiteUnreachable, "timeout waiting for " + where);
    }
    pollfd pfd{fd_, POLLIN, 0};
    int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) {
      timed_out_ = true;
      fail(ErrorCode::SiteUnreachable, "timeout waiting for " + where);
    }
    char chunk[8192];
    ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::SiteUnreachable, "connection to " + where + " closed");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Response TcpChannel::call(const Message& message) {
  const std::string frame = encode(message);
  std::lock_guard lock(mutex_);
  // A reused connection may have been dropped by the peer while idle; retry
  // once on a fresh one unless the peer simply did not answer in time.
  for (int attempt = 0;; ++attempt) {
    const bool reused = fd_ >= 0;
    timed_out_ = false;
    try {
      if (fd_ < 0) connect_locked();
      return decode_response(exchange_locked(frame));
    } catch (const Error& e) {
      close_locked();
      if (e.code() != ErrorCode::SiteUnreachable || !reused || timed_out_ || attempt > 0) throw;
    }
  }
}

std::shared_ptr<Channel> NetworkConnector::connect(const std::string& address) {
  if (address.starts_with(LoopbackNetwork::kScheme)) {
    if (!loopback_) fail(ErrorCode::SiteUnreachable, "no loopback network for " + address);
    return loopback_->connect(address);
  }
  return std::make_shared<TcpChannel>(parse_host_port(address), timeout_);
}

}  // namespace kmap

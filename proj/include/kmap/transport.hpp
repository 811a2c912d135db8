#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "kmap/protocol.hpp"

namespace kmap {

using namespace std::chrono_literals;

inline constexpr std::chrono::milliseconds kDefaultTimeout = 5000ms;

// Anything that answers protocol messages: core and site nodes.
class MessageHandler {
 public:
  virtual ~MessageHandler() = default;
  virtual Response handle(const Message& message) = 0;

  // Decodes one frame, dispatches it and encodes the reply. Never throws;
  // undecodable frames produce an error response.
  std::string handle_line(std::string_view line);
};

// Client side of one request/response conversation.
class Channel {
 public:
  virtual ~Channel() = default;

  // Throws SiteUnreachable when the peer cannot be reached or does not answer
  // in time.
  virtual Response call(const Message& message) = 0;

  // Convenience wrapper that assigns a request id and unwraps the payload,
  // rethrowing error responses as kmap::Error.
  nlohmann::json request(MessageKind kind, nlohmann::json payload = nlohmann::json::object());

 private:
  std::atomic<std::uint64_t> next_id_{1};
};

class Connector {
 public:
  virtual ~Connector() = default;
  virtual std::shared_ptr<Channel> connect(const std::string& address) = 0;
};

// In-process transport. Handlers bind under a name and are reachable at
// "loop://<name>". Every call still goes through the line codec so the wire
// format is exercised.
class LoopbackNetwork : public Connector {
 public:
  static constexpr std::string_view kScheme = "loop://";

  void bind(const std::string& name, MessageHandler& handler);
  void unbind(const std::string& name);
  // A down endpoint fails every call with SiteUnreachable.
  void set_down(const std::string& name, bool down);

  std::shared_ptr<Channel> connect(const std::string& address) override;

  // Used by LoopbackChannel.
  std::string deliver(const std::string& name, std::string_view line);

 private:
  struct Endpoint {
    MessageHandler* handler = nullptr;
    bool down = false;
  };
  std::mutex mutex_;
  std::map<std::string, Endpoint> endpoints_;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port" or ":port" (host defaults to `default_host`).
HostPort parse_host_port(std::string_view text, std::string_view default_host = "127.0.0.1");

// Newline-delimited JSON over a persistent TCP connection.
class TcpChannel : public Channel {
 public:
  TcpChannel(HostPort endpoint, std::chrono::milliseconds timeout);
  ~TcpChannel() override;

  Response call(const Message& message) override;

 private:
  void connect_locked();
  void close_locked();
  std::string exchange_locked(const std::string& frame);

  HostPort endpoint_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  int fd_ = -1;
  bool timed_out_ = false;
  std::string buffer_;
};

// Routes "loop://" addresses to a loopback network (when given) and
// everything else to TCP.
class NetworkConnector : public Connector {
 public:
  explicit NetworkConnector(LoopbackNetwork* loopback = nullptr,
                            std::chrono::milliseconds timeout = kDefaultTimeout)
      : loopback_(loopback), timeout_(timeout) {}

  std::shared_ptr<Channel> connect(const std::string& address) override;

 private:
  LoopbackNetwork* loopback_;
  std::chrono::milliseconds timeout_;
};

}  // namespace kmap

#pragma once

// Minimal POSIX TCP plumbing for the direct-access channel. Each frame is a
// u32 little-endian byte length followed by exactly one protocol message.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace satmem::net {

class NetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kMaxFrame = 64u << 20;

class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket &) = delete;
  Socket &operator=(const Socket &) = delete;
  Socket(Socket &&o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket &operator=(Socket &&o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  void close() noexcept {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  /// Wakes any thread blocked in recv/accept on this socket.
  void shutdown() noexcept {
    if (fd_ >= 0)
      ::shutdown(fd_, SHUT_RDWR);
  }

  bool send_all(std::span<const std::uint8_t> bytes) noexcept {
    std::size_t off = 0;
    while (off < bytes.size()) {
      ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR)
        continue;
      if (n <= 0)
        return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  bool recv_exact(std::span<std::uint8_t> bytes) noexcept {
    std::size_t off = 0;
    while (off < bytes.size()) {
      ssize_t n = ::recv(fd_, bytes.data() + off, bytes.size() - off, 0);
      if (n < 0 && errno == EINTR)
        continue;
      if (n <= 0)
        return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  std::uint16_t local_port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    if (::getsockname(fd_, reinterpret_cast<sockaddr *>(&addr), &len) != 0)
      throw NetError(std::string("getsockname: ") + std::strerror(errno));
    return ntohs(addr.sin_port);
  }

private:
  int fd_ = -1;
};

inline Socket listen_tcp(const std::string &host, std::uint16_t port, int backlog = 64) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid())
    throw NetError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw NetError("bad listen address " + host);
  if (::bind(s.fd(), reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0)
    throw NetError("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  if (::listen(s.fd(), backlog) != 0)
    throw NetError(std::string("listen: ") + std::strerror(errno));
  return s;
}

inline std::optional<Socket> accept_tcp(const Socket &listener) {
  for (;;) {
    int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED)
      continue;
    return std::nullopt;
  }
}

inline Socket connect_tcp(const std::string &host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo *res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw NetError("resolve " + host + ": " + ::gai_strerror(rc));
  Socket s;
  for (addrinfo *ai = res; ai; ai = ai->ai_next) {
    Socket c(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (c.valid() && ::connect(c.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      s = std::move(c);
      break;
    }
  }
  ::freeaddrinfo(res);
  if (!s.valid())
    throw NetError("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

inline bool send_frame(Socket &s, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> buf(4 + payload.size());
  const auto n = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i)
    buf[i] = static_cast<std::uint8_t>(n >> (8 * i));
  std::memcpy(buf.data() + 4, payload.data(), payload.size());
  return s.send_all(buf);
}

/// nullopt on EOF, transport error, or an oversized length prefix.
inline std::optional<std::vector<std::uint8_t>> recv_frame(Socket &s) {
  std::uint8_t hdr[4];
  if (!s.recv_exact(hdr))
    return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i)
    n |= static_cast<std::uint32_t>(hdr[i]) << (8 * i);
  if (n > kMaxFrame)
    return std::nullopt;
  std::vector<std::uint8_t> body(n);
  if (!s.recv_exact(body))
    return std::nullopt;
  return body;
}

/// tcp://host:port/instance-id
struct DirectUrl {
  std::string host;
  std::uint16_t port = 0;
  std::string instance;

  std::string str() const { return "tcp://" + host + ":" + std::to_string(port) + "/" + instance; }

  static DirectUrl parse(const std::string &url) {
    constexpr std::string_view scheme = "tcp://";
    if (url.rfind(scheme, 0) != 0)
      throw NetError("direct url must start with tcp://: " + url);
    const auto rest = url.substr(scheme.size());
    const auto colon = rest.find(':');
    const auto slash = rest.find('/', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || slash == std::string::npos || slash == rest.size() - 1)
      throw NetError("malformed direct url: " + url);
    DirectUrl d;
    d.host = rest.substr(0, colon);
    try {
      const int port = std::stoi(rest.substr(colon + 1, slash - colon - 1));
      if (port <= 0 || port > 65535)
        throw NetError("bad port");
      d.port = static_cast<std::uint16_t>(port);
    } catch (const std::logic_error &) {
      throw NetError("malformed direct url: " + url);
    }
    d.instance = rest.substr(slash + 1);
    return d;
  }
};

/// Handshake frame sent by a client right after connecting.
inline std::string hello_frame(const std::string &instance) { return "SATMEM/1 " + instance; }

} // namespace satmem::net

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <optional>
#include <string>
#include <utility>

#include "styx/common.hpp"
#include "styx/transport.hpp"

namespace styx {

// Stream-socket adapter for the envelope contract: u32 little-endian frame
// length, then the encoded envelope. Reliable ordered delivery comes from
// the underlying stream; fault injection stays a deterministic-mode feature
// and is not supported here.
class SocketChannel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}

  SocketChannel(SocketChannel&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  SocketChannel& operator=(SocketChannel&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;
  ~SocketChannel() { close_fd(); }

  static SocketChannel connect_to(const std::string& host, std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw StorageIoError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      throw StorageIoError("bad address: " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd);
      throw StorageIoError("connect failed to " + host);
    }
    return SocketChannel(fd);
  }

  void send(const Envelope& env) {
    Bytes frame = env.encode();
    Bytes out;
    le::put_u32(out, std::uint32_t(frame.size()));
    out += frame;
    write_all(out.data(), out.size());
  }

  // Blocks for one frame; nullopt on orderly shutdown.
  std::optional<Envelope> recv() {
    char lenbuf[4];
    if (!read_exact(lenbuf, 4)) return std::nullopt;
    le::Reader r(std::string_view(lenbuf, 4));
    std::uint32_t len = r.u32();
    Bytes frame(len, '\0');
    if (!read_exact(frame.data(), len))
      throw StorageIoError("connection closed mid-frame");
    return Envelope::decode(frame);
  }

 private:
  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  bool read_exact(char* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      ssize_t r = ::read(fd_, buf + got, n - got);
      if (r == 0) return got == 0 ? false
                                  : throw StorageIoError("short read on frame");
      if (r < 0) throw StorageIoError("read failed");
      got += std::size_t(r);
    }
    return true;
  }

  void write_all(const char* buf, std::size_t n) {
    std::size_t sent = 0;
    while (sent < n) {
      ssize_t w = ::write(fd_, buf + sent, n - sent);
      if (w <= 0) throw StorageIoError("write failed");
      sent += std::size_t(w);
    }
  }

  int fd_ = -1;
};

class SocketListener {
 public:
  explicit SocketListener(std::uint16_t port = 0) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw StorageIoError("socket() failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd_);
      throw StorageIoError("bind failed");
    }
    if (::listen(fd_, 8) != 0) {
      ::close(fd_);
      throw StorageIoError("listen failed");
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  ~SocketListener() {
    if (fd_ >= 0) ::close(fd_);
  }

  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const { return port_; }

  SocketChannel accept_one() {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw StorageIoError("accept failed");
    return SocketChannel(fd);
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace styx

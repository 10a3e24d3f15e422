#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

#include "ppodc/errors.hpp"
#include "ppodc/transport.hpp"

namespace ppodc::transport {

namespace {

constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpChannel() override {
    close();
    ::close(fd_);
  }

  void send(const Frame& f) override {
    auto bytes = encode_frame(f);
    std::lock_guard lock(send_mu_);
    write_all(bytes.data(), bytes.size());
    count_sent(bytes.size());
  }

  Frame recv() override {
    std::uint8_t len_buf[4];
    read_all(len_buf, 4);
    std::uint32_t len = (std::uint32_t{len_buf[0]} << 24) | (std::uint32_t{len_buf[1]} << 16) |
                        (std::uint32_t{len_buf[2]} << 8) | std::uint32_t{len_buf[3]};
    if (len < 5 || len > kMaxFrameBytes) throw IntegrityError("frame length out of range");
    std::vector<std::uint8_t> bytes(4 + len);
    std::memcpy(bytes.data(), len_buf, 4);
    read_all(bytes.data() + 4, len);
    count_received(bytes.size());
    return decode_frame(bytes);
  }

  void close() override {
    bool expected = false;
    if (closed_.compare_exchange_strong(expected, true)) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  void write_all(const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      ssize_t w = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (w < 0 && errno == EINTR) continue;
      if (w <= 0) throw ProtocolAbort("tcp send failed");
      p += w;
      n -= static_cast<std::size_t>(w);
    }
  }

  void read_all(std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      ssize_t r = ::recv(fd_, p, n, 0);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) throw ProtocolAbort("tcp connection lost");
      p += r;
      n -= static_cast<std::size_t>(r);
    }
  }

  int fd_;
  std::mutex send_mu_;
  std::atomic<bool> closed_{false};
};

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  std::string port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  if (::getaddrinfo(host, port.c_str(), &hints, &res) != 0 || res == nullptr)
    throw ConfigError("cannot resolve " + ep.host);
  return res;
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw UsageError("endpoint must be host:port");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("bad port in endpoint " + text);
  }
  if (port < 0 || port > 65535) throw UsageError("bad port in endpoint " + text);
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::unique_ptr<Channel> tcp_connect(const Endpoint& ep, int retries, int retry_delay_ms) {
  for (int attempt = 0; attempt <= retries; ++attempt) {
    addrinfo* res = resolve(ep, false);
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      return std::make_unique<TcpChannel>(fd);
    }
    if (fd >= 0) ::close(fd);
    ::freeaddrinfo(res);
    std::this_thread::sleep_for(std::chrono::milliseconds(retry_delay_ms));
  }
  throw ProtocolAbort("cannot connect to " + ep.host + ":" + std::to_string(ep.port));
}

TcpListener::TcpListener(const Endpoint& ep) {
  addrinfo* res = resolve(ep, true);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (fd_ < 0 || ::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 16) != 0) {
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    throw ConfigError("cannot listen on " + ep.host + ":" + std::to_string(ep.port));
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept() {
  for (;;) {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<TcpChannel>(fd);
    if (errno != EINTR) throw ProtocolAbort("accept failed");
  }
}

}  // namespace ppodc::transport

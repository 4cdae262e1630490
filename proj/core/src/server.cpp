#include "bf/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <iostream>

#include "bf/error.hpp"
#include "bf/pipeline.hpp"

namespace bf::server {
namespace {

std::string errno_text() { return std::strerror(errno); }

}  // namespace

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::send_all(std::span<const std::byte> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("send failed: " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::recv_exact(std::span<std::byte> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("recv failed: " + errno_text());
    }
    if (n == 0) {
      if (got == 0) return false;
      throw IoError("connection closed mid-frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<wire::Frame> Socket::recv_frame() {
  std::array<std::byte, 4> prefix{};
  if (!recv_exact(prefix)) return std::nullopt;
  std::uint32_t length = 0;
  for (int i = 0; i < 4; ++i) length |= std::uint32_t{std::to_integer<std::uint8_t>(prefix[i])} << (8 * i);
  std::vector<std::byte> body(length);
  if (length != 0 && !recv_exact(body)) throw IoError("connection closed mid-frame");
  return wire::decode_body(body);
}

Listener::Listener(std::uint16_t port, const std::string& host) {
  socket_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!socket_.valid()) throw IoError("socket: " + errno_text());
  const int one = 1;
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw ContractError("listener: bad IPv4 address '" + host + "'");
  }
  if (::bind(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw IoError("cannot bind port " + std::to_string(port) + ": " + errno_text());
  }
  if (::listen(socket_.fd(), 1) != 0) throw IoError("listen: " + errno_text());
  socklen_t len = sizeof addr;
  ::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Socket Listener::accept() {
  for (;;) {
    const int fd = ::accept(socket_.fd(), nullptr, nullptr);
    if (fd >= 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno != EINTR) throw IoError("accept: " + errno_text());
  }
}

void serve_one(Listener& listener, const nlohmann::json& pipeline_spec) {
  Socket conn = listener.accept();
  listener.close();
  conn.send_all(wire::encode_handshake());

  std::unique_ptr<Stream> stream;
  try {
    stream = build_pipeline(pipeline_spec);
  } catch (const std::exception& e) {
    std::cerr << "bf serve: pipeline construction failed: " << e.what() << '\n';
  }

  bool closed = false;
  const auto close_frame = wire::encode_signal(wire::FrameType::Close);
  for (;;) {
    std::optional<wire::Frame> request;
    try {
      request = conn.recv_frame();
    } catch (const Error&) {
      return;
    }
    if (!request || closed) return;  // EOF, or any request after CLOSE
    if (request->type == wire::FrameType::Stop) {
      conn.send_all(close_frame);
      return;
    }
    if (request->type != wire::FrameType::Next) {
      std::cerr << "bf serve: unexpected frame type from client\n";
      return;
    }
    if (!stream) {
      conn.send_all(close_frame);
      closed = true;
      continue;
    }
    try {
      StreamEvent ev = stream->next();
      switch (ev.kind) {
        case EventKind::Item: conn.send_all(wire::encode_item(ev.item)); break;
        case EventKind::EpochEnd: conn.send_all(wire::encode_signal(wire::FrameType::EpochEnd)); break;
        case EventKind::Exhausted:
          conn.send_all(close_frame);
          closed = true;
          break;
      }
    } catch (const IoError&) {
      return;
    } catch (const std::exception& e) {
      std::cerr << "bf serve: pipeline failed: " << e.what() << '\n';
      conn.send_all(close_frame);
      closed = true;
    }
  }
}

ServerProcess::ServerProcess(ServerProcess&& other) noexcept : pid_(other.pid_), port_(other.port_) {
  other.pid_ = -1;
}

ServerProcess::~ServerProcess() {
  if (pid_ > 0) {
    kill();
    wait();
  }
}

int ServerProcess::wait() {
  if (pid_ <= 0) return -1;
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0) {
    if (errno != EINTR) break;
  }
  pid_ = -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

void ServerProcess::kill() noexcept {
  if (pid_ > 0) ::kill(pid_, SIGTERM);
}

ServerProcess spawn(const nlohmann::json& pipeline_spec, std::uint16_t port) {
  Listener listener(port);
  std::cout.flush();
  std::cerr.flush();
  const pid_t pid = ::fork();
  if (pid < 0) throw IoError("fork: " + errno_text());
  if (pid == 0) {
    int code = 0;
    try {
      serve_one(listener, pipeline_spec);
    } catch (const std::exception& e) {
      std::cerr << "bf serve: " << e.what() << '\n';
      code = 1;
    }
    std::cerr.flush();
    ::_exit(code);
  }
  const std::uint16_t bound = listener.port();
  listener.close();
  return ServerProcess(pid, bound);
}

ClientStream::ClientStream(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw IoError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      socket_ = std::move(s);
      break;
    }
    last_error = errno_text();
  }
  ::freeaddrinfo(res);
  if (!socket_.valid()) {
    throw IoError("cannot connect to " + host + ":" + service + ": " + last_error);
  }
  const int one = 1;
  ::setsockopt(socket_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  std::array<std::byte, wire::kHandshakeSize> hello{};
  if (!socket_.recv_exact(hello)) throw FormatError("handshake: server closed the connection");
  wire::check_handshake(hello);
}

ClientStream::~ClientStream() {
  try {
    stop();
  } catch (...) {
  }
}

void ClientStream::stop() {
  if (closed_ || !socket_.valid()) return;
  closed_ = true;
  socket_.send_all(wire::encode_signal(wire::FrameType::Stop));
  while (auto frame = socket_.recv_frame()) {
    if (frame->type == wire::FrameType::Close) break;
  }
  socket_.close();
}

StreamEvent ClientStream::next() {
  if (closed_) return StreamEvent::exhausted();
  socket_.send_all(wire::encode_signal(wire::FrameType::Next));
  auto frame = socket_.recv_frame();
  if (!frame) throw IoError("server closed the connection without CLOSE");
  switch (frame->type) {
    case wire::FrameType::Item: return StreamEvent::of(std::move(frame->item));
    case wire::FrameType::EpochEnd: return StreamEvent::epoch_end();
    case wire::FrameType::Close:
      closed_ = true;
      socket_.close();
      return StreamEvent::exhausted();
    default: throw FormatError("client: unexpected frame type from server");
  }
}

nlohmann::json ClientStream::own_state() const {
  throw ContractError("server-mode streams cannot be checkpointed");
}

void ClientStream::restore_own_state(const nlohmann::json&) {
  throw ContractError("server-mode streams cannot be checkpointed");
}

}  // namespace bf::server

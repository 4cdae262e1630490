#pragma once

#include <sys/types.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bf/stream.hpp"
#include "bf/wire.hpp"

namespace bf::server {

// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;

  void send_all(std::span<const std::byte> bytes);
  // Reads exactly `n` bytes. Returns false on a clean EOF before the first
  // byte; throws IoError if the peer disappears mid-read.
  bool recv_exact(std::span<std::byte> out);
  // Next frame, or nullopt on a clean EOF at a frame boundary.
  std::optional<wire::Frame> recv_frame();

 private:
  int fd_ = -1;
};

// A bound, listening TCP socket on 127.0.0.1 (port 0 picks a free port).
class Listener {
 public:
  explicit Listener(std::uint16_t port, const std::string& host = "127.0.0.1");
  std::uint16_t port() const noexcept { return port_; }
  Socket accept();
  void close() noexcept { socket_.close(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

// Serves exactly one client: handshake, then one reply per NEXT until the
// pipeline is exhausted or STOP arrives. A pipeline that fails to build is
// reported as CLOSE after the handshake.
void serve_one(Listener& listener, const nlohmann::json& pipeline_spec);

/// The pipeline running in a forked child process.
class ServerProcess {
 public:
  ServerProcess(pid_t pid, std::uint16_t port) noexcept : pid_(pid), port_(port) {}
  ServerProcess(ServerProcess&& other) noexcept;
  ServerProcess& operator=(ServerProcess&&) = delete;
  ~ServerProcess();

  pid_t pid() const noexcept { return pid_; }
  std::uint16_t port() const noexcept { return port_; }
  // Blocks until the child exits; returns its exit status.
  int wait();
  void kill() noexcept;

 private:
  pid_t pid_;
  std::uint16_t port_;
};

// Binds in the calling process (so "port in use" surfaces here), then forks
// a child that builds the pipeline and serves one client.
ServerProcess spawn(const nlohmann::json& pipeline_spec, std::uint16_t port = 0);

/// Client side of the protocol, usable wherever a local stream is.
class ClientStream final : public Stream {
 public:
  ClientStream(const std::string& host, std::uint16_t port);
  ~ClientStream() override;

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "client"; }

  // Sends STOP and waits for CLOSE. Called by the destructor if needed.
  void stop();

 protected:
  // Server-mode streams cannot be checkpointed.
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  Socket socket_;
  bool closed_ = false;
};

}  // namespace bf::server

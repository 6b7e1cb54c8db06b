#pragma once

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <memory>
#include <string>
#include <thread>
#include <variant>

#include "ssdiff/denoiser.hpp"
#include "ssdiff/protocol.hpp"

namespace ssdiff {

/// Where a remote denoiser lives: "tcp://host:port" or "exec:<shell command>"
/// (the command speaks the protocol on its stdin/stdout).
struct Endpoint {
  enum class Kind { tcp, exec } kind = Kind::tcp;
  std::string host;
  std::string port;
  std::string command;

  static Endpoint parse(const std::string& spec) {
    Endpoint e;
    if (spec.rfind("tcp://", 0) == 0) {
      const auto rest = spec.substr(6);
      const auto colon = rest.rfind(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
        throw ConfigError("denoiser.endpoint: expected tcp://host:port, got '" + spec + "'");
      }
      e.kind = Kind::tcp;
      e.host = rest.substr(0, colon);
      e.port = rest.substr(colon + 1);
      return e;
    }
    if (spec.rfind("exec:", 0) == 0 && spec.size() > 5) {
      e.kind = Kind::exec;
      e.command = spec.substr(5);
      return e;
    }
    throw ConfigError("denoiser.endpoint: expected tcp://host:port or exec:<command>, got '" + spec + "'");
  }
};

inline std::unique_ptr<protocol::SocketTransport> connect_tcp(const std::string& host, const std::string& port,
                                                              std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    throw ConnectionError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, &::freeaddrinfo);
  std::string last = "no addresses";
  for (auto* ai = found; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      return std::make_unique<protocol::SocketTransport>(fd, timeout);
    }
    last = std::strerror(errno);
    ::close(fd);
  }
  throw ConnectionError("cannot connect to " + host + ":" + port + ": " + last);
}

/// A child process speaking the protocol over its stdin/stdout, wired to one
/// end of a socketpair so writes never raise SIGPIPE.
class ChildProcessTransport final : public protocol::Transport {
 public:
  ChildProcessTransport(const std::string& command, std::chrono::milliseconds timeout) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
      throw ConnectionError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw ConnectionError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::close(fds[0]);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    io_ = std::make_unique<protocol::SocketTransport>(fds[0], timeout);
  }

  ~ChildProcessTransport() override {
    io_.reset();  // closes our end; a well-behaved child exits on EOF
    if (pid_ > 0) {
      int status = 0;
      for (int k = 0; k < 50; ++k) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }

  ChildProcessTransport(const ChildProcessTransport&) = delete;
  ChildProcessTransport& operator=(const ChildProcessTransport&) = delete;

  void write_all(std::span<const std::uint8_t> data) override { io_->write_all(data); }
  std::size_t read_some_exact(std::span<std::uint8_t> out) override { return io_->read_some_exact(out); }

 private:
  pid_t pid_ = -1;
  std::unique_ptr<protocol::SocketTransport> io_;
};

/// Client for an external epsilon-prediction server. Payloads pass through
/// unchanged apart from the f32 wire encoding.
class RemoteDenoiser final : public Denoiser {
 public:
  explicit RemoteDenoiser(std::unique_ptr<protocol::Transport> io) : io_(std::move(io)) { handshake(); }

  static std::unique_ptr<RemoteDenoiser> connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
    if (ep.kind == Endpoint::Kind::tcp) return std::make_unique<RemoteDenoiser>(connect_tcp(ep.host, ep.port, timeout));
    return std::make_unique<RemoteDenoiser>(std::make_unique<ChildProcessTransport>(ep.command, timeout));
  }

  ImageTensor predict_eps(const ImageTensor& xt, std::size_t t) override {
    io_->write_all(protocol::encode_request(static_cast<std::uint32_t>(t), xt));
    auto frame = protocol::read_server_frame(*io_);
    if (auto* err = std::get_if<protocol::ErrorFrame>(&frame)) throw ServerError("denoiser server error: " + err->message);
    auto* resp = std::get_if<protocol::Response>(&frame);
    if (resp == nullptr) throw ProtocolError("expected a response frame");
    if (resp->eps.shape() != xt.shape()) {
      throw ProtocolError("response shape " + to_string(resp->eps.shape()) + " does not match request " +
                          to_string(xt.shape()));
    }
    return std::move(resp->eps);
  }

 private:
  void handshake() {
    io_->write_all(protocol::encode_handshake_request());
    auto frame = protocol::read_server_frame(*io_);
    if (auto* err = std::get_if<protocol::ErrorFrame>(&frame)) throw ServerError("handshake rejected: " + err->message);
    if (!std::holds_alternative<protocol::Handshake>(frame)) throw ProtocolError("expected a handshake frame");
  }

  std::unique_ptr<protocol::Transport> io_;
};

}  // namespace ssdiff

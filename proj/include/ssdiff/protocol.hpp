#pragma once

// Denoiser wire protocol. Identical framing over TCP or a child process's stdio:
//
//   request   "SSDN" | u32 version=1 | u32 type=1   | u32 t | u32 C | u32 H | u32 W | C*H*W f32
//   response  "SSDN" | u32 version=1 | u32 type=2   | u32 C | u32 H | u32 W | C*H*W f32
//   handshake "SSDN" | u32 version=1 | u32 type=0   | request: t=C=H=W=0, response: C=H=W=0
//   error     "SSDN" | u32 version=1 | u32 type=255 | u32 length | UTF-8 message
//
// All integers and floats little-endian.

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ssdiff/bytes.hpp"
#include "ssdiff/error.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff::protocol {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

enum class MsgType : std::uint32_t {
  handshake = 0,
  request = 1,
  response = 2,
  error = 255,
};

/// Byte stream with a per-call deadline. Reads fail with "short ..." errors
/// when the peer closes early.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  /// Reads exactly out.size() bytes; returns the number read before EOF.
  virtual std::size_t read_some_exact(std::span<std::uint8_t> out) = 0;
};

/// Transport over a connected socket (TCP or a socketpair end). Optionally owns it.
class SocketTransport : public Transport {
 public:
  SocketTransport(int fd, std::chrono::milliseconds timeout, bool owns = true)
      : fd_(fd), timeout_(timeout), owns_(owns) {}
  ~SocketTransport() override {
    if (owns_ && fd_ >= 0) ::close(fd_);
  }
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  void write_all(std::span<const std::uint8_t> data) override {
    std::size_t done = 0;
    while (done < data.size()) {
      wait_for(POLLOUT);
      const auto n = ::send(fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ConnectionError(std::string("send failed: ") + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  std::size_t read_some_exact(std::span<std::uint8_t> out) override {
    std::size_t done = 0;
    while (done < out.size()) {
      wait_for(POLLIN);
      const auto n = ::recv(fd_, out.data() + done, out.size() - done, 0);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ConnectionError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (n == 0) break;
      done += static_cast<std::size_t>(n);
    }
    return done;
  }

  int fd() const noexcept { return fd_; }

 private:
  void wait_for(short events) const {
    pollfd p{fd_, events, 0};
    for (;;) {
      const int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
      if (rc > 0) return;
      if (rc == 0) throw TimeoutError("denoiser timed out after " + std::to_string(timeout_.count()) + " ms");
      if (errno != EINTR) throw ConnectionError(std::string("poll failed: ") + std::strerror(errno));
    }
  }

  int fd_;
  std::chrono::milliseconds timeout_;
  bool owns_;
};

// ---------------------------------------------------------------------------
// Encoding

inline void put_header(std::vector<std::uint8_t>& out, MsgType type) {
  bytes::put_magic(out, "SSDN");
  bytes::put_u32(out, kVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(type));
}

inline void put_payload(std::vector<std::uint8_t>& out, const ImageTensor& t) {
  bytes::put_u32(out, static_cast<std::uint32_t>(t.channels()));
  bytes::put_u32(out, static_cast<std::uint32_t>(t.height()));
  bytes::put_u32(out, static_cast<std::uint32_t>(t.width()));
  for (double v : t.data()) bytes::put_f32(out, static_cast<float>(v));
}

inline std::vector<std::uint8_t> encode_handshake_request() {
  std::vector<std::uint8_t> out;
  put_header(out, MsgType::handshake);
  for (int k = 0; k < 4; ++k) bytes::put_u32(out, 0);
  return out;
}

inline std::vector<std::uint8_t> encode_handshake_response() {
  std::vector<std::uint8_t> out;
  put_header(out, MsgType::handshake);
  for (int k = 0; k < 3; ++k) bytes::put_u32(out, 0);
  return out;
}

inline std::vector<std::uint8_t> encode_request(std::uint32_t t, const ImageTensor& xt) {
  std::vector<std::uint8_t> out;
  out.reserve(28 + 4 * xt.size());
  put_header(out, MsgType::request);
  bytes::put_u32(out, t);
  put_payload(out, xt);
  return out;
}

inline std::vector<std::uint8_t> encode_response(const ImageTensor& eps) {
  std::vector<std::uint8_t> out;
  out.reserve(24 + 4 * eps.size());
  put_header(out, MsgType::response);
  put_payload(out, eps);
  return out;
}

inline std::vector<std::uint8_t> encode_error(const std::string& message) {
  std::vector<std::uint8_t> out;
  put_header(out, MsgType::error);
  bytes::put_u32(out, static_cast<std::uint32_t>(message.size()));
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

// ---------------------------------------------------------------------------
// Decoding

struct Handshake {};

struct Request {
  std::uint32_t t = 0;
  ImageTensor xt;
};

struct Response {
  ImageTensor eps;
};

struct ErrorFrame {
  std::string message;
};

namespace detail {

inline std::vector<std::uint8_t> read_exact(Transport& io, std::size_t n, const char* what) {
  std::vector<std::uint8_t> buf(n);
  if (io.read_some_exact(buf) != n) throw ProtocolError(what);
  return buf;
}

inline MsgType read_preamble(Transport& io) {
  const auto head = read_exact(io, 12, "short header");
  if (!bytes::has_magic(head, "SSDN")) throw ProtocolError("bad magic");
  const auto version = bytes::get_u32(head, 4);
  if (version != kVersion) throw ProtocolError("unsupported protocol version " + std::to_string(version));
  const auto type = bytes::get_u32(head, 8);
  switch (type) {
    case 0: return MsgType::handshake;
    case 1: return MsgType::request;
    case 2: return MsgType::response;
    case 255: return MsgType::error;
    default: throw ProtocolError("unknown message type " + std::to_string(type));
  }
}

inline Shape read_dims(Transport& io) {
  const auto d = read_exact(io, 12, "short header");
  return {bytes::get_u32(d, 0), bytes::get_u32(d, 4), bytes::get_u32(d, 8)};
}

inline ImageTensor read_tensor(Transport& io, const Shape& s) {
  std::uint64_t count = 1;
  for (std::uint64_t d : {std::uint64_t{s.channels}, std::uint64_t{s.height}, std::uint64_t{s.width}}) {
    if (d != 0 && count > kMaxElements / d) throw ProtocolError("dims overflow");
    count *= d;
  }
  if (s.channels != 1 && s.channels != 3) throw ProtocolError("bad shape " + to_string(s));
  if (s.height == 0 || s.width == 0) throw ProtocolError("bad shape " + to_string(s));
  const auto payload = read_exact(io, 4 * count, "short payload");
  std::vector<double> values(count);
  for (std::size_t k = 0; k < count; ++k) values[k] = bytes::get_f32(payload, 4 * k);
  return ImageTensor(s, std::move(values));
}

inline ErrorFrame read_error_body(Transport& io) {
  const auto len = bytes::get_u32(read_exact(io, 4, "short header"), 0);
  if (len > (1u << 20)) throw ProtocolError("error message too long");
  const auto msg = read_exact(io, len, "short payload");
  return {std::string(msg.begin(), msg.end())};
}

}  // namespace detail

/// Server side: next frame from a client.
inline std::variant<Handshake, Request, ErrorFrame> read_client_frame(Transport& io) {
  switch (detail::read_preamble(io)) {
    case MsgType::handshake: {
      detail::read_exact(io, 16, "short header");
      return Handshake{};
    }
    case MsgType::request: {
      const auto t = bytes::get_u32(detail::read_exact(io, 4, "short header"), 0);
      const auto dims = detail::read_dims(io);
      return Request{t, detail::read_tensor(io, dims)};
    }
    case MsgType::error: return detail::read_error_body(io);
    default: throw ProtocolError("unexpected message type from client");
  }
}

/// Client side: next frame from a server.
inline std::variant<Handshake, Response, ErrorFrame> read_server_frame(Transport& io) {
  switch (detail::read_preamble(io)) {
    case MsgType::handshake: {
      detail::read_exact(io, 12, "short header");
      return Handshake{};
    }
    case MsgType::response: {
      const auto dims = detail::read_dims(io);
      return Response{detail::read_tensor(io, dims)};
    }
    case MsgType::error: return detail::read_error_body(io);
    default: throw ProtocolError("unexpected message type from server");
  }
}

}  // namespace ssdiff::protocol

/*
 * Copyright 2026 The enctrl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Networked control loop. The plant side (sensor + actuator, holding the
// secret key) and the encrypted controller (holding ciphertexts only) run as
// separate endpoints and exchange length-prefixed frames:
//
//   u32 length (bytes after this field), u8 kind, u64 seq, payload
//
// Session: HELLO/HELLO, PARAMS -> STEP_ACK, CTRL_SETUP -> STEP_ACK, then
// lockstep Y_CIPHER(k) -> U_CIPHER(k) for k = 0, 1, ..., and SHUTDOWN.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "enctrl/controller.hpp"
#include "enctrl/errors.hpp"
#include "enctrl/serialize.hpp"
#include "enctrl/sim.hpp"

namespace enctrl::net {

enum class MessageKind : std::uint8_t {
  kHello = 1,
  kParams = 2,
  kCtrlSetup = 3,
  kYCipher = 4,
  kUCipher = 5,
  kStepAck = 6,
  kShutdown = 7,
};

inline const char* kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::kHello: return "HELLO";
    case MessageKind::kParams: return "PARAMS";
    case MessageKind::kCtrlSetup: return "CTRL_SETUP";
    case MessageKind::kYCipher: return "Y_CIPHER";
    case MessageKind::kUCipher: return "U_CIPHER";
    case MessageKind::kStepAck: return "STEP_ACK";
    case MessageKind::kShutdown: return "SHUTDOWN";
  }
  return "UNKNOWN";
}

struct WireMessage {
  MessageKind kind = MessageKind::kHello;
  std::uint64_t seq = 0;
  Bytes payload;

  bool operator==(const WireMessage&) const = default;
};

inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;
inline constexpr std::string_view kHelloMagic = "ENCTRL-LOOP";
inline constexpr std::uint16_t kProtocolVersion = 1;

inline Bytes encode_frame(const WireMessage& m) {
  const std::size_t len = 1 + 8 + m.payload.size();
  if (len > kMaxFrameBytes) throw ProtocolError("frame too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(len));
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u64(m.seq);
  w.bytes(m.payload);
  return w.take();
}

/// Decodes the bytes that follow the length prefix.
inline WireMessage decode_frame_body(const Bytes& body) {
  if (body.size() < 9) throw ProtocolError("frame shorter than its header");
  const auto kind = body[0];
  if (kind < 1 || kind > 7) throw ProtocolError("unknown message kind " + std::to_string(kind));
  ByteReader r(body);
  r.u8();
  WireMessage m;
  m.kind = static_cast<MessageKind>(kind);
  m.seq = r.u64();
  m.payload.assign(body.begin() + 9, body.end());
  return m;
}

inline WireMessage decode_frame(const Bytes& frame) {
  if (frame.size() < 4) throw ProtocolError("truncated frame");
  ByteReader r(frame);
  const std::uint32_t len = r.u32();
  if (len != frame.size() - 4) throw ProtocolError("frame length field does not match frame size");
  return decode_frame_body(Bytes(frame.begin() + 4, frame.end()));
}

// ---------------------------------------------------------------------------
// Transports

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const Bytes& bytes) = 0;
  /// Blocks for exactly n bytes; throws TransportError when the peer is gone.
  virtual Bytes recv(std::size_t n) = 0;
  virtual void close() = 0;
};

inline void send_message(Transport& t, const WireMessage& m) { t.send(encode_frame(m)); }

inline WireMessage recv_message(Transport& t) {
  const Bytes head = t.recv(4);
  ByteReader r(head);
  const std::uint32_t len = r.u32();
  if (len < 9 || len > kMaxFrameBytes) throw ProtocolError("invalid frame length " + std::to_string(len));
  return decode_frame_body(t.recv(len));
}

namespace detail {

struct PipeBuffer {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> bytes;
  bool closed = false;
};

class PipeEnd final : public Transport {
 public:
  PipeEnd(std::shared_ptr<PipeBuffer> in, std::shared_ptr<PipeBuffer> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeEnd() override { close(); }

  void send(const Bytes& bytes) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw TransportError("pipe closed");
    out_->bytes.insert(out_->bytes.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  Bytes recv(std::size_t n) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return in_->bytes.size() >= n || in_->closed; });
    if (in_->bytes.size() < n) throw TransportError("pipe closed by peer");
    Bytes out(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
    in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void close() override {
    for (auto* b : {in_.get(), out_.get()}) {
      std::lock_guard lock(b->mu);
      b->closed = true;
      b->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<PipeBuffer> in_;
  std::shared_ptr<PipeBuffer> out_;
};

}  // namespace detail

/// Two connected in-memory endpoints, for deterministic tests.
inline std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe() {
  auto a = std::make_shared<detail::PipeBuffer>();
  auto b = std::make_shared<detail::PipeBuffer>();
  return {std::make_unique<detail::PipeEnd>(a, b), std::make_unique<detail::PipeEnd>(b, a)};
}

class TcpTransport final : public Transport {
 public:
  explicit TcpTransport(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;
  ~TcpTransport() override { close(); }

  void send(const Bytes& bytes) override {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError(std::string("send failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  Bytes recv(std::size_t n) override {
    Bytes out(n);
    std::size_t off = 0;
    while (off < n) {
      const ssize_t got = ::recv(fd_, out.data() + off, n - off, 0);
      if (got < 0 && errno == EINTR) continue;
      if (got == 0) throw TransportError("connection closed by peer");
      if (got < 0) throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(got);
    }
    return out;
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

struct HostPort {
  std::string host;
  std::string port;
};

/// "host:port" or ":port" (all interfaces) or "port".
inline HostPort parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) return {"127.0.0.1", addr};
  HostPort hp{addr.substr(0, colon), addr.substr(colon + 1)};
  if (hp.host.empty()) hp.host = "0.0.0.0";
  if (hp.port.empty()) throw ParseError("address '" + addr + "' lacks a port");
  return hp;
}

namespace detail {

struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list) ::freeaddrinfo(list);
  }
};

inline AddrInfo resolve(const std::string& addr, bool passive) {
  const HostPort hp = parse_address(addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  AddrInfo info;
  if (const int rc = ::getaddrinfo(hp.host.c_str(), hp.port.c_str(), &hints, &info.list); rc != 0) {
    throw TransportError("cannot resolve '" + addr + "': " + ::gai_strerror(rc));
  }
  return info;
}

}  // namespace detail

class TcpListener {
 public:
  explicit TcpListener(const std::string& addr) {
    const auto info = detail::resolve(addr, true);
    fd_ = ::socket(info.list->ai_family, info.list->ai_socktype, info.list->ai_protocol);
    if (fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd_, info.list->ai_addr, info.list->ai_addrlen) != 0 || ::listen(fd_, 1) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd_);
      throw TransportError("cannot listen on '" + addr + "': " + err);
    }
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }

  std::uint16_t port() const {
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    return ntohs(sa.sin_port);
  }

  std::unique_ptr<Transport> accept() {
    for (;;) {
      const int fd = ::accept(fd_, nullptr, nullptr);
      if (fd >= 0) return std::make_unique<TcpTransport>(fd);
      if (errno != EINTR) throw TransportError(std::string("accept: ") + std::strerror(errno));
    }
  }

 private:
  int fd_ = -1;
};

inline std::unique_ptr<Transport> tcp_connect(const std::string& addr) {
  const auto info = detail::resolve(addr, false);
  const int fd = ::socket(info.list->ai_family, info.list->ai_socktype, info.list->ai_protocol);
  if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, info.list->ai_addr, info.list->ai_addrlen) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw TransportError("cannot connect to '" + addr + "': " + err);
  }
  return std::make_unique<TcpTransport>(fd);
}

// ---------------------------------------------------------------------------
// Payloads

inline Bytes hello_payload() {
  ByteWriter w;
  w.magic(kHelloMagic);
  w.u16(kProtocolVersion);
  return w.take();
}

inline void check_hello(const WireMessage& m) {
  if (m.kind != MessageKind::kHello) throw ProtocolError(std::string("expected HELLO, got ") + kind_name(m.kind));
  try {
    ByteReader r(m.payload);
    r.expect_magic(kHelloMagic);
    if (r.u16() != kProtocolVersion) throw ProtocolError("protocol version mismatch");
    r.expect_end();
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed HELLO: ") + e.what());
  }
}

/// Public parameters only; the PRNG seed never leaves the plant side.
inline Bytes params_payload(const Params& params) {
  Params pub = params;
  pub.seed = 0;
  return serialize_params(pub);
}

/// Everything the controller needs, all of it ciphertext.
struct ControllerSetup {
  GswMatrix f, g, h, j;
  Ciphertext x0;
};

inline Bytes setup_payload(const EncryptedController& ec) {
  ByteWriter w;
  write_gsw_matrix(w, ec.f(), ec.params());
  write_gsw_matrix(w, ec.g(), ec.params());
  write_gsw_matrix(w, ec.h(), ec.params());
  write_gsw_matrix(w, ec.j(), ec.params());
  write_ciphertext(w, ec.state(), ec.params());
  return w.take();
}

/// Strict decoder: exactly four multiplier matrices and one state ciphertext,
/// each matching the session parameters. Any other frame (a key block
/// included) is rejected.
inline ControllerSetup decode_setup(const Bytes& payload, const Params& params) {
  try {
    ByteReader r(payload);
    ControllerSetup s{read_gsw_matrix(r), read_gsw_matrix(r), read_gsw_matrix(r), read_gsw_matrix(r), read_ciphertext(r)};
    r.expect_end();
    const std::size_t w = params.N + 1;
    const std::size_t d = params.digits();
    for (const GswMatrix* m : {&s.f, &s.g, &s.h, &s.j})
      for (const auto& e : m->entries())
        if (e.body.rows() != d * w || e.body.cols() != w) throw ProtocolError("multiplier shape does not match PARAMS");
    if (s.x0.body.cols() != w) throw ProtocolError("state ciphertext width does not match PARAMS");
    const ModRing ring = params.ring();
    for (const GswMatrix* m : {&s.f, &s.g, &s.h, &s.j})
      for (const auto& e : m->entries())
        for (Int v : e.body.values())
          if (!ring.contains(v)) throw ProtocolError("multiplier residue outside [q]");
    return s;
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed CTRL_SETUP: ") + e.what());
  } catch (const ShapeMismatch& e) {
    throw ProtocolError(std::string("malformed CTRL_SETUP: ") + e.what());
  }
}

inline Bytes u_payload(const ControllerReply& reply, const Params& params) {
  ByteWriter w;
  write_ciphertext(w, reply.u, params);
  write_ciphertext(w, reply.next_state, params);
  return w.take();
}

inline ControllerReply decode_u_payload(const Bytes& payload) {
  try {
    ByteReader r(payload);
    ControllerReply reply{read_ciphertext(r), read_ciphertext(r)};
    r.expect_end();
    return reply;
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed U_CIPHER: ") + e.what());
  }
}

inline Ciphertext decode_y_payload(const Bytes& payload, const Params& params) {
  try {
    Ciphertext c = deserialize_ciphertext(payload);
    if (c.body.cols() != params.N + 1) throw ProtocolError("Y_CIPHER width does not match PARAMS");
    const ModRing ring = params.ring();
    for (Int v : c.body.values())
      if (!ring.contains(v)) throw ProtocolError("Y_CIPHER residue outside [q]");
    return c;
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed Y_CIPHER: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Controller endpoint

/// Protocol state machine of the encrypted controller. Holds no key material:
/// its only inputs are public parameters and ciphertexts.
class ControllerSession {
 public:
  enum class State { kAwaitHello, kAwaitParams, kAwaitSetup, kRunning, kClosed };

  /// Returns the reply to send, if any. Throws ProtocolError on order violations.
  std::optional<WireMessage> handle(const WireMessage& m) {
    if (m.kind == MessageKind::kShutdown) {
      controller_.reset();
      params_.reset();
      state_ = State::kClosed;
      return std::nullopt;
    }
    switch (state_) {
      case State::kAwaitHello:
        check_hello(m);
        state_ = State::kAwaitParams;
        return WireMessage{MessageKind::kHello, 0, hello_payload()};
      case State::kAwaitParams:
        if (m.kind != MessageKind::kParams) violation("PARAMS", m);
        try {
          params_ = deserialize_params(m.payload);
        } catch (const ParseError& e) {
          throw ProtocolError(std::string("malformed PARAMS: ") + e.what());
        }
        state_ = State::kAwaitSetup;
        return WireMessage{MessageKind::kStepAck, m.seq, {}};
      case State::kAwaitSetup:
      case State::kRunning:
        if (m.kind == MessageKind::kCtrlSetup) {
          auto s = decode_setup(m.payload, *params_);
          controller_.emplace(*params_, std::move(s.f), std::move(s.g), std::move(s.h), std::move(s.j), std::move(s.x0));
          next_seq_ = 0;
          state_ = State::kRunning;
          return WireMessage{MessageKind::kStepAck, m.seq, {}};
        }
        if (state_ == State::kAwaitSetup) violation("CTRL_SETUP", m);
        if (m.kind != MessageKind::kYCipher) violation("Y_CIPHER or CTRL_SETUP", m);
        if (m.seq != next_seq_) {
          throw ProtocolError("Y_CIPHER seq " + std::to_string(m.seq) + ", expected " + std::to_string(next_seq_));
        }
        {
          const Ciphertext y = decode_y_payload(m.payload, *params_);
          ControllerReply reply;
          try {
            reply.u = controller_->step(y);
          } catch (const ShapeMismatch& e) {
            throw ProtocolError(std::string("Y_CIPHER rejected: ") + e.what());
          }
          reply.next_state = controller_->state();
          ++next_seq_;
          return WireMessage{MessageKind::kUCipher, m.seq, u_payload(reply, *params_)};
        }
      case State::kClosed:
        throw ProtocolError("message after SHUTDOWN");
    }
    throw ProtocolError("unreachable protocol state");
  }

  State state() const { return state_; }
  std::uint64_t steps_served() const { return next_seq_; }

 private:
  [[noreturn]] static void violation(const char* expected, const WireMessage& m) {
    throw ProtocolError(std::string("protocol violation: expected ") + expected + ", got " + kind_name(m.kind));
  }

  State state_ = State::kAwaitHello;
  std::optional<Params> params_;
  std::optional<EncryptedController> controller_;
  std::uint64_t next_seq_ = 0;
};

struct ServeResult {
  std::uint64_t steps = 0;
  bool clean_shutdown = false;
};

/// Serves one session until SHUTDOWN. On a protocol error the connection is
/// closed and the error rethrown.
inline ServeResult serve_controller(Transport& transport) {
  ControllerSession session;
  try {
    while (session.state() != ControllerSession::State::kClosed) {
      const WireMessage m = recv_message(transport);
      if (auto reply = session.handle(m)) send_message(transport, *reply);
    }
  } catch (const ProtocolError&) {
    transport.close();
    throw;
  }
  transport.close();
  return {session.steps_served(), true};
}

/// Listens on `listen_addr`, serves exactly one session. `on_listening` gets
/// the bound port (useful with port 0).
inline ServeResult serve_controller(const std::string& listen_addr,
                                    const std::function<void(std::uint16_t)>& on_listening = {}) {
  TcpListener listener(listen_addr);
  if (on_listening) on_listening(listener.port());
  auto conn = listener.accept();
  return serve_controller(*conn);
}

// ---------------------------------------------------------------------------
// Plant endpoint

namespace detail {

inline WireMessage expect(Transport& t, MessageKind kind, std::uint64_t seq) {
  WireMessage m = recv_message(t);
  if (m.kind != kind) throw ProtocolError(std::string("expected ") + kind_name(kind) + ", got " + kind_name(m.kind));
  if (m.seq != seq) throw ProtocolError("seq mismatch: got " + std::to_string(m.seq) + ", expected " + std::to_string(seq));
  return m;
}

}  // namespace detail

/// Plant side of the networked loop. Encrypts the controller with `rng`
/// (exactly as the in-process path does), ships the ciphertexts, then runs the
/// loop. A lost connection yields the partial trace with complete = false.
inline LoopTrace run_plant_side(Transport& transport, const Plant& plant, const QuantizedController& qc,
                                const SecretKey& key, const Params& params, Rng& rng, std::size_t horizon,
                                const EncryptOptions& opts = {}) {
  if (horizon == 0) {
    send_message(transport, {MessageKind::kShutdown, 0, {}});
    LoopTrace empty{LoopKind::kEncrypted, plant.order(), qc.order(), {}, plant.x, true};
    return empty;
  }
  send_message(transport, {MessageKind::kHello, 0, hello_payload()});
  check_hello(recv_message(transport));
  send_message(transport, {MessageKind::kParams, 0, params_payload(params)});
  detail::expect(transport, MessageKind::kStepAck, 0);

  EncryptedController ec = encrypt_controller(qc, key, params, rng, opts);
  send_message(transport, {MessageKind::kCtrlSetup, 0, setup_payload(ec)});
  detail::expect(transport, MessageKind::kStepAck, 0);

  LoopTrace trace = run_encrypted_loop(
      plant, qc, key, params, rng, horizon, ec.state(),
      [&](const Ciphertext& y, std::size_t t) {
        send_message(transport, {MessageKind::kYCipher, t, serialize_ciphertext(y, params)});
        const WireMessage reply = detail::expect(transport, MessageKind::kUCipher, t);
        return decode_u_payload(reply.payload);
      },
      opts);
  if (trace.complete) send_message(transport, {MessageKind::kShutdown, horizon, {}});
  return trace;
}

inline LoopTrace run_plant_side(const std::string& connect_addr, const Plant& plant, const QuantizedController& qc,
                                const SecretKey& key, const Params& params, Rng& rng, std::size_t horizon,
                                const EncryptOptions& opts = {}) {
  auto conn = tcp_connect(connect_addr);
  return run_plant_side(*conn, plant, qc, key, params, rng, horizon, opts);
}

}  // namespace enctrl::net

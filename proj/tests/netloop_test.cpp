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


#include "enctrl/netloop.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <future>
#include <thread>

#include "fixtures.hpp"

namespace {

using enctrl::Bytes;
using enctrl::LoopTrace;
using enctrl::net::ControllerSession;
using enctrl::net::MessageKind;
using enctrl::net::WireMessage;
using namespace enctrl_test;

struct PlantSide {
  enctrl::Params params = ScalarParams();
  enctrl::Rng rng;
  enctrl::SecretKey key;
  enctrl::QuantizedController qc = enctrl::quantize(ScalarController(), ScalarScales());

  explicit PlantSide(std::uint64_t seed) : rng(seed), key(enctrl::keygen(params, rng)) {}

  LoopTrace Run(enctrl::net::Transport& t, std::size_t horizon = kScalarHorizon) {
    return enctrl::net::run_plant_side(t, ScalarPlant(), qc, key, params, rng, horizon);
  }
};

TEST(Frames, RoundTripEveryKind) {
  for (std::uint8_t k = 1; k <= 7; ++k) {
    const WireMessage m{static_cast<MessageKind>(k), 0x0102030405060708ull * k, Bytes{1, 2, 3, k}};
    const Bytes frame = enctrl::net::encode_frame(m);
    ASSERT_EQ(frame.size(), 4 + 1 + 8 + 4u);
    EXPECT_EQ(frame[0], 13);  // length counts kind, seq and payload
    EXPECT_EQ(frame[4], k);
    EXPECT_EQ(enctrl::net::decode_frame(frame), m);
  }
}

TEST(Frames, RejectsMalformed) {
  Bytes frame = enctrl::net::encode_frame({MessageKind::kStepAck, 1, {}});
  Bytes unknown = frame;
  unknown[4] = 42;
  EXPECT_THROW(enctrl::net::decode_frame(unknown), enctrl::ProtocolError);
  Bytes short_len = frame;
  short_len[0] = 3;
  EXPECT_THROW(enctrl::net::decode_frame(short_len), enctrl::ProtocolError);
  EXPECT_THROW(enctrl::net::decode_frame(Bytes{1, 0}), enctrl::ProtocolError);
  frame.push_back(0);
  EXPECT_THROW(enctrl::net::decode_frame(frame), enctrl::ProtocolError);
}

TEST(Frames, OversizedLengthPrefixIsRejected) {
  auto [a, b] = enctrl::net::make_pipe();
  a->send(Bytes{0xFF, 0xFF, 0xFF, 0xFF});
  EXPECT_THROW(enctrl::net::recv_message(*b), enctrl::ProtocolError);
}

TEST(Loopback, PipeRunEqualsInProcessRun) {
  for (std::uint64_t seed : {1, 2}) {
    auto [plant_end, ctrl_end] = enctrl::net::make_pipe();
    auto server = std::async(std::launch::async, [&, c = ctrl_end.get()] { return enctrl::net::serve_controller(*c); });
    PlantSide plant(seed);
    const LoopTrace net = plant.Run(*plant_end);
    const auto served = server.get();
    EXPECT_TRUE(served.clean_shutdown);
    EXPECT_EQ(served.steps, kScalarHorizon);

    const auto local = RunScalarEncrypted(seed);
    ASSERT_TRUE(net.complete);
    EXPECT_EQ(net.steps, local.trace.steps);
    EXPECT_EQ(net.final_xp, local.trace.final_xp);
  }
}

TEST(Loopback, TcpRunEqualsInProcessRun) {
  enctrl::net::TcpListener listener("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(listener.port());
  auto server = std::async(std::launch::async, [&] {
    auto conn = listener.accept();
    return enctrl::net::serve_controller(*conn);
  });
  const auto start = std::chrono::steady_clock::now();
  PlantSide plant(9);
  auto conn = enctrl::net::tcp_connect(addr);
  const LoopTrace net = plant.Run(*conn);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_TRUE(server.get().clean_shutdown);
  EXPECT_LT(secs, 60.0);
  EXPECT_EQ(net.steps, RunScalarEncrypted(9).trace.steps);
}

TEST(Loopback, ZeroHorizonShutsDownImmediately) {
  auto [plant_end, ctrl_end] = enctrl::net::make_pipe();
  auto server = std::async(std::launch::async, [c = ctrl_end.get()] { return enctrl::net::serve_controller(*c); });
  PlantSide plant(1);
  const LoopTrace t = plant.Run(*plant_end, 0);
  EXPECT_TRUE(t.steps.empty());
  EXPECT_TRUE(t.complete);
  const auto served = server.get();
  EXPECT_TRUE(served.clean_shutdown);
  EXPECT_EQ(served.steps, 0u);
}

TEST(Loopback, ConnectionLossYieldsIncompleteTrace) {
  auto [plant_end, ctrl_end] = enctrl::net::make_pipe();
  auto fake = std::async(std::launch::async, [c = ctrl_end.get()] {
    ControllerSession session;
    for (int served = 0;;) {
      const WireMessage m = enctrl::net::recv_message(*c);
      if (m.kind == MessageKind::kYCipher && served++ == 5) {
        c->close();
        return;
      }
      if (auto reply = session.handle(m)) enctrl::net::send_message(*c, *reply);
    }
  });
  PlantSide plant(1);
  const LoopTrace t = plant.Run(*plant_end);
  fake.get();
  EXPECT_FALSE(t.complete);
  EXPECT_EQ(t.steps.size(), 5u);
}

TEST(Loopback, SequenceMismatchAborts) {
  auto [plant_end, ctrl_end] = enctrl::net::make_pipe();
  auto fake = std::async(std::launch::async, [c = ctrl_end.get()] {
    ControllerSession session;
    try {
      for (;;) {
        const WireMessage m = enctrl::net::recv_message(*c);
        auto reply = session.handle(m);
        if (reply && reply->kind == MessageKind::kUCipher && reply->seq == 3) reply->seq = 7;
        if (reply) enctrl::net::send_message(*c, *reply);
      }
    } catch (const enctrl::Error&) {
    }
  });
  PlantSide plant(1);
  EXPECT_THROW(plant.Run(*plant_end), enctrl::ProtocolError);
  plant_end->close();
  fake.get();
}

class SessionTest : public ::testing::Test {
 protected:
  PlantSide plant_{4};
  ControllerSession session_;

  WireMessage SetupMessage() {
    auto ec = enctrl::encrypt_controller(plant_.qc, plant_.key, plant_.params, plant_.rng);
    return {MessageKind::kCtrlSetup, 0, enctrl::net::setup_payload(ec)};
  }
  WireMessage Y(std::uint64_t seq, enctrl::Int y = 5) {
    return {MessageKind::kYCipher, seq,
            enctrl::serialize_ciphertext(enctrl::encrypt({y}, plant_.key, plant_.params, plant_.rng), plant_.params)};
  }
  void Handshake() {
    ASSERT_TRUE(session_.handle({MessageKind::kHello, 0, enctrl::net::hello_payload()}));
    ASSERT_TRUE(session_.handle({MessageKind::kParams, 0, enctrl::net::params_payload(plant_.params)}));
  }
};

TEST_F(SessionTest, OutputBeforeSetupIsRejected) {
  Handshake();
  EXPECT_THROW(session_.handle(Y(0)), enctrl::ProtocolError);
}

TEST_F(SessionTest, MessagesBeforeHelloAreRejected) {
  EXPECT_THROW(session_.handle(Y(0)), enctrl::ProtocolError);
  ControllerSession fresh;
  EXPECT_THROW(fresh.handle({MessageKind::kHello, 0, Bytes{1, 2, 3}}), enctrl::ProtocolError);
}

TEST_F(SessionTest, LockstepSequence) {
  Handshake();
  ASSERT_TRUE(session_.handle(SetupMessage()));
  const auto r0 = session_.handle(Y(0));
  ASSERT_TRUE(r0);
  EXPECT_EQ(r0->kind, MessageKind::kUCipher);
  EXPECT_EQ(r0->seq, 0u);
  EXPECT_THROW(session_.handle(Y(0)), enctrl::ProtocolError);  // replay
}

TEST_F(SessionTest, SkippedSequenceIsRejected) {
  Handshake();
  ASSERT_TRUE(session_.handle(SetupMessage()));
  EXPECT_THROW(session_.handle(Y(1)), enctrl::ProtocolError);
}

TEST_F(SessionTest, NewSetupResetsTheSession) {
  Handshake();
  ASSERT_TRUE(session_.handle(SetupMessage()));
  ASSERT_TRUE(session_.handle(Y(0)));
  ASSERT_TRUE(session_.handle(Y(1)));
  ASSERT_TRUE(session_.handle(SetupMessage()));
  EXPECT_EQ(session_.steps_served(), 0u);
  EXPECT_TRUE(session_.handle(Y(0)));
}

TEST_F(SessionTest, ShutdownMidRunDiscardsState) {
  Handshake();
  ASSERT_TRUE(session_.handle(SetupMessage()));
  ASSERT_TRUE(session_.handle(Y(0)));
  EXPECT_FALSE(session_.handle({MessageKind::kShutdown, 1, {}}));
  EXPECT_EQ(session_.state(), ControllerSession::State::kClosed);
  EXPECT_THROW(session_.handle(Y(1)), enctrl::ProtocolError);
}

TEST_F(SessionTest, MalformedOutputCiphertextIsRejected) {
  Handshake();
  ASSERT_TRUE(session_.handle(SetupMessage()));
  WireMessage y = Y(0);
  y.payload.resize(y.payload.size() - 3);
  EXPECT_THROW(session_.handle(y), enctrl::ProtocolError);
  WireMessage two_rows{MessageKind::kYCipher, 0,
                       enctrl::serialize_ciphertext(enctrl::encrypt({1, 2}, plant_.key, plant_.params, plant_.rng),
                                                    plant_.params)};
  EXPECT_THROW(session_.handle(two_rows), enctrl::ProtocolError);
}

TEST_F(SessionTest, SetupAdmitsNoKeyMaterial) {
  Handshake();
  const Bytes key_file = enctrl::serialize_key_file(plant_.key, plant_.params);

  // A key file in place of the setup payload.
  EXPECT_THROW(session_.handle({MessageKind::kCtrlSetup, 0, key_file}), enctrl::ProtocolError);

  // A valid setup with key bytes smuggled after it.
  WireMessage smuggled = SetupMessage();
  smuggled.payload.insert(smuggled.payload.end(), key_file.begin(), key_file.end());
  EXPECT_THROW(session_.handle(smuggled), enctrl::ProtocolError);

  // The initial-state slot holding a key block instead of a ciphertext.
  auto ec = enctrl::encrypt_controller(plant_.qc, plant_.key, plant_.params, plant_.rng);
  enctrl::ByteWriter w;
  enctrl::write_gsw_matrix(w, ec.f(), plant_.params);
  enctrl::write_gsw_matrix(w, ec.g(), plant_.params);
  enctrl::write_gsw_matrix(w, ec.h(), plant_.params);
  enctrl::write_gsw_matrix(w, ec.j(), plant_.params);
  const Bytes sk_block(key_file.begin() + static_cast<std::ptrdiff_t>(enctrl::serialize_params(plant_.params).size()),
                       key_file.end());
  w.bytes(sk_block);
  EXPECT_THROW(session_.handle({MessageKind::kCtrlSetup, 0, w.take()}), enctrl::ProtocolError);

  // The controller never needs the seed; the plant strips it from PARAMS.
  EXPECT_EQ(enctrl::deserialize_params(enctrl::net::params_payload(plant_.params)).seed, 0u);
}

TEST(Transport, PipeReportsClosedPeer) {
  auto [a, b] = enctrl::net::make_pipe();
  a->close();
  EXPECT_THROW(b->recv(1), enctrl::TransportError);
  EXPECT_THROW(b->send(Bytes{1}), enctrl::TransportError);
}

TEST(Transport, TcpConnectFailureIsReported) {
  std::uint16_t port = 0;
  {
    enctrl::net::TcpListener l("127.0.0.1:0");
    port = l.port();
  }
  EXPECT_THROW(enctrl::net::tcp_connect("127.0.0.1:" + std::to_string(port)), enctrl::TransportError);
  EXPECT_THROW(enctrl::net::parse_address("host:"), enctrl::ParseError);
}

}  // namespace

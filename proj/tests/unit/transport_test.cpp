#include <gtest/gtest.h>

#include <thread>

#include "ppodc/errors.hpp"
#include "ppodc/transport.hpp"
#include "support.hpp"

namespace ppodc::transport {
namespace {

using testing::test_keys;

Frame roundtrip(const Frame& f) { return decode_frame(encode_frame(f)); }

TEST(FrameCodec, CiphertextBoundaryValuesRoundTrip) {
  const BigInt n2 = test_keys().pub.n_squared();
  for (const BigInt& v : {BigInt(0), BigInt(1), BigInt(n2 - 1)}) {
    Frame f{MessageType::kSmpMasked, 42, PayloadWriter().put(v).take()};
    Frame g = roundtrip(f);
    EXPECT_EQ(g.type, MessageType::kSmpMasked);
    EXPECT_EQ(g.session_id, 42u);
    PayloadReader r(g.payload);
    EXPECT_EQ(r.get(), v);
    EXPECT_NO_THROW(r.expect_end());
  }
}

TEST(FrameCodec, EmptyControlFrameHasLengthFive) {
  Frame f{MessageType::kControl, 7, {}};
  auto bytes = encode_frame(f);
  ASSERT_EQ(bytes.size(), kHeaderBytes);
  EXPECT_EQ(bytes[0], 0);
  EXPECT_EQ(bytes[1], 0);
  EXPECT_EQ(bytes[2], 0);
  EXPECT_EQ(bytes[3], 5);
  EXPECT_EQ(bytes[4], static_cast<std::uint8_t>(MessageType::kControl));
  EXPECT_EQ(bytes[8], 7);
  EXPECT_TRUE(roundtrip(f).payload.empty());
}

TEST(FrameCodec, EveryTypeRoundTrips) {
  for (std::uint8_t raw = 1; raw <= 16; ++raw) {
    ASSERT_TRUE(is_known_type(raw));
    Frame f{static_cast<MessageType>(raw), raw, PayloadWriter().put(std::uint64_t{raw}).take()};
    EXPECT_EQ(roundtrip(f).type, f.type);
  }
  EXPECT_FALSE(is_known_type(0));
  EXPECT_FALSE(is_known_type(17));
}

TEST(FrameCodec, MalformedFramesAreIntegrityErrors) {
  Frame f{MessageType::kSmpProduct, 1, PayloadWriter().put(BigInt(12345)).take()};
  auto bytes = encode_frame(f);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_frame(truncated), IntegrityError);

  auto padded = bytes;
  padded.push_back(0);
  EXPECT_THROW(decode_frame(padded), IntegrityError);

  auto unknown = bytes;
  unknown[4] = 99;
  EXPECT_THROW(decode_frame(unknown), IntegrityError);

  std::vector<std::uint8_t> short_header{0, 0, 0};
  EXPECT_THROW(decode_frame(short_header), IntegrityError);
}

TEST(Payload, ReaderRejectsOverrunAndTrailingBytes) {
  auto bytes = PayloadWriter().put(BigInt(5)).put(BigInt(6)).take();
  PayloadReader r(bytes);
  EXPECT_EQ(r.get(), 5);
  EXPECT_THROW(r.expect_end(), IntegrityError);
  EXPECT_EQ(r.get(), 6);
  EXPECT_TRUE(r.at_end());
  EXPECT_THROW(r.get(), IntegrityError);

  std::vector<std::uint8_t> lying{0, 9, 1};
  PayloadReader bad(lying);
  EXPECT_THROW(bad.get(), IntegrityError);
}

TEST(Payload, StringsAndSmallIntegers) {
  auto bytes = PayloadWriter().put_string("row 3").put(std::uint64_t{0}).put(std::uint64_t{300}).take();
  PayloadReader r(bytes);
  EXPECT_EQ(r.get_string(), "row 3");
  EXPECT_EQ(r.get_u64(), 0u);
  EXPECT_EQ(r.get_u64(), 300u);
  r.expect_end();
}

TEST(InProcChannel, DeliversInOrderAndCounts) {
  auto [a, b] = make_inproc_pair();
  TrafficCounters ca, cb;
  a->set_counters(&ca);
  b->set_counters(&cb);
  for (std::uint32_t i = 0; i < 10; ++i) a->send(Frame{MessageType::kControl, i, {}});
  for (std::uint32_t i = 0; i < 10; ++i) EXPECT_EQ(b->recv().session_id, i);
  EXPECT_EQ(ca.messages_sent.load(), 10u);
  EXPECT_EQ(ca.bytes_sent.load(), 10 * kHeaderBytes);
  EXPECT_EQ(cb.messages_received.load(), 10u);
  a->close();
  EXPECT_THROW(b->recv(), ProtocolAbort);
}

TEST(MuxStreams, InterleavedStreamsStayFifo) {
  auto [a, b] = make_inproc_pair();
  Mux left(std::move(a)), right(std::move(b));
  constexpr int kStreams = 4, kFrames = 50;
  std::vector<std::thread> senders;
  for (int s = 1; s <= kStreams; ++s) {
    senders.emplace_back([&left, s] {
      Stream st = left.open_stream(static_cast<std::uint32_t>(s));
      for (int i = 0; i < kFrames; ++i)
        st.send(MessageType::kSmpMasked, PayloadWriter().put(std::uint64_t(i)).take());
    });
  }
  for (auto& t : senders) t.join();
  std::vector<Stream> accepted;
  for (int s = 0; s < kStreams; ++s) {
    auto st = right.accept();
    ASSERT_TRUE(st.has_value());
    accepted.push_back(*st);
  }
  for (auto& st : accepted) {
    for (int i = 0; i < kFrames; ++i) {
      Frame f = st.recv();
      EXPECT_EQ(f.session_id, st.id());
      PayloadReader r(f.payload);
      EXPECT_EQ(r.get_u64(), static_cast<std::uint64_t>(i));
    }
  }
}

TEST(MuxStreams, ErrorFrameSurfacesAsIntegrityError) {
  auto [a, b] = make_inproc_pair();
  Mux left(std::move(a)), right(std::move(b));
  Stream s = left.open_stream(1);
  s.send(MessageType::kSmpMasked, {});
  auto peer = right.accept();
  ASSERT_TRUE(peer.has_value());
  peer->recv();
  peer->send(MessageType::kControl, error_payload("bad input"));
  EXPECT_THROW(s.recv_expect(MessageType::kSmpProduct), IntegrityError);
  peer->send(MessageType::kSlsbParity, {});
  EXPECT_THROW(s.recv_expect(MessageType::kSmpProduct), IntegrityError);
}

TEST(MuxStreams, CloseUnblocksAccept) {
  auto [a, b] = make_inproc_pair();
  Mux left(std::move(a)), right(std::move(b));
  std::thread closer([&left] { left.close(); });
  EXPECT_FALSE(right.accept().has_value());
  closer.join();
}

TEST(Endpoint, Parse) {
  auto ep = Endpoint::parse("127.0.0.1:9001");
  EXPECT_EQ(ep.host, "127.0.0.1");
  EXPECT_EQ(ep.port, 9001);
  EXPECT_THROW(Endpoint::parse("nohost"), UsageError);
}

TEST(Tcp, LoopbackRoundTrip) {
  TcpListener listener(Endpoint{"127.0.0.1", 0});
  ASSERT_NE(listener.port(), 0);
  const BigInt big = test_keys().pub.n_squared() - 1;
  std::thread client([&] {
    auto ch = tcp_connect(Endpoint{"127.0.0.1", listener.port()});
    ch->send(Frame{MessageType::kEncForward, 3, PayloadWriter().put(big).take()});
    Frame reply = ch->recv();
    EXPECT_EQ(reply.type, MessageType::kControl);
    ch->close();
  });
  auto server = listener.accept();
  Frame f = server->recv();
  EXPECT_EQ(f.type, MessageType::kEncForward);
  EXPECT_EQ(f.session_id, 3u);
  PayloadReader r(f.payload);
  EXPECT_EQ(r.get(), big);
  server->send(Frame{MessageType::kControl, 3, control_payload(ControlOp::kAck)});
  client.join();
  EXPECT_THROW(server->recv(), ProtocolAbort);
}

}  // namespace
}  // namespace ppodc::transport

#pragma once

// Framed duplex messaging between parties.
//
// Wire format of one frame (all integers big-endian):
//
//   u32 length | u8 msg_type | u32 session_id | payload
//
// where length counts msg_type + session_id + payload (so an empty payload
// gives length 5). Payload integers are a u16 byte count followed by the
// big-endian magnitude; zero is a zero-length magnitude.
//
// Channels carry serialised frames. A Mux multiplexes independent sessions
// (streams) over one channel; each stream is FIFO.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ppodc/bigint.hpp"

namespace ppodc::transport {

enum class MessageType : std::uint8_t {
  kShareUpload = 1,
  kEncForward = 2,
  kSmpMasked = 3,
  kSmpProduct = 4,
  kSlsbMasked = 5,
  kSlsbParity = 6,
  kSminkPermuted = 7,
  kSminkIndicators = 8,
  kSetcGammaEnc = 9,
  kSetcGammaPlain = 10,
  kRevealMasked = 11,
  kRevealPlain = 12,
  kControl = 13,
  kZeroTestMasked = 14,
  kZeroTestResult = 15,
  kRevealMasks = 16,
};

const char* to_string(MessageType t);
bool is_known_type(std::uint8_t raw);

// First payload integer of a CONTROL frame.
enum class ControlOp : std::uint64_t {
  kAck = 0,
  kError = 1,
  kHello = 2,       // [op, role, user_id]
  kPublicKey = 3,   // [op, N]
  kCacheReset = 4,  // drop the session's mask cache
  kPrecompute = 5,  // [op, count]: top the peer's pool up to count
  kFetchShares = 6, // [op, m, l]: ask C2 to forward its encrypted shares
  kShutdown = 7,
};

constexpr std::size_t kHeaderBytes = 4 + 1 + 4;

struct Frame {
  MessageType type = MessageType::kControl;
  std::uint32_t session_id = 0;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(const Frame& f);
// Decodes one complete frame including its length prefix. Throws
// IntegrityError on a length mismatch or unknown type.
Frame decode_frame(std::span<const std::uint8_t> bytes);

class PayloadWriter {
 public:
  PayloadWriter& put(const BigInt& v);
  PayloadWriter& put(std::uint64_t v) { return put(BigInt(static_cast<unsigned long>(v))); }
  // Raw bytes with the same u16 length prefix as integers.
  PayloadWriter& put_string(const std::string& s);
  template <typename Range>
  PayloadWriter& put_all(const Range& values) {
    for (const auto& v : values) put(v);
    return *this;
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  BigInt get();
  std::uint64_t get_u64();
  std::string get_string();
  bool at_end() const { return pos_ == bytes_.size(); }
  // Throws IntegrityError if bytes remain.
  void expect_end() const;

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Bytes and messages moved through one endpoint.
struct TrafficCounters {
  std::atomic<std::uint64_t> messages_sent{0};
  std::atomic<std::uint64_t> bytes_sent{0};
  std::atomic<std::uint64_t> messages_received{0};
  std::atomic<std::uint64_t> bytes_received{0};
  void reset();
};

// A duplex pipe of frames. One sender and one receiver may use it
// concurrently; send() is additionally safe for several senders.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Frame& f) = 0;
  // Blocks. Throws ProtocolAbort once the peer closed and nothing is queued.
  virtual Frame recv() = 0;
  virtual void close() = 0;

  void set_counters(TrafficCounters* c) { counters_ = c; }

 protected:
  void count_sent(std::size_t bytes);
  void count_received(std::size_t bytes);

 private:
  TrafficCounters* counters_ = nullptr;
};

// Two connected in-process endpoints. Frames travel serialised so the wire
// codec is exercised exactly as over TCP.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inproc_pair();

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
  static Endpoint parse(const std::string& text);  // "host:port"
};

std::unique_ptr<Channel> tcp_connect(const Endpoint& ep, int retries = 50,
                                     int retry_delay_ms = 100);

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& ep);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  std::unique_ptr<Channel> accept();
  std::uint16_t port() const { return port_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// CONTROL frame payloads.
std::vector<std::uint8_t> control_payload(ControlOp op);
std::vector<std::uint8_t> error_payload(const std::string& message);

class Mux;

// One session over a Mux. Frames sent carry this stream's session id.
class Stream {
 public:
  Stream(Mux* mux, std::uint32_t id) : mux_(mux), id_(id) {}
  std::uint32_t id() const { return id_; }
  void send(MessageType type, std::vector<std::uint8_t> payload);
  Frame recv();
  // recv() and check the type; a CONTROL error frame from the peer is
  // rethrown as IntegrityError.
  Frame recv_expect(MessageType type);

 private:
  Mux* mux_;
  std::uint32_t id_;
};

class Mux {
 public:
  explicit Mux(std::unique_ptr<Channel> channel);
  ~Mux();
  Mux(const Mux&) = delete;
  Mux& operator=(const Mux&) = delete;

  // Stream creation is serialised; ids must be unique per side.
  Stream open_stream(std::uint32_t session_id);
  // Server side: next session id seen for the first time, or nullopt once
  // the channel is closed.
  std::optional<Stream> accept();
  void close();

 private:
  friend class Stream;
  struct Queue {
    std::deque<Frame> frames;
  };
  void reader_loop();
  Queue& queue_for(std::uint32_t id);
  Frame pop(std::uint32_t id);
  void push_frame(Frame f);

  std::unique_ptr<Channel> channel_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint32_t, Queue> queues_;
  std::deque<std::uint32_t> pending_accept_;
  bool closed_ = false;
  std::thread reader_;
};

}  // namespace ppodc::transport

#include <array>

#include "ppodc/errors.hpp"
#include "ppodc/transport.hpp"

namespace ppodc::transport {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

const char* to_string(MessageType t) {
  switch (t) {
    case MessageType::kShareUpload: return "SHARE_UPLOAD";
    case MessageType::kEncForward: return "ENC_FORWARD";
    case MessageType::kSmpMasked: return "SMP_MASKED";
    case MessageType::kSmpProduct: return "SMP_PRODUCT";
    case MessageType::kSlsbMasked: return "SLSB_MASKED";
    case MessageType::kSlsbParity: return "SLSB_PARITY";
    case MessageType::kSminkPermuted: return "SMINK_PERMUTED";
    case MessageType::kSminkIndicators: return "SMINK_INDICATORS";
    case MessageType::kSetcGammaEnc: return "SETC_GAMMA_ENC";
    case MessageType::kSetcGammaPlain: return "SETC_GAMMA_PLAIN";
    case MessageType::kRevealMasked: return "REVEAL_MASKED";
    case MessageType::kRevealPlain: return "REVEAL_PLAIN";
    case MessageType::kControl: return "CONTROL";
    case MessageType::kZeroTestMasked: return "ZERO_TEST_MASKED";
    case MessageType::kZeroTestResult: return "ZERO_TEST_RESULT";
    case MessageType::kRevealMasks: return "REVEAL_MASKS";
  }
  return "UNKNOWN";
}

bool is_known_type(std::uint8_t raw) { return raw >= 1 && raw <= 16; }

std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::size_t body = 1 + 4 + f.payload.size();
  if (body > 0xFFFFFFFFu) throw UsageError("frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(4 + body);
  put_u32(out, static_cast<std::uint32_t>(body));
  out.push_back(static_cast<std::uint8_t>(f.type));
  put_u32(out, f.session_id);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw IntegrityError("frame shorter than header");
  std::uint32_t length = get_u32(bytes, 0);
  if (length != bytes.size() - 4) throw IntegrityError("frame length mismatch");
  if (!is_known_type(bytes[4])) throw IntegrityError("unknown message type");
  Frame f;
  f.type = static_cast<MessageType>(bytes[4]);
  f.session_id = get_u32(bytes, 5);
  f.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
  return f;
}

PayloadWriter& PayloadWriter::put(const BigInt& v) {
  auto mag = to_bytes(v);
  if (mag.size() > 0xFFFF) throw UsageError("integer too large for payload encoding");
  bytes_.push_back(static_cast<std::uint8_t>(mag.size() >> 8));
  bytes_.push_back(static_cast<std::uint8_t>(mag.size()));
  bytes_.insert(bytes_.end(), mag.begin(), mag.end());
  return *this;
}

PayloadWriter& PayloadWriter::put_string(const std::string& s) {
  if (s.size() > 0xFFFF) throw UsageError("string too long for payload encoding");
  bytes_.push_back(static_cast<std::uint8_t>(s.size() >> 8));
  bytes_.push_back(static_cast<std::uint8_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
  return *this;
}

std::string PayloadReader::get_string() {
  if (bytes_.size() - pos_ < 2) throw IntegrityError("payload truncated");
  std::size_t n = (std::size_t{bytes_[pos_]} << 8) | bytes_[pos_ + 1];
  pos_ += 2;
  if (bytes_.size() - pos_ < n) throw IntegrityError("payload truncated");
  std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> control_payload(ControlOp op) {
  return PayloadWriter().put(static_cast<std::uint64_t>(op)).take();
}

std::vector<std::uint8_t> error_payload(const std::string& message) {
  return PayloadWriter().put(static_cast<std::uint64_t>(ControlOp::kError)).put_string(message).take();
}

BigInt PayloadReader::get() {
  if (bytes_.size() - pos_ < 2) throw IntegrityError("payload truncated");
  std::size_t n = (std::size_t{bytes_[pos_]} << 8) | bytes_[pos_ + 1];
  pos_ += 2;
  if (bytes_.size() - pos_ < n) throw IntegrityError("payload truncated");
  BigInt v = from_bytes(bytes_.subspan(pos_, n));
  pos_ += n;
  return v;
}

std::uint64_t PayloadReader::get_u64() {
  BigInt v = get();
  if (bit_length(v) > 64) throw IntegrityError("payload integer exceeds 64 bits");
  return mpz_get_ui(v.get_mpz_t());
}

void PayloadReader::expect_end() const {
  if (!at_end()) throw IntegrityError("trailing bytes in payload");
}

void TrafficCounters::reset() {
  messages_sent = 0;
  bytes_sent = 0;
  messages_received = 0;
  bytes_received = 0;
}

}  // namespace ppodc::transport

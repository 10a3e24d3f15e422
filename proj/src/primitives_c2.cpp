#include "ppodc/errors.hpp"
#include "ppodc/primitives.hpp"

namespace ppodc::primitives {

using transport::ControlOp;
using transport::Frame;
using transport::MessageType;
using transport::PayloadReader;
using transport::PayloadWriter;
using transport::Stream;

void DecryptionLog::record(MessageType type, const BigInt& v) {
  std::lock_guard lock(mu_);
  entries_.push_back({type, v});
}

std::vector<DecryptionLog::Entry> DecryptionLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

void DecryptionLog::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

Ciphertext C2Responder::encrypt(const BigInt& m) {
  return paillier::encrypt(pk(), m, use_pool_ ? &pool_ : nullptr, ctx_.counters);
}

BigInt C2Responder::decrypt(const Ciphertext& c, MessageType logged_as) {
  BigInt v = paillier::decrypt(*ctx_.sk, c, ctx_.counters);
  if (ctx_.log != nullptr) ctx_.log->record(logged_as, v);
  return v;
}

Ciphertext C2Responder::read_ciphertext(PayloadReader& r) const {
  return Ciphertext{r.get(), pk().id()};
}

bool C2Responder::handle(Stream& stream, const Frame& request) {
  PayloadReader r(request.payload);
  switch (request.type) {
    case MessageType::kSmpMasked:
      on_smp(stream, r);
      return true;
    case MessageType::kSlsbMasked:
      on_slsb(stream, r);
      return true;
    case MessageType::kSminkPermuted:
      on_smink(stream, r);
      return true;
    case MessageType::kSetcGammaEnc:
      on_gamma(stream, r);
      return true;
    case MessageType::kZeroTestMasked:
      on_zero_test(stream, r);
      return true;
    case MessageType::kControl:
      return on_control(stream, r);
    default:
      return false;
  }
}

// Payload: count, then per pair two operands [handle, sent, ct if sent].
void C2Responder::on_smp(Stream& stream, PayloadReader& r) {
  const BigInt& n = pk().n();
  auto count = r.get_u64();
  auto operand = [&]() -> BigInt {
    auto handle = r.get_u64();
    auto sent = r.get_u64();
    if (sent != 0) {
      BigInt v = decrypt(read_ciphertext(r), MessageType::kSmpMasked);
      if (handle != 0) cache_[handle] = v;
      return v;
    }
    auto it = cache_.find(handle);
    if (it == cache_.end()) throw IntegrityError("unknown mask handle " + std::to_string(handle));
    return it->second;
  };
  std::vector<BigInt> products;
  products.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    BigInt a = operand();
    BigInt b = operand();
    products.push_back(mod(a * b, n));
  }
  r.expect_end();
  PayloadWriter w;
  w.put(count);
  for (const auto& h : products) w.put(encrypt(h).value);
  stream.send(MessageType::kSmpProduct, w.take());
}

// Payload: count(1), masked ciphertext, bit position.
void C2Responder::on_slsb(Stream& stream, PayloadReader& r) {
  if (r.get_u64() != 1) throw IntegrityError("SLSB request count must be 1");
  BigInt z = decrypt(read_ciphertext(r), MessageType::kSlsbMasked);
  auto shift = r.get_u64();
  r.expect_end();
  BigInt bit = mpz_tstbit(z.get_mpz_t(), shift);
  PayloadWriter w;
  w.put(std::uint64_t{1}).put(encrypt(bit).value);
  stream.send(MessageType::kSlsbParity, w.take());
}

void C2Responder::on_smink(Stream& stream, PayloadReader& r) {
  auto k = r.get_u64();
  std::vector<bool> zero(k);
  std::size_t zeros = 0;
  for (std::uint64_t i = 0; i < k; ++i) {
    BigInt v = decrypt(read_ciphertext(r), MessageType::kSminkPermuted);
    zero[i] = sgn(v) == 0;
    zeros += zero[i] ? 1 : 0;
  }
  r.expect_end();
  if (zeros != 1)
    throw IntegrityError("SMIN_k: expected exactly one zero entry, found " + std::to_string(zeros));
  PayloadWriter w;
  w.put(k);
  for (bool z : zero) w.put(encrypt(BigInt(z ? 1 : 0)).value);
  stream.send(MessageType::kSminkIndicators, w.take());
}

void C2Responder::on_gamma(Stream& stream, PayloadReader& r) {
  BigInt gamma = decrypt(read_ciphertext(r), MessageType::kSetcGammaEnc);
  r.expect_end();
  if (gamma != 0 && gamma != 1) throw IntegrityError("termination bit is not 0 or 1");
  PayloadWriter w;
  w.put(gamma);
  stream.send(MessageType::kSetcGammaPlain, w.take());
}

// Payload: count, then ciphertexts E(x)^r. Reply: count, then 1 for zero.
void C2Responder::on_zero_test(Stream& stream, PayloadReader& r) {
  auto count = r.get_u64();
  std::vector<std::uint64_t> flags;
  flags.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i)
    flags.push_back(sgn(decrypt(read_ciphertext(r), MessageType::kZeroTestMasked)) == 0 ? 1 : 0);
  r.expect_end();
  PayloadWriter w;
  w.put(count).put_all(flags);
  stream.send(MessageType::kZeroTestResult, w.take());
}

bool C2Responder::on_control(Stream& stream, PayloadReader& r) {
  auto op = static_cast<ControlOp>(r.get_u64());
  switch (op) {
    case ControlOp::kCacheReset:
      cache_.clear();
      return true;
    case ControlOp::kPrecompute: {
      // Tops the pool up to count entries; leftovers carry over.
      auto count = static_cast<std::size_t>(r.get_u64());
      if (pool_.size() < count)
        pool_.append(paillier::precompute_pool_parallel(pk(), count - pool_.size(), ctx_.counters));
      use_pool_ = true;
      stream.send(MessageType::kControl, transport::control_payload(ControlOp::kAck));
      return true;
    }
    default:
      return false;
  }
}

void serve_stream(Stream stream, const C2Context& ctx, const ExtraHandler& extra) {
  C2Responder responder(ctx);
  for (;;) {
    Frame f;
    try {
      f = stream.recv();
    } catch (const ProtocolAbort&) {
      return;
    }
    if (f.type == MessageType::kControl) {
      PayloadReader peek(f.payload);
      if (!peek.at_end() && peek.get_u64() == static_cast<std::uint64_t>(ControlOp::kShutdown))
        return;
    }
    try {
      bool handled = responder.handle(stream, f);
      if (!handled && extra) handled = extra(stream, f, responder);
      if (!handled)
        throw IntegrityError(std::string("unexpected message ") + transport::to_string(f.type));
    } catch (const ProtocolAbort&) {
      return;
    } catch (const Error& e) {
      try {
        stream.send(MessageType::kControl, transport::error_payload(e.what()));
      } catch (const Error&) {
        return;
      }
    }
  }
}

C2Server::C2Server(transport::Mux& mux, C2Context ctx, ExtraHandler extra)
    : mux_(mux), ctx_(ctx), extra_(std::move(extra)) {
  acceptor_ = std::thread([this] {
    while (auto stream = mux_.accept()) {
      std::lock_guard lock(mu_);
      workers_.emplace_back([this, s = *stream] { serve_stream(s, ctx_, extra_); });
    }
  });
}

C2Server::~C2Server() {
  mux_.close();
  join();
}

void C2Server::join() {
  if (acceptor_.joinable()) acceptor_.join();
  std::lock_guard lock(mu_);
  for (auto& t : workers_)
    if (t.joinable()) t.join();
}

InProcPair::InProcPair(const SecretKey& sk, DecryptionLog* log, ExtraHandler extra) : sk_(sk) {
  auto [a, b] = transport::make_inproc_pair();
  a->set_counters(&c1_traffic_);
  b->set_counters(&c2_traffic_);
  c1_mux_ = std::make_unique<transport::Mux>(std::move(a));
  c2_mux_ = std::make_unique<transport::Mux>(std::move(b));
  server_ = std::make_unique<C2Server>(*c2_mux_, C2Context{&sk_, &c2_counters_, log},
                                       std::move(extra));
  main_ = std::make_unique<C1Session>(open_session(1));
}

InProcPair::~InProcPair() {
  c1_mux_->close();
  server_.reset();
}

C1Session InProcPair::open_session(std::uint32_t id) {
  return C1Session(c1_mux_->open_stream(id), sk_.public_key(), &c1_counters_);
}

}  // namespace ppodc::primitives

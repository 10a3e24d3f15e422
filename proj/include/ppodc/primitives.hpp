#pragma once

// Two-party sub-protocols between C1, which holds ciphertexts, and C2, which
// holds the Paillier secret key. C1 drives every exchange through a
// C1Session; C2 answers each request on the same stream from serve_stream().
//
// Every plaintext C2 decrypts is masked: uniformly in Z_N (SMP), statistically
// within 2^-kappa (SLSB), or randomised and permuted (SMIN_k).

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ppodc/paillier.hpp"
#include "ppodc/transport.hpp"

namespace ppodc::primitives {

using paillier::Ciphertext;
using paillier::PublicKey;
using paillier::SecretKey;

constexpr unsigned kDefaultKappa = 80;

// Every plaintext entering SLSB/SC/SMIN is below 2^ell; kappa is the
// statistical masking parameter.
struct DomainBound {
  unsigned ell = 0;
  unsigned kappa = kDefaultKappa;

  // Throws ConfigError unless ell + kappa + 2 < key_bits.
  void validate(unsigned key_bits) const;
};

// k ciphertexts; exactly one decrypts to 1.
struct IndicatorVector {
  std::vector<Ciphertext> entries;
};

class C1Session {
 public:
  C1Session(transport::Stream stream, PublicKey pk, paillier::Counters* counters = nullptr);

  const PublicKey& pk() const { return pk_; }
  transport::Stream& stream() { return stream_; }
  paillier::Counters* counters() const { return counters_; }

  // Mask-reuse cache: an operand already masked in this session is sent to
  // C2 as a handle only. Off by default.
  void set_reuse_masks(bool on) { reuse_ = on; }
  bool reuse_masks() const { return reuse_; }
  // Drops both sides' cache entries for this session.
  void reset_cache();

  // Encryptions draw r^N from the session pool once pools are enabled.
  void set_use_pool(bool on) { use_pool_ = on; }
  bool use_pool() const { return use_pool_; }
  paillier::RandomnessPool& pool() { return pool_; }
  void precompute_local(std::size_t count, bool parallel);
  // Asks C2 to top its pool for this session up to count; blocks until done.
  void precompute_peer(std::size_t count);

  Ciphertext encrypt(const BigInt& m);
  Ciphertext scalar_mul(const Ciphertext& c, const BigInt& u);

  struct MaskedOperand {
    std::uint64_t handle = 0;  // 0: not cached
    BigInt mask;
    bool cached = false;       // C2 already holds the masked value
    Ciphertext masked;
  };
  MaskedOperand mask_operand(const Ciphertext& c);

 private:
  transport::Stream stream_;
  PublicKey pk_;
  paillier::Counters* counters_;
  paillier::RandomnessPool pool_;
  bool use_pool_ = false;
  bool reuse_ = false;
  std::uint64_t next_handle_ = 1;
  std::map<BigInt, std::pair<std::uint64_t, BigInt>> cache_;
};

// E(a*b) for each pair in one round trip.
std::vector<Ciphertext> smp_batch(C1Session& s,
                                  std::span<const std::pair<Ciphertext, Ciphertext>> pairs);
Ciphertext smp(C1Session& s, const Ciphertext& a, const Ciphertext& b);
// Left fold of smp over cts; a single element is returned as is.
Ciphertext smp_fold(C1Session& s, std::span<const Ciphertext> cts);

// E(sum_s (x[s] - y[s])^2).
Ciphertext ssed(C1Session& s, std::span<const Ciphertext> x, std::span<const Ciphertext> y);
// Several independent SSEDs sharing one round trip.
std::vector<Ciphertext> ssed_many(
    C1Session& s, std::span<const std::pair<std::vector<Ciphertext>, std::vector<Ciphertext>>> xy);

// Encrypted cluster: E(lambda_c[s]) per attribute and E(|c|).
struct ClusterState {
  std::vector<Ciphertext> enc_lambda;
  Ciphertext enc_size;
};

// E(OPED(t, c_h)^2) for cluster index h (0-based), computed step by step:
// b_h = SMP fold of the other sizes, b' = SMP(b_h, E|c_h|), scaled record and
// scaled cluster sum by SMP, then SSED.
Ciphertext ssed_op(C1Session& s, std::span<const Ciphertext> record,
                   std::span<const ClusterState> clusters, std::size_t h);

// E(z mod 2) for z < 2^bound.ell.
Ciphertext slsb(C1Session& s, const Ciphertext& z, const DomainBound& bound);
// E(bit `shift` of x) for x < 2^value_bits with x divisible by 2^shift. C2
// sees x + r * 2^shift with r uniform in [0, 2^(value_bits - shift + kappa)).
Ciphertext slsb_at(C1Session& s, const Ciphertext& x, unsigned shift, unsigned value_bits,
                   unsigned kappa);

// gamma = -x(w + y - 2wy) + (w + y - wy) over encrypted bits.
Ciphertext sc_combine(C1Session& s, const Ciphertext& w, const Ciphertext& x,
                      const Ciphertext& y);

// E([a <= b]) for a, b < 2^bound.ell.
Ciphertext sc(C1Session& s, const Ciphertext& a, const Ciphertext& b, const DomainBound& bound);

struct ValueWithSecret {
  Ciphertext value;
  Ciphertext secret;
};

// (E(min(a, b)), E(secret of the minimum)); ties keep a.
ValueWithSecret smin(C1Session& s, const ValueWithSecret& a, const ValueWithSecret& b,
                     const DomainBound& bound);

// One-hot encrypted indicator of the minimum of values (k >= 2); ties go to the
// lowest index.
IndicatorVector smin_k(C1Session& s, std::span<const Ciphertext> values,
                       const DomainBound& bound);

// ---------------------------------------------------------------------------
// C2 side

// Plaintexts C2 decrypted, for leakage checks in tests.
class DecryptionLog {
 public:
  struct Entry {
    transport::MessageType type;
    BigInt value;
  };
  void record(transport::MessageType type, const BigInt& v);
  std::vector<Entry> entries() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

struct C2Context {
  const SecretKey* sk = nullptr;
  paillier::Counters* counters = nullptr;
  DecryptionLog* log = nullptr;
};

// Per-stream C2 state: mask cache and randomness pool.
class C2Responder {
 public:
  explicit C2Responder(const C2Context& ctx) : ctx_(ctx) {}

  // Answers a primitive request on stream. Returns false for frames this
  // responder does not own; the caller may handle those.
  bool handle(transport::Stream& stream, const transport::Frame& request);

  paillier::Ciphertext encrypt(const BigInt& m);
  BigInt decrypt(const Ciphertext& c, transport::MessageType logged_as);
  const PublicKey& pk() const { return ctx_.sk->public_key(); }
  Ciphertext read_ciphertext(transport::PayloadReader& r) const;

 private:
  void on_smp(transport::Stream& stream, transport::PayloadReader& r);
  void on_slsb(transport::Stream& stream, transport::PayloadReader& r);
  void on_smink(transport::Stream& stream, transport::PayloadReader& r);
  void on_gamma(transport::Stream& stream, transport::PayloadReader& r);
  void on_zero_test(transport::Stream& stream, transport::PayloadReader& r);
  bool on_control(transport::Stream& stream, transport::PayloadReader& r);

  C2Context ctx_;
  std::unordered_map<std::uint64_t, BigInt> cache_;
  paillier::RandomnessPool pool_;
  bool use_pool_ = false;
};

using ExtraHandler = std::function<bool(transport::Stream&, const transport::Frame&, C2Responder&)>;

// Serves one stream until CONTROL shutdown or channel loss. Integrity errors
// are reported to C1 as CONTROL error frames and serving continues.
void serve_stream(transport::Stream stream, const C2Context& ctx, const ExtraHandler& extra = {});

// Accepts streams on mux and serves each on its own thread.
class C2Server {
 public:
  C2Server(transport::Mux& mux, C2Context ctx, ExtraHandler extra = {});
  ~C2Server();
  C2Server(const C2Server&) = delete;
  C2Server& operator=(const C2Server&) = delete;
  // Blocks until the channel closes and all stream threads exit.
  void join();

 private:
  transport::Mux& mux_;
  C2Context ctx_;
  ExtraHandler extra_;
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
};

// In-process C1/C2 pair over one multiplexed channel, for tests and
// single-process runs.
class InProcPair {
 public:
  explicit InProcPair(const SecretKey& sk, DecryptionLog* log = nullptr,
                      ExtraHandler extra = {});
  ~InProcPair();

  C1Session open_session(std::uint32_t id);
  C1Session& c1() { return *main_; }
  paillier::Counters& c1_counters() { return c1_counters_; }
  paillier::Counters& c2_counters() { return c2_counters_; }
  transport::TrafficCounters& c1_traffic() { return c1_traffic_; }
  transport::TrafficCounters& c2_traffic() { return c2_traffic_; }

 private:
  const SecretKey& sk_;
  paillier::Counters c1_counters_;
  paillier::Counters c2_counters_;
  transport::TrafficCounters c1_traffic_;
  transport::TrafficCounters c2_traffic_;
  std::unique_ptr<transport::Mux> c1_mux_;
  std::unique_ptr<transport::Mux> c2_mux_;
  std::unique_ptr<C2Server> server_;
  std::unique_ptr<C1Session> main_;
};

}  // namespace ppodc::primitives

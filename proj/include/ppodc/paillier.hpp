#pragma once

// Paillier cryptosystem with generator g = N + 1.
//
// With g = N + 1, encryption collapses to (m*N + 1) * r^N mod N^2, so the only
// exponentiation is r^N, which depends on nothing but the key. Those factors
// can be produced ahead of time into a RandomnessPool; an encryption that draws
// from a pool costs two modular multiplications.

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>

#include "ppodc/bigint.hpp"

namespace ppodc::paillier {

class PublicKey {
 public:
  PublicKey() = default;
  explicit PublicKey(BigInt n);

  const BigInt& n() const { return n_; }
  const BigInt& n_squared() const { return n_squared_; }
  unsigned key_bits() const { return key_bits_; }
  // Fingerprint carried by ciphertexts to detect mixing of key contexts.
  std::uint64_t id() const { return id_; }

  friend bool operator==(const PublicKey& a, const PublicKey& b) { return a.n_ == b.n_; }

 private:
  BigInt n_;
  BigInt n_squared_;
  unsigned key_bits_ = 0;
  std::uint64_t id_ = 0;
};

struct Ciphertext {
  BigInt value;
  std::uint64_t key_id = 0;

  friend bool operator==(const Ciphertext& a, const Ciphertext& b) {
    return a.key_id == b.key_id && a.value == b.value;
  }
};

class SecretKey {
 public:
  SecretKey() = default;
  // Builds the key from lambda alone; mu = lambda^{-1} mod N for g = N + 1.
  SecretKey(PublicKey pub, BigInt lambda);
  SecretKey(PublicKey pub, BigInt lambda, BigInt mu);

  const PublicKey& public_key() const { return pub_; }
  const BigInt& lambda() const { return lambda_; }
  const BigInt& mu() const { return mu_; }
  bool has_crt() const { return crt_.has_value(); }

  BigInt decrypt_raw(const BigInt& c) const;

 private:
  struct Crt {
    BigInt p, q, p_squared, q_squared, hp, hq, q_inv_p;
  };
  void derive_crt();

  PublicKey pub_;
  BigInt lambda_;
  BigInt mu_;
  std::optional<Crt> crt_;
};

struct KeyPair {
  PublicKey pub;
  SecretKey sec;
};

// Operation counters for one party. Safe to bump from several threads.
struct Counters {
  std::atomic<std::uint64_t> exponentiations{0};
  std::atomic<std::uint64_t> encryptions{0};
  std::atomic<std::uint64_t> pooled_encryptions{0};
  std::atomic<std::uint64_t> pool_misses{0};
  std::atomic<std::uint64_t> decryptions{0};

  void reset();
};

// Precomputed r^N mod N^2 factors. Single consumer: callers sharing one pool
// across threads must serialise draws themselves.
class RandomnessPool {
 public:
  RandomnessPool() = default;
  explicit RandomnessPool(std::deque<BigInt> entries) : entries_(std::move(entries)) {}

  std::optional<BigInt> draw();
  void push(BigInt factor) { entries_.push_back(std::move(factor)); }
  void append(RandomnessPool&& other);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::deque<BigInt> entries_;
};

constexpr unsigned kDefaultKeyBits = 1024;
constexpr unsigned kMinKeyBits = 256;

KeyPair keygen(unsigned key_bits = kDefaultKeyBits);

// r^N mod N^2 for a fresh uniform r in Z_N^*.
BigInt fresh_factor(const PublicKey& pk, Counters* counters = nullptr);

// Fast-path encryption. Draws r^N from pool when one is supplied and non-empty;
// otherwise computes it online and, if a pool was supplied, records a miss.
Ciphertext encrypt(const PublicKey& pk, const BigInt& m, RandomnessPool* pool = nullptr,
                   Counters* counters = nullptr);

// (m*N + 1) * factor mod N^2 with a caller-chosen factor = r^N mod N^2.
Ciphertext encrypt_with_factor(const PublicKey& pk, const BigInt& m, const BigInt& factor);

// Textbook form g^m * r^N mod N^2 with g = N + 1, kept for cross-checking.
Ciphertext encrypt_generic(const PublicKey& pk, const BigInt& m, const BigInt& r);

BigInt decrypt(const SecretKey& sk, const Ciphertext& c, Counters* counters = nullptr);

Ciphertext hom_add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);
// E(a - b).
Ciphertext hom_sub(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);
// E(-a) via the inverse mod N^2; decrypts the same as c^(N-1).
Ciphertext hom_negate(const PublicKey& pk, const Ciphertext& c);
// E(a + k mod N) without fresh randomness.
Ciphertext hom_add_plain(const PublicKey& pk, const Ciphertext& c, const BigInt& k);
// E(a * u mod N), 0 <= u < N.
Ciphertext hom_scalar_mul(const PublicKey& pk, const Ciphertext& c, const BigInt& u,
                          Counters* counters = nullptr);

// Serial reference and OpenMP kernel; both produce count independent factors.
RandomnessPool precompute_pool(const PublicKey& pk, std::size_t count,
                               Counters* counters = nullptr);
RandomnessPool precompute_pool_parallel(const PublicKey& pk, std::size_t count,
                                        Counters* counters = nullptr, int threads = 0);

// Key file: decimal fields "N=", "lambda=", "mu=" one per line. A public key
// file carries only "N=".
void write_secret_key(const SecretKey& sk, const std::filesystem::path& path);
void write_public_key(const PublicKey& pk, const std::filesystem::path& path);
SecretKey read_secret_key(const std::filesystem::path& path);
PublicKey read_public_key(const std::filesystem::path& path);
std::string format_secret_key(const SecretKey& sk);
SecretKey parse_secret_key(const std::string& text);

}  // namespace ppodc::paillier

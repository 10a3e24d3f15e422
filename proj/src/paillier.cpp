#include "ppodc/paillier.hpp"

#include <omp.h>

#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "ppodc/errors.hpp"

namespace ppodc::paillier {

namespace {

constexpr int kMillerRabinRounds = 64;
constexpr int kPrimeAttempts = 64;
// gcd(p-1, q-1) is tried up to this bound when recovering p, q from lambda.
constexpr unsigned long kCrtSearchBound = 1UL << 16;

void bump(std::atomic<std::uint64_t> Counters::*field, Counters* c, std::uint64_t by = 1) {
  if (c != nullptr) (c->*field).fetch_add(by, std::memory_order_relaxed);
}

void check_key(const PublicKey& pk, const Ciphertext& c) {
  if (c.key_id != pk.id()) throw UsageError("ciphertext belongs to a different key context");
}

BigInt random_prime(unsigned bits) {
  for (int attempt = 0; attempt < kPrimeAttempts; ++attempt) {
    BigInt candidate = random_bits(bits);
    // Top two bits set so the product of two such primes has exactly 2*bits bits.
    mpz_setbit(candidate.get_mpz_t(), bits - 1);
    mpz_setbit(candidate.get_mpz_t(), bits - 2);
    mpz_setbit(candidate.get_mpz_t(), 0);
    BigInt prime;
    mpz_nextprime(prime.get_mpz_t(), candidate.get_mpz_t());
    if (bit_length(prime) != bits) continue;
    if (mpz_probab_prime_p(prime.get_mpz_t(), kMillerRabinRounds) == 0) continue;
    return prime;
  }
  throw ConfigError("prime generation failed after bounded retries");
}

BigInt l_function(const BigInt& x, const BigInt& divisor) {
  BigInt r = x - 1;
  mpz_divexact(r.get_mpz_t(), r.get_mpz_t(), divisor.get_mpz_t());
  return r;
}

}  // namespace

PublicKey::PublicKey(BigInt n) : n_(std::move(n)) {
  if (n_ < 3 || mpz_even_p(n_.get_mpz_t())) throw DomainError("public key modulus must be odd");
  n_squared_ = n_ * n_;
  key_bits_ = static_cast<unsigned>(bit_length(n_));
  id_ = mpz_get_ui(n_.get_mpz_t()) ^ (static_cast<std::uint64_t>(key_bits_) << 56);
}

SecretKey::SecretKey(PublicKey pub, BigInt lambda)
    : pub_(std::move(pub)), lambda_(std::move(lambda)) {
  mu_ = invert(mod(lambda_, pub_.n()), pub_.n());
  derive_crt();
}

SecretKey::SecretKey(PublicKey pub, BigInt lambda, BigInt mu)
    : pub_(std::move(pub)), lambda_(std::move(lambda)), mu_(std::move(mu)) {
  derive_crt();
}

// phi(N) = lambda * gcd(p-1, q-1); once phi is known, p + q = N - phi + 1 and
// p, q are the roots of x^2 - (p+q)x + N.
void SecretKey::derive_crt() {
  const BigInt& n = pub_.n();
  for (unsigned long g = 1; g <= kCrtSearchBound; ++g) {
    BigInt phi = lambda_ * g;
    if (phi >= n) break;
    BigInt sum = n - phi + 1;
    BigInt disc = sum * sum - 4 * n;
    if (sgn(disc) < 0 || mpz_perfect_square_p(disc.get_mpz_t()) == 0) continue;
    BigInt root;
    mpz_sqrt(root.get_mpz_t(), disc.get_mpz_t());
    BigInt p = (sum + root) / 2;
    BigInt q = (sum - root) / 2;
    if (p * q != n || p == q) continue;
    Crt crt;
    crt.p = p;
    crt.q = q;
    crt.p_squared = p * p;
    crt.q_squared = q * q;
    BigInt g_mod = n + 1;
    crt.hp = invert(l_function(powm(g_mod, p - 1, crt.p_squared), p), p);
    crt.hq = invert(l_function(powm(g_mod, q - 1, crt.q_squared), q), q);
    crt.q_inv_p = invert(q, p);
    crt_ = std::move(crt);
    return;
  }
}

BigInt SecretKey::decrypt_raw(const BigInt& c) const {
  if (crt_) {
    const Crt& k = *crt_;
    BigInt mp = mod(l_function(powm(c, k.p - 1, k.p_squared), k.p) * k.hp, k.p);
    BigInt mq = mod(l_function(powm(c, k.q - 1, k.q_squared), k.q) * k.hq, k.q);
    return mq + k.q * mod((mp - mq) * k.q_inv_p, k.p);
  }
  BigInt u = powm(c, lambda_, pub_.n_squared());
  return mod(l_function(u, pub_.n()) * mu_, pub_.n());
}

void Counters::reset() {
  exponentiations = 0;
  encryptions = 0;
  pooled_encryptions = 0;
  pool_misses = 0;
  decryptions = 0;
}

std::optional<BigInt> RandomnessPool::draw() {
  if (entries_.empty()) return std::nullopt;
  BigInt v = std::move(entries_.front());
  entries_.pop_front();
  return v;
}

void RandomnessPool::append(RandomnessPool&& other) {
  for (auto& e : other.entries_) entries_.push_back(std::move(e));
  other.entries_.clear();
}

KeyPair keygen(unsigned key_bits) {
  if (key_bits < kMinKeyBits) throw ConfigError("key size below the 256-bit minimum");
  if (key_bits % 2 != 0) throw ConfigError("key size must be even");
  for (int attempt = 0; attempt < kPrimeAttempts; ++attempt) {
    BigInt p = random_prime(key_bits / 2);
    BigInt q = random_prime(key_bits / 2);
    if (p == q) continue;
    BigInt n = p * q;
    if (bit_length(n) != key_bits) continue;
    BigInt pm1 = p - 1, qm1 = q - 1, lambda, g;
    mpz_lcm(lambda.get_mpz_t(), pm1.get_mpz_t(), qm1.get_mpz_t());
    BigInt phi = pm1 * qm1;
    mpz_gcd(g.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (g != 1) continue;
    PublicKey pub(n);
    SecretKey sec(pub, lambda);
    return {std::move(pub), std::move(sec)};
  }
  throw ConfigError("key generation failed after bounded retries");
}

BigInt fresh_factor(const PublicKey& pk, Counters* counters) {
  BigInt r = random_unit(pk.n());
  bump(&Counters::exponentiations, counters);
  return powm(r, pk.n(), pk.n_squared());
}

Ciphertext encrypt_with_factor(const PublicKey& pk, const BigInt& m, const BigInt& factor) {
  if (sgn(m) < 0 || m >= pk.n()) throw DomainError("plaintext outside [0, N)");
  BigInt c = m * pk.n() + 1;
  c *= factor;
  return {mod(c, pk.n_squared()), pk.id()};
}

Ciphertext encrypt(const PublicKey& pk, const BigInt& m, RandomnessPool* pool,
                   Counters* counters) {
  if (sgn(m) < 0 || m >= pk.n()) throw DomainError("plaintext outside [0, N)");
  bump(&Counters::encryptions, counters);
  if (pool != nullptr) {
    if (auto factor = pool->draw()) {
      bump(&Counters::pooled_encryptions, counters);
      return encrypt_with_factor(pk, m, *factor);
    }
    bump(&Counters::pool_misses, counters);
  }
  return encrypt_with_factor(pk, m, fresh_factor(pk, counters));
}

Ciphertext encrypt_generic(const PublicKey& pk, const BigInt& m, const BigInt& r) {
  if (sgn(m) < 0 || m >= pk.n()) throw DomainError("plaintext outside [0, N)");
  BigInt g = pk.n() + 1;
  BigInt c = powm(g, m, pk.n_squared()) * powm(r, pk.n(), pk.n_squared());
  return {mod(c, pk.n_squared()), pk.id()};
}

BigInt decrypt(const SecretKey& sk, const Ciphertext& c, Counters* counters) {
  const PublicKey& pk = sk.public_key();
  check_key(pk, c);
  if (sgn(c.value) <= 0 || c.value >= pk.n_squared())
    throw IntegrityError("ciphertext outside [1, N^2)");
  BigInt g;
  mpz_gcd(g.get_mpz_t(), c.value.get_mpz_t(), pk.n().get_mpz_t());
  if (g != 1) throw IntegrityError("ciphertext not coprime to N^2");
  bump(&Counters::decryptions, counters);
  bump(&Counters::exponentiations, counters, sk.has_crt() ? 2 : 1);
  return sk.decrypt_raw(c.value);
}

Ciphertext hom_add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  check_key(pk, a);
  check_key(pk, b);
  return {mod(a.value * b.value, pk.n_squared()), pk.id()};
}

Ciphertext hom_negate(const PublicKey& pk, const Ciphertext& c) {
  check_key(pk, c);
  return {invert(c.value, pk.n_squared()), pk.id()};
}

Ciphertext hom_sub(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return hom_add(pk, a, hom_negate(pk, b));
}

Ciphertext hom_add_plain(const PublicKey& pk, const Ciphertext& c, const BigInt& k) {
  check_key(pk, c);
  BigInt shift = mod(k, pk.n()) * pk.n() + 1;
  return {mod(c.value * shift, pk.n_squared()), pk.id()};
}

Ciphertext hom_scalar_mul(const PublicKey& pk, const Ciphertext& c, const BigInt& u,
                          Counters* counters) {
  check_key(pk, c);
  if (sgn(u) < 0 || u >= pk.n()) throw DomainError("scalar outside [0, N)");
  bump(&Counters::exponentiations, counters);
  return {powm(c.value, u, pk.n_squared()), pk.id()};
}

RandomnessPool precompute_pool(const PublicKey& pk, std::size_t count, Counters* counters) {
  std::deque<BigInt> entries;
  for (std::size_t i = 0; i < count; ++i) entries.push_back(fresh_factor(pk, counters));
  return RandomnessPool(std::move(entries));
}

RandomnessPool precompute_pool_parallel(const PublicKey& pk, std::size_t count,
                                        Counters* counters, int threads) {
  std::vector<BigInt> factors(count);
  const long n = static_cast<long>(count);
  if (threads <= 0) threads = omp_get_max_threads();
#pragma omp parallel for num_threads(threads) schedule(static)
  for (long i = 0; i < n; ++i) factors[static_cast<std::size_t>(i)] = fresh_factor(pk, counters);
  return RandomnessPool(std::deque<BigInt>(std::make_move_iterator(factors.begin()),
                                           std::make_move_iterator(factors.end())));
}

std::string format_secret_key(const SecretKey& sk) {
  std::ostringstream out;
  out << "N=" << sk.public_key().n().get_str() << "\n"
      << "lambda=" << sk.lambda().get_str() << "\n"
      << "mu=" << sk.mu().get_str() << "\n";
  return out.str();
}

namespace {

std::map<std::string, BigInt> parse_fields(const std::string& text) {
  std::map<std::string, BigInt> fields;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IntegrityError("key file line " + std::to_string(lineno) + ": missing '='");
    BigInt value;
    if (value.set_str(line.substr(eq + 1), 10) != 0 || sgn(value) < 0)
      throw IntegrityError("key file line " + std::to_string(lineno) + ": bad decimal");
    fields[line.substr(0, eq)] = value;
  }
  return fields;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open key file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write key file " + path.string());
  out << text;
}

}  // namespace

SecretKey parse_secret_key(const std::string& text) {
  auto fields = parse_fields(text);
  for (const char* name : {"N", "lambda", "mu"})
    if (!fields.count(name)) throw IntegrityError(std::string("key file missing field ") + name);
  PublicKey pub(fields["N"]);
  SecretKey sk(pub, fields["lambda"], fields["mu"]);
  // For g = N + 1, D(E(1)) = lambda * mu mod N; CRT decryption would skip mu.
  if (mod(sk.lambda() * sk.mu(), pub.n()) != 1 || sk.decrypt_raw(pub.n() + 1) != 1)
    throw IntegrityError("key file fields are inconsistent");
  return sk;
}

void write_secret_key(const SecretKey& sk, const std::filesystem::path& path) {
  spit(path, format_secret_key(sk));
}

void write_public_key(const PublicKey& pk, const std::filesystem::path& path) {
  spit(path, "N=" + pk.n().get_str() + "\n");
}

SecretKey read_secret_key(const std::filesystem::path& path) {
  return parse_secret_key(slurp(path));
}

PublicKey read_public_key(const std::filesystem::path& path) {
  auto fields = parse_fields(slurp(path));
  if (!fields.count("N")) throw IntegrityError("key file missing field N");
  return PublicKey(fields["N"]);
}

}  // namespace ppodc::paillier

#include "ppodc/bigint.hpp"

#include <sodium.h>

#include <mutex>

#include "ppodc/errors.hpp"

namespace ppodc {

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("libsodium initialisation failed");
  });
}

}  // namespace

BigInt random_bits(unsigned bits) {
  ensure_sodium();
  if (bits == 0) return 0;
  std::vector<std::uint8_t> buf((bits + 7) / 8);
  randombytes_buf(buf.data(), buf.size());
  unsigned extra = static_cast<unsigned>(buf.size() * 8 - bits);
  buf[0] &= static_cast<std::uint8_t>(0xFFu >> extra);
  return from_bytes(buf);
}

BigInt random_below(const BigInt& bound) {
  if (sgn(bound) <= 0) throw DomainError("random_below: bound must be positive");
  unsigned bits = static_cast<unsigned>(bit_length(bound));
  // Rejection sampling keeps the result exactly uniform.
  for (;;) {
    BigInt v = random_bits(bits);
    if (v < bound) return v;
  }
}

BigInt random_unit(const BigInt& n) {
  for (;;) {
    BigInt v = random_below(n);
    if (sgn(v) == 0) continue;
    BigInt g;
    mpz_gcd(g.get_mpz_t(), v.get_mpz_t(), n.get_mpz_t());
    if (g == 1) return v;
  }
}

std::size_t bit_length(const BigInt& v) {
  if (sgn(v) == 0) return 0;
  return mpz_sizeinbase(v.get_mpz_t(), 2);
}

unsigned ceil_log2(const BigInt& v) {
  if (v <= 1) return 0;
  BigInt w = v - 1;
  return static_cast<unsigned>(bit_length(w));
}

unsigned ceil_log2(std::uint64_t v) {
  return ceil_log2(BigInt(static_cast<unsigned long>(v)));
}

std::vector<std::uint8_t> to_bytes(const BigInt& v) {
  if (sgn(v) < 0) throw DomainError("to_bytes: negative integer");
  if (sgn(v) == 0) return {};
  std::size_t count = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  std::vector<std::uint8_t> out(count);
  std::size_t written = 0;
  mpz_export(out.data(), &written, 1, 1, 1, 0, v.get_mpz_t());
  out.resize(written);
  return out;
}

BigInt from_bytes(std::span<const std::uint8_t> bytes) {
  BigInt v;
  if (!bytes.empty()) mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

BigInt pow2(unsigned bits) {
  BigInt v;
  mpz_ui_pow_ui(v.get_mpz_t(), 2, bits);
  return v;
}

BigInt invert(const BigInt& a, const BigInt& n) {
  BigInt r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), n.get_mpz_t()) == 0)
    throw DomainError("invert: element is not a unit");
  return r;
}

}  // namespace ppodc

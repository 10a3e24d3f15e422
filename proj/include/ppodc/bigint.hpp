#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <gmpxx.h>

namespace ppodc {

using BigInt = mpz_class;
using Rational = mpq_class;

// Uniform in [0, bound) from the OS CSPRNG. bound must be positive.
BigInt random_below(const BigInt& bound);

// Uniform in [0, 2^bits).
BigInt random_bits(unsigned bits);

// Uniform element of Z_n^* (nonzero, coprime to n).
BigInt random_unit(const BigInt& n);

std::size_t bit_length(const BigInt& v);

// ceil(log2(v)) for v >= 1; 0 for v <= 1.
unsigned ceil_log2(const BigInt& v);
unsigned ceil_log2(std::uint64_t v);

// Big-endian magnitude; zero encodes as an empty byte string.
std::vector<std::uint8_t> to_bytes(const BigInt& v);
BigInt from_bytes(std::span<const std::uint8_t> bytes);

BigInt pow2(unsigned bits);

inline BigInt mod(const BigInt& a, const BigInt& n) {
  BigInt r;
  mpz_mod(r.get_mpz_t(), a.get_mpz_t(), n.get_mpz_t());
  return r;
}

inline BigInt powm(const BigInt& base, const BigInt& exp, const BigInt& n) {
  BigInt r;
  mpz_powm(r.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), n.get_mpz_t());
  return r;
}

// Throws DomainError if a has no inverse modulo n.
BigInt invert(const BigInt& a, const BigInt& n);

}  // namespace ppodc

#pragma once

// Shared fixtures for the test binaries: one 512-bit key per process and a
// seeded generator for property tests.

#include <cstdint>
#include <random>

#include <gmpxx.h>

#include "ppodc/paillier.hpp"
#include "ppodc/transforms.hpp"

namespace ppodc::testing {

inline const paillier::KeyPair& test_keys() {
  static const paillier::KeyPair keys = paillier::keygen(512);
  return keys;
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : mt_(seed), gmp_(gmp_randinit_default) {
    gmp_.seed(static_cast<unsigned long>(seed));
  }

  BigInt below(const BigInt& bound) { return gmp_.get_z_range(bound); }
  BigInt bits(unsigned n) { return gmp_.get_z_bits(n); }
  std::int64_t in(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(mt_);
  }
  std::mt19937_64& engine() { return mt_; }

  transforms::PlainRecord record(std::size_t l, std::int64_t v_max) {
    transforms::PlainRecord r;
    for (std::size_t s = 0; s < l; ++s) r.attrs.push_back(in(0, v_max));
    return r;
  }

  // Cluster of `size` random records.
  transforms::PlainCluster cluster(std::size_t l, std::int64_t size, std::int64_t v_max) {
    transforms::PlainCluster c;
    c.lambda.assign(l, BigInt(0));
    c.size = size;
    for (std::int64_t i = 0; i < size; ++i)
      for (std::size_t s = 0; s < l; ++s) c.lambda[s] += static_cast<long>(in(0, v_max));
    return c;
  }

 private:
  std::mt19937_64 mt_;
  gmp_randclass gmp_;
};

}  // namespace ppodc::testing

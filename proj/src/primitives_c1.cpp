#include <numeric>

#include "ppodc/errors.hpp"
#include "ppodc/primitives.hpp"

namespace ppodc::primitives {

using transport::ControlOp;
using transport::MessageType;
using transport::PayloadReader;
using transport::PayloadWriter;

void DomainBound::validate(unsigned key_bits) const {
  if (ell == 0) throw ConfigError("domain bound ell must be positive");
  if (ell + kappa + 2 >= key_bits)
    throw ConfigError("domain bound too large for key: ell=" + std::to_string(ell) +
                      " kappa=" + std::to_string(kappa) + " key_bits=" + std::to_string(key_bits));
}

C1Session::C1Session(transport::Stream stream, PublicKey pk, paillier::Counters* counters)
    : stream_(stream), pk_(std::move(pk)), counters_(counters) {}

void C1Session::reset_cache() {
  if (cache_.empty()) return;
  cache_.clear();
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(ControlOp::kCacheReset));
  stream_.send(MessageType::kControl, w.take());
}

void C1Session::precompute_local(std::size_t count, bool parallel) {
  auto extra = parallel ? paillier::precompute_pool_parallel(pk_, count, counters_)
                        : paillier::precompute_pool(pk_, count, counters_);
  pool_.append(std::move(extra));
}

void C1Session::precompute_peer(std::size_t count) {
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(ControlOp::kPrecompute)).put(static_cast<std::uint64_t>(count));
  stream_.send(MessageType::kControl, w.take());
  auto reply = stream_.recv_expect(MessageType::kControl);
  PayloadReader r(reply.payload);
  auto op = r.get_u64();
  if (op == static_cast<std::uint64_t>(ControlOp::kError))
    throw IntegrityError("peer reported: " + r.get_string());
  if (op != static_cast<std::uint64_t>(ControlOp::kAck))
    throw IntegrityError("expected acknowledgement of precompute request");
}

Ciphertext C1Session::encrypt(const BigInt& m) {
  return paillier::encrypt(pk_, m, use_pool_ ? &pool_ : nullptr, counters_);
}

Ciphertext C1Session::scalar_mul(const Ciphertext& c, const BigInt& u) {
  return paillier::hom_scalar_mul(pk_, c, u, counters_);
}

C1Session::MaskedOperand C1Session::mask_operand(const Ciphertext& c) {
  MaskedOperand out;
  if (reuse_) {
    auto it = cache_.find(c.value);
    if (it != cache_.end()) {
      out.handle = it->second.first;
      out.mask = it->second.second;
      out.cached = true;
      return out;
    }
  }
  out.mask = random_below(pk_.n());
  out.masked = paillier::hom_add(pk_, c, encrypt(out.mask));
  if (reuse_) {
    out.handle = next_handle_++;
    cache_.emplace(c.value, std::make_pair(out.handle, out.mask));
  }
  return out;
}

namespace {

void put_operand(PayloadWriter& w, const C1Session::MaskedOperand& op) {
  w.put(op.handle).put(std::uint64_t{op.cached ? 0u : 1u});
  if (!op.cached) w.put(op.masked.value);
}

Ciphertext read_reply_ct(PayloadReader& r, const PublicKey& pk) {
  Ciphertext c{r.get(), pk.id()};
  if (sgn(c.value) <= 0 || c.value >= pk.n_squared())
    throw IntegrityError("ciphertext out of range in reply");
  return c;
}

// Uniform permutation of [0, k) via Fisher-Yates on the CSPRNG.
std::vector<std::size_t> random_permutation(std::size_t k) {
  std::vector<std::size_t> pi(k);
  std::iota(pi.begin(), pi.end(), std::size_t{0});
  for (std::size_t i = k; i > 1; --i) {
    auto j = static_cast<std::size_t>(random_below(BigInt(static_cast<unsigned long>(i))).get_ui());
    std::swap(pi[i - 1], pi[j]);
  }
  return pi;
}

}  // namespace

std::vector<Ciphertext> smp_batch(C1Session& s,
                                  std::span<const std::pair<Ciphertext, Ciphertext>> pairs) {
  if (pairs.empty()) return {};
  const PublicKey& pk = s.pk();
  const BigInt& n = pk.n();

  std::vector<std::pair<C1Session::MaskedOperand, C1Session::MaskedOperand>> ops;
  ops.reserve(pairs.size());
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(pairs.size()));
  for (const auto& [a, b] : pairs) {
    auto ma = s.mask_operand(a);
    // With reuse on, a squared operand resolves to the entry just created.
    auto mb = s.mask_operand(b);
    put_operand(w, ma);
    put_operand(w, mb);
    ops.emplace_back(std::move(ma), std::move(mb));
  }
  s.stream().send(MessageType::kSmpMasked, w.take());

  auto reply = s.stream().recv_expect(MessageType::kSmpProduct);
  PayloadReader r(reply.payload);
  if (r.get_u64() != pairs.size()) throw IntegrityError("SMP reply count mismatch");

  std::vector<Ciphertext> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Ciphertext h = read_reply_ct(r, pk);
    const auto& [a, b] = pairs[i];
    const BigInt& ra = ops[i].first.mask;
    const BigInt& rb = ops[i].second.mask;
    // (a + ra)(b + rb) - a*rb - b*ra - ra*rb
    Ciphertext acc = h;
    acc = paillier::hom_add(pk, acc, s.scalar_mul(a, mod(n - rb, n)));
    acc = paillier::hom_add(pk, acc, s.scalar_mul(b, mod(n - ra, n)));
    acc = paillier::hom_add_plain(pk, acc, mod(-(ra * rb), n));
    out.push_back(std::move(acc));
  }
  r.expect_end();
  return out;
}

Ciphertext smp(C1Session& s, const Ciphertext& a, const Ciphertext& b) {
  std::pair<Ciphertext, Ciphertext> p{a, b};
  return smp_batch(s, std::span(&p, 1)).front();
}

Ciphertext smp_fold(C1Session& s, std::span<const Ciphertext> cts) {
  if (cts.empty()) throw UsageError("smp_fold needs at least one ciphertext");
  Ciphertext acc = cts.front();
  for (std::size_t i = 1; i < cts.size(); ++i) acc = smp(s, acc, cts[i]);
  return acc;
}

std::vector<Ciphertext> ssed_many(
    C1Session& s,
    std::span<const std::pair<std::vector<Ciphertext>, std::vector<Ciphertext>>> xy) {
  const PublicKey& pk = s.pk();
  std::vector<std::pair<Ciphertext, Ciphertext>> squares;
  std::vector<std::size_t> offsets;
  for (const auto& [x, y] : xy) {
    if (x.size() != y.size()) throw UsageError("ssed operands differ in length");
    offsets.push_back(squares.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      auto d = paillier::hom_sub(pk, x[j], y[j]);
      squares.emplace_back(d, d);
    }
  }
  auto sq = smp_batch(s, squares);
  std::vector<Ciphertext> out;
  out.reserve(xy.size());
  for (std::size_t i = 0; i < xy.size(); ++i) {
    // E(0) with trivial randomness; only reached for l = 0.
    Ciphertext acc{BigInt(1), pk.id()};
    for (std::size_t j = 0; j < xy[i].first.size(); ++j)
      acc = paillier::hom_add(pk, acc, sq[offsets[i] + j]);
    out.push_back(std::move(acc));
  }
  return out;
}

Ciphertext ssed(C1Session& s, std::span<const Ciphertext> x, std::span<const Ciphertext> y) {
  std::pair<std::vector<Ciphertext>, std::vector<Ciphertext>> p{
      std::vector<Ciphertext>(x.begin(), x.end()), std::vector<Ciphertext>(y.begin(), y.end())};
  return ssed_many(s, std::span(&p, 1)).front();
}

Ciphertext ssed_op(C1Session& s, std::span<const Ciphertext> record,
                   std::span<const ClusterState> clusters, std::size_t h) {
  if (h >= clusters.size()) throw UsageError("cluster index out of range");
  const auto& ch = clusters[h];
  if (ch.enc_lambda.size() != record.size()) throw UsageError("dimension mismatch");

  std::vector<Ciphertext> others;
  for (std::size_t j = 0; j < clusters.size(); ++j)
    if (j != h) others.push_back(clusters[j].enc_size);
  Ciphertext b_h = others.empty() ? s.encrypt(BigInt(1)) : smp_fold(s, others);
  Ciphertext b_prime = smp(s, b_h, ch.enc_size);

  std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
  for (const auto& t : record) pairs.emplace_back(b_prime, t);
  for (const auto& lam : ch.enc_lambda) pairs.emplace_back(b_h, lam);
  auto prod = smp_batch(s, pairs);
  const std::size_t l = record.size();
  std::vector<Ciphertext> a_i(prod.begin(), prod.begin() + static_cast<std::ptrdiff_t>(l));
  std::vector<Ciphertext> a_h(prod.begin() + static_cast<std::ptrdiff_t>(l), prod.end());
  return ssed(s, a_i, a_h);
}

Ciphertext slsb_at(C1Session& s, const Ciphertext& x, unsigned shift, unsigned value_bits,
                   unsigned kappa) {
  if (shift >= value_bits) throw UsageError("bit position beyond value bound");
  const PublicKey& pk = s.pk();
  if (value_bits + kappa + 1 >= pk.key_bits()) throw ConfigError("domain bound too large for key");
  BigInt r = random_bits(value_bits - shift + kappa);
  Ciphertext z = paillier::hom_add(pk, x, s.encrypt(r << shift));

  PayloadWriter w;
  w.put(std::uint64_t{1}).put(z.value).put(static_cast<std::uint64_t>(shift));
  s.stream().send(MessageType::kSlsbMasked, w.take());

  auto reply = s.stream().recv_expect(MessageType::kSlsbParity);
  PayloadReader rd(reply.payload);
  if (rd.get_u64() != 1) throw IntegrityError("SLSB reply count mismatch");
  Ciphertext bit = read_reply_ct(rd, pk);
  rd.expect_end();
  // bit(x + r*2^shift, shift) = bit(x, shift) xor (r mod 2)
  if (mpz_odd_p(r.get_mpz_t()) != 0)
    bit = paillier::hom_add_plain(pk, paillier::hom_negate(pk, bit), BigInt(1));
  return bit;
}

Ciphertext slsb(C1Session& s, const Ciphertext& z, const DomainBound& bound) {
  return slsb_at(s, z, 0, bound.ell, bound.kappa);
}

Ciphertext sc_combine(C1Session& s, const Ciphertext& w, const Ciphertext& x,
                      const Ciphertext& y) {
  const PublicKey& pk = s.pk();
  Ciphertext wy = smp(s, w, y);
  Ciphertext neg_wy = paillier::hom_negate(pk, wy);
  // t = w + y - 2wy
  Ciphertext w_plus_y = paillier::hom_add(pk, w, y);
  Ciphertext t = paillier::hom_add(pk, paillier::hom_add(pk, w_plus_y, neg_wy), neg_wy);
  Ciphertext xt = smp(s, x, t);
  // -xt + (w + y - wy)
  return paillier::hom_add(pk, paillier::hom_negate(pk, xt), paillier::hom_add(pk, w_plus_y, neg_wy));
}

// d = b - a + 2^ell lies in (0, 2^(ell+1)) and its bit ell is [a <= b]. Bits
// 0..ell-1 are peeled off one per round; the remainder is bit_ell * 2^ell.
Ciphertext sc(C1Session& s, const Ciphertext& a, const Ciphertext& b, const DomainBound& bound) {
  const PublicKey& pk = s.pk();
  const unsigned ell = bound.ell;
  Ciphertext x = paillier::hom_add_plain(pk, paillier::hom_sub(pk, b, a), pow2(ell));
  for (unsigned j = 0; j < ell; ++j) {
    Ciphertext bit = slsb_at(s, x, j, ell + 1, bound.kappa);
    x = paillier::hom_sub(pk, x, s.scalar_mul(bit, pow2(j)));
  }
  return s.scalar_mul(x, invert(pow2(ell), pk.n()));
}

ValueWithSecret smin(C1Session& s, const ValueWithSecret& a, const ValueWithSecret& b,
                     const DomainBound& bound) {
  const PublicKey& pk = s.pk();
  Ciphertext gamma = sc(s, a.value, b.value, bound);
  std::pair<Ciphertext, Ciphertext> pairs[2] = {
      {gamma, paillier::hom_sub(pk, a.value, b.value)},
      {gamma, paillier::hom_sub(pk, a.secret, b.secret)}};
  auto prod = smp_batch(s, pairs);
  return {paillier::hom_add(pk, b.value, prod[0]), paillier::hom_add(pk, b.secret, prod[1])};
}

IndicatorVector smin_k(C1Session& s, std::span<const Ciphertext> values,
                       const DomainBound& bound) {
  const std::size_t k = values.size();
  if (k < 2) throw UsageError("smin_k needs at least two values");
  const PublicKey& pk = s.pk();

  ValueWithSecret acc{values[0], s.encrypt(BigInt(1))};
  for (std::size_t i = 1; i < k; ++i) {
    ValueWithSecret next{values[i], s.encrypt(BigInt(static_cast<unsigned long>(i + 1)))};
    acc = smin(s, acc, next, bound);
  }

  // phi[i] = (i - I) * r_i: zero exactly at the minimum's index.
  Ciphertext delta = paillier::hom_negate(pk, acc.secret);
  std::vector<Ciphertext> phi;
  phi.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Ciphertext d = paillier::hom_add_plain(pk, delta, BigInt(static_cast<unsigned long>(i + 1)));
    phi.push_back(s.scalar_mul(d, random_unit(pk.n())));
  }
  auto pi = random_permutation(k);
  std::vector<Ciphertext> u(k);
  for (std::size_t i = 0; i < k; ++i) u[pi[i]] = phi[i];

  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(k));
  for (const auto& c : u) w.put(c.value);
  s.stream().send(MessageType::kSminkPermuted, w.take());

  auto reply = s.stream().recv_expect(MessageType::kSminkIndicators);
  PayloadReader r(reply.payload);
  if (r.get_u64() != k) throw IntegrityError("SMIN_k reply count mismatch");
  std::vector<Ciphertext> big_u;
  big_u.reserve(k);
  for (std::size_t i = 0; i < k; ++i) big_u.push_back(read_reply_ct(r, pk));
  r.expect_end();

  IndicatorVector out;
  out.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.entries.push_back(big_u[pi[i]]);
  return out;
}

}  // namespace ppodc::primitives

#include "ppodc/protocol.hpp"

#include <algorithm>

#include "ppodc/errors.hpp"

namespace ppodc::protocol {

using primitives::C1Session;
using transport::ControlOp;
using transport::MessageType;
using transport::PayloadReader;
using transport::PayloadWriter;

ShareRecord user_split_with(const PlainRecord& record, const PublicKey& pk,
                            const std::vector<BigInt>& r) {
  if (r.size() != record.dim()) throw UsageError("one mask per attribute required");
  const BigInt& n = pk.n();
  ShareRecord out;
  out.share1.reserve(record.dim());
  out.share2.reserve(record.dim());
  for (std::size_t s = 0; s < record.dim(); ++s) {
    if (record.attrs[s] < 0) throw DomainError("attribute values must be non-negative");
    if (sgn(r[s]) < 0 || r[s] >= n) throw DomainError("share mask out of range");
    out.share1.push_back(mod(BigInt(static_cast<long>(record.attrs[s])) + r[s], n));
    out.share2.push_back(n - r[s]);
  }
  return out;
}

ShareRecord user_split(const PlainRecord& record, const PublicKey& pk) {
  std::vector<BigInt> r;
  r.reserve(record.dim());
  for (std::size_t s = 0; s < record.dim(); ++s) r.push_back(random_below(pk.n()));
  return user_split_with(record, pk, r);
}

std::vector<std::int64_t> reconstruct(const ShareRecord& shares, const PublicKey& pk) {
  std::vector<std::int64_t> out;
  for (std::size_t s = 0; s < shares.share1.size(); ++s)
    out.push_back(mod(shares.share1[s] + shares.share2[s], pk.n()).get_si());
  return out;
}

unsigned assign_ell(std::size_t m, std::size_t k, std::size_t l, std::int64_t v_max) {
  // OPED^2 <= l * (m^k * v_max)^2; one extra bit keeps it strictly below 2^ell.
  unsigned lm = ceil_log2(static_cast<std::uint64_t>(m));
  unsigned ll = ceil_log2(static_cast<std::uint64_t>(l));
  unsigned lv = ceil_log2(static_cast<std::uint64_t>(v_max) + 1);
  return static_cast<unsigned>(2 * k * lm) + ll + 2 * lv + 1;
}

unsigned term_ell(std::size_t m, std::size_t k, std::size_t l, std::int64_t v_max,
                  const BigInt& beta) {
  unsigned lm = ceil_log2(static_cast<std::uint64_t>(m));
  unsigned ll = ceil_log2(static_cast<std::uint64_t>(l));
  unsigned lv = ceil_log2(static_cast<std::uint64_t>(v_max) + 1);
  unsigned inner = static_cast<unsigned>(2 * k * lm) + ll + 2 * lv;
  return 2 * inner + ceil_log2(BigInt(beta + 1)) + 8;
}

DomainPlan plan_domain(const RunConfig& cfg, std::size_t m, std::size_t l) {
  if (cfg.k == 0 || cfg.k > m) throw ConfigError("need 1 <= k <= m");
  if (l == 0) throw ConfigError("records need at least one attribute");
  if (sgn(cfg.beta) < 0) throw ConfigError("beta must be non-negative");
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (cfg.v_max < 1) throw ConfigError("v_max must be positive");
  DomainPlan plan;
  plan.assign.kappa = plan.term.kappa = cfg.kappa;
  if (cfg.ell_override) {
    plan.assign.ell = plan.term.ell = *cfg.ell_override;
  } else {
    plan.assign.ell = assign_ell(m, cfg.k, l, cfg.v_max);
    plan.term.ell = term_ell(m, cfg.k, l, cfg.v_max, cfg.beta);
  }
  plan.assign.validate(cfg.key_bits);
  plan.term.validate(cfg.key_bits);
  return plan;
}

MetricsSnapshot operator-(const MetricsSnapshot& a, const MetricsSnapshot& b) {
  return {a.exponentiations - b.exponentiations, a.encryptions - b.encryptions,
          a.decryptions - b.decryptions,         a.pool_misses - b.pool_misses,
          a.messages - b.messages,               a.bytes - b.bytes};
}

MetricsSnapshot& operator+=(MetricsSnapshot& a, const MetricsSnapshot& b) {
  a.exponentiations += b.exponentiations;
  a.encryptions += b.encryptions;
  a.decryptions += b.decryptions;
  a.pool_misses += b.pool_misses;
  a.messages += b.messages;
  a.bytes += b.bytes;
  return a;
}

std::vector<EncRecord> outsource_combine(C1Session& s,
                                         const std::vector<std::vector<BigInt>>& c1_shares) {
  const PublicKey& pk = s.pk();
  const std::size_t m = c1_shares.size();
  if (m == 0) return {};
  const std::size_t l = c1_shares.front().size();
  for (const auto& row : c1_shares)
    if (row.size() != l) throw IngestError("C1 shares are not rectangular");

  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(ControlOp::kFetchShares))
      .put(static_cast<std::uint64_t>(m))
      .put(static_cast<std::uint64_t>(l));
  s.stream().send(MessageType::kControl, w.take());

  std::vector<EncRecord> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    transport::Frame f;
    try {
      f = s.stream().recv_expect(MessageType::kEncForward);
    } catch (const IntegrityError& e) {
      throw IngestError(e.what());
    }
    PayloadReader r(f.payload);
    if (r.get_u64() != i) throw IntegrityError("forwarded shares out of order");
    out[i].cts.reserve(l);
    for (std::size_t j = 0; j < l; ++j) {
      Ciphertext c2{r.get(), pk.id()};
      out[i].cts.push_back(paillier::hom_add(pk, s.encrypt(c1_shares[i][j]), c2));
    }
    r.expect_end();
  }
  return out;
}

std::vector<ClusterState> init_clusters(C1Session& s, const std::vector<EncRecord>& records,
                                        std::size_t k, std::uint64_t seed) {
  auto idx = transforms::choose_initial_indices(records.size(), k, seed);
  std::vector<ClusterState> out;
  out.reserve(k);
  for (auto i : idx) out.push_back({records[i].cts, s.encrypt(BigInt(1))});
  return out;
}

std::vector<std::size_t> apply_empty_policy(C1Session& s,
                                            const std::vector<ClusterState>& current,
                                            std::vector<ClusterState>& next) {
  const PublicKey& pk = s.pk();
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(next.size()));
  for (const auto& c : next) w.put(s.scalar_mul(c.enc_size, random_unit(pk.n())).value);
  s.stream().send(MessageType::kZeroTestMasked, w.take());
  auto reply = s.stream().recv_expect(MessageType::kZeroTestResult);
  PayloadReader r(reply.payload);
  if (r.get_u64() != next.size()) throw IntegrityError("zero-test reply count mismatch");
  std::vector<std::size_t> retained;
  for (std::size_t h = 0; h < next.size(); ++h) {
    if (r.get_u64() != 0) {
      next[h] = current[h];
      retained.push_back(h);
    }
  }
  r.expect_end();
  return retained;
}

namespace {

// For each i, E(prod_{j != i} v[j]); all k folds advance in one batch per step.
std::vector<Ciphertext> products_excluding(C1Session& s, const std::vector<Ciphertext>& v) {
  const std::size_t k = v.size();
  std::vector<std::vector<Ciphertext>> others(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) others[i].push_back(v[j]);
  std::vector<Ciphertext> acc(k);
  for (std::size_t i = 0; i < k; ++i)
    acc[i] = others[i].empty() ? s.encrypt(BigInt(1)) : others[i][0];
  for (std::size_t step = 1; step + 1 < k; ++step) {
    std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
    for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(acc[i], others[i][step]);
    acc = primitives::smp_batch(s, pairs);
  }
  return acc;
}

}  // namespace

Stage2Shared prepare_stage2(C1Session& s, const std::vector<ClusterState>& clusters,
                            const DomainBound& bound, bool hoist) {
  Stage2Shared out;
  out.clusters = &clusters;
  out.bound = bound;
  out.hoisted = hoist;
  if (!hoist) return out;
  const std::size_t k = clusters.size();
  std::vector<Ciphertext> sizes;
  for (const auto& c : clusters) sizes.push_back(c.enc_size);
  auto b = products_excluding(s, sizes);

  std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
  pairs.emplace_back(b[0], clusters[0].enc_size);
  for (std::size_t h = 0; h < k; ++h)
    for (const auto& lam : clusters[h].enc_lambda) pairs.emplace_back(b[h], lam);
  auto prod = primitives::smp_batch(s, pairs);
  out.alpha = prod[0];
  std::size_t pos = 1;
  out.scaled_lambda.resize(k);
  for (std::size_t h = 0; h < k; ++h)
    for (std::size_t j = 0; j < clusters[h].enc_lambda.size(); ++j)
      out.scaled_lambda[h].push_back(prod[pos++]);
  return out;
}

bool setc(C1Session& s, const std::vector<ClusterState>& current,
          const std::vector<ClusterState>& next, const BigInt& beta, const DomainBound& bound) {
  const PublicKey& pk = s.pk();
  const std::size_t k = current.size();
  if (next.size() != k || k == 0) throw UsageError("termination test needs k current and k new");
  if (sgn(beta) < 0 || beta >= pk.n()) throw DomainError("beta out of range");

  // tau_i = |c_i| * |c'_i|
  std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
  for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(current[i].enc_size, next[i].enc_size);
  auto tau = primitives::smp_batch(s, pairs);

  // V_i = E(f_i)
  auto v = products_excluding(s, tau);

  // Z_i = f_i^2, V = f, G_i[s] = lambda_i[s] * |c'_i|, G'_i[s] = W_i[s] * |c_i|
  pairs.clear();
  for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(v[i], v[i]);
  pairs.emplace_back(v[0], tau[0]);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < current[i].enc_lambda.size(); ++j) {
      pairs.emplace_back(current[i].enc_lambda[j], next[i].enc_size);
      pairs.emplace_back(next[i].enc_lambda[j], current[i].enc_size);
    }
  }
  auto prod = primitives::smp_batch(s, pairs);
  std::vector<Ciphertext> z(prod.begin(), prod.begin() + static_cast<std::ptrdiff_t>(k));
  Ciphertext f = prod[k];
  std::vector<std::pair<std::vector<Ciphertext>, std::vector<Ciphertext>>> gg(k);
  std::size_t pos = k + 1;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < current[i].enc_lambda.size(); ++j) {
      gg[i].first.push_back(prod[pos++]);
      gg[i].second.push_back(prod[pos++]);
    }
  }
  // H_i = SSED(G_i, G'_i)
  auto h = primitives::ssed_many(s, gg);

  // H'_i = H_i * Z_i, Y = f^2
  pairs.clear();
  for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(h[i], z[i]);
  pairs.emplace_back(f, f);
  prod = primitives::smp_batch(s, pairs);
  Ciphertext lhs = prod[0];
  for (std::size_t i = 1; i < k; ++i) lhs = paillier::hom_add(pk, lhs, prod[i]);
  Ciphertext rhs = s.scalar_mul(prod[k], beta);

  Ciphertext gamma = primitives::sc(s, lhs, rhs, bound);
  PayloadWriter w;
  w.put(gamma.value);
  s.stream().send(MessageType::kSetcGammaEnc, w.take());
  auto reply = s.stream().recv_expect(MessageType::kSetcGammaPlain);
  PayloadReader r(reply.payload);
  BigInt bit = r.get();
  r.expect_end();
  if (bit != 0 && bit != 1) throw IntegrityError("termination bit is not 0 or 1");
  return bit == 1;
}

EncryptionEstimate estimate_record_encryptions(std::size_t k, std::size_t l, unsigned ell,
                                               bool reuse) {
  std::size_t pairs;
  if (reuse) {
    pairs = l + k * l + 2 * (k - 1) + k * l;
  } else {
    // per cluster: fold, b', 2l scalings, l squares
    std::size_t fold = k >= 2 ? k - 2 : 0;
    pairs = k * (fold + 1 + 3 * l) + 2 * (k - 1) + k * l;
  }
  std::size_t rounds = (k - 1) * ell;
  EncryptionEstimate e;
  e.c1 = 2 * pairs + rounds + k + k;
  e.c2 = pairs + rounds + k;
  return e;
}

EncryptionEstimate estimate_iteration_encryptions(std::size_t k, std::size_t l,
                                                  unsigned ell_term, bool /*reuse*/) {
  std::size_t pairs = k * k + 1 + k * l         // hoisting
                      + k + k * k + 2 * k + 1    // tau, folds, Z, V
                      + 2 * k * l + k * l + k + 1;  // G, G', squares, H', Y
  EncryptionEstimate e;
  e.c1 = 2 * pairs + ell_term + k * l + 2 * k + 4;
  e.c2 = pairs + ell_term + k * l + k + 4;
  return e;
}

}  // namespace ppodc::protocol

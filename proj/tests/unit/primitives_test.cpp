#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "ppodc/errors.hpp"
#include "ppodc/primitives.hpp"
#include "ppodc/transforms.hpp"
#include "support.hpp"

namespace ppodc::primitives {
namespace {

using paillier::decrypt;
using testing::Gen;
using testing::test_keys;
using transport::MessageType;

class Primitives : public ::testing::Test {
 public:
  Primitives() : pair_(test_keys().sec, &log_) {}

  C1Session& s() { return pair_.c1(); }
  const PublicKey& pk() const { return test_keys().pub; }
  const BigInt& n() const { return test_keys().pub.n(); }
  Ciphertext enc(const BigInt& v) { return paillier::encrypt(pk(), v); }
  Ciphertext enc(long v) { return enc(BigInt(v)); }
  BigInt dec(const Ciphertext& c) { return decrypt(test_keys().sec, c); }
  std::vector<Ciphertext> enc_all(const std::vector<long>& v) {
    std::vector<Ciphertext> out;
    for (long x : v) out.push_back(enc(x));
    return out;
  }

  DecryptionLog log_;
  InProcPair pair_;
};

TEST_F(Primitives, SmpExamples) {
  EXPECT_EQ(dec(smp(s(), enc(7), enc(4))), 28);
  EXPECT_EQ(dec(smp(s(), enc(n() - 1), enc(2))), n() - 2);
  EXPECT_EQ(dec(smp(s(), enc(123), enc(0))), 0);
  EXPECT_EQ(dec(smp(s(), enc(123), enc(1))), 123);
}

TEST_F(Primitives, SmpMatchesModularProduct) {
  Gen gen(41);
  std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
  std::vector<BigInt> expected;
  for (int i = 0; i < 200; ++i) {
    BigInt a = gen.below(n()), b = gen.below(n());
    pairs.emplace_back(enc(a), enc(b));
    expected.push_back(mod(a * b, n()));
  }
  auto out = smp_batch(s(), pairs);
  ASSERT_EQ(out.size(), expected.size());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(dec(out[i]), expected[i]);
}

TEST_F(Primitives, SmpFold) {
  auto three = enc_all({2, 3, 4});
  EXPECT_EQ(dec(smp_fold(s(), three)), 24);
  auto single = enc_all({17});
  EXPECT_EQ(dec(smp_fold(s(), single)), 17);
  auto ones = enc_all({9, 1, 1, 1});
  EXPECT_EQ(dec(smp_fold(s(), ones)), 9);
  EXPECT_THROW(smp_fold(s(), std::span<const Ciphertext>{}), UsageError);
}

TEST_F(Primitives, SsedExamples) {
  auto x = enc_all({0, 3}), y = enc_all({4, 0});
  EXPECT_EQ(dec(ssed(s(), x, y)), 25);
  EXPECT_EQ(dec(ssed(s(), x, x)), 0);
  auto short_y = enc_all({1});
  EXPECT_THROW(ssed(s(), x, short_y), UsageError);
}

TEST_F(Primitives, SsedMatchesPlainSumOfSquares) {
  Gen gen(42);
  for (int i = 0; i < 200; ++i) {
    auto l = static_cast<std::size_t>(gen.in(1, 6));
    std::vector<long> a, b;
    BigInt expected = 0;
    for (std::size_t j = 0; j < l; ++j) {
      a.push_back(static_cast<long>(gen.in(0, 1000)));
      b.push_back(static_cast<long>(gen.in(0, 1000)));
      expected += BigInt((a.back() - b.back()) * (a.back() - b.back()));
    }
    ASSERT_EQ(dec(ssed(s(), enc_all(a), enc_all(b))), expected);
  }
}

TEST_F(Primitives, SsedManyMatchesSingleCalls) {
  std::vector<std::pair<std::vector<Ciphertext>, std::vector<Ciphertext>>> xy;
  xy.emplace_back(enc_all({0, 3}), enc_all({4, 0}));
  xy.emplace_back(enc_all({10}), enc_all({7}));
  auto out = ssed_many(s(), xy);
  EXPECT_EQ(dec(out[0]), 25);
  EXPECT_EQ(dec(out[1]), 9);
}

std::vector<ClusterState> encrypt_clusters(const std::vector<transforms::PlainCluster>& cs,
                                           const PublicKey& pk) {
  std::vector<ClusterState> out;
  for (const auto& c : cs) {
    ClusterState st{{}, paillier::encrypt(pk, c.size)};
    for (const auto& v : c.lambda) st.enc_lambda.push_back(paillier::encrypt(pk, v));
    out.push_back(std::move(st));
  }
  return out;
}

TEST_F(Primitives, SsedOpSizesTwoAndThree) {
  std::vector<transforms::PlainCluster> cs{{{BigInt(4)}, BigInt(2)}, {{BigInt(9)}, BigInt(3)}};
  auto enc_cs = encrypt_clusters(cs, pk());
  auto t = enc_all({5});
  // h = 0: b_h = |c_2| = 3, b' = 6, result (6*5 - 3*4)^2.
  EXPECT_EQ(dec(ssed_op(s(), t, enc_cs, 0)), 18 * 18);
  EXPECT_EQ(dec(ssed_op(s(), t, enc_cs, 1)), (30 - 18) * (30 - 18));
  auto sizes = transforms::scaling_factors({BigInt(2), BigInt(3)});
  EXPECT_EQ(sizes.alphas[0], 3);
  EXPECT_EQ(sizes.alpha, 6);
}

TEST_F(Primitives, SsedOpUnitSizesGivePlainDistance) {
  std::vector<transforms::PlainCluster> cs{transforms::PlainCluster::of_record({{1, 2}}),
                                           transforms::PlainCluster::of_record({{8, 8}})};
  auto enc_cs = encrypt_clusters(cs, pk());
  auto t = enc_all({4, 6});
  EXPECT_EQ(dec(ssed_op(s(), t, enc_cs, 0)), 9 + 16);
  EXPECT_EQ(dec(ssed_op(s(), t, enc_cs, 1)), 16 + 4);
}

TEST_F(Primitives, SsedOpMatchesOpedOracle) {
  Gen gen(43);
  for (int i = 0; i < 20; ++i) {
    auto k = static_cast<std::size_t>(gen.in(1, 4));
    auto l = static_cast<std::size_t>(gen.in(1, 4));
    std::vector<transforms::PlainCluster> cs;
    std::vector<BigInt> sizes;
    for (std::size_t h = 0; h < k; ++h) {
      cs.push_back(gen.cluster(l, gen.in(1, 8), 1000));
      sizes.push_back(cs.back().size);
    }
    auto rec = gen.record(l, 1000);
    std::vector<Ciphertext> t;
    for (auto v : rec.attrs) t.push_back(enc(static_cast<long>(v)));
    auto enc_cs = encrypt_clusters(cs, pk());
    auto sf = transforms::scaling_factors(sizes);
    for (std::size_t h = 0; h < k; ++h)
      ASSERT_EQ(dec(ssed_op(s(), t, enc_cs, h)),
                transforms::oped_squared(rec, cs[h], sf.alpha, sf.alphas[h]));
  }
}

TEST_F(Primitives, SlsbExamples) {
  DomainBound b{8};
  EXPECT_EQ(dec(slsb(s(), enc(6), b)), 0);
  EXPECT_EQ(dec(slsb(s(), enc(7), b)), 1);
  EXPECT_EQ(dec(slsb(s(), enc(0), b)), 0);
}

TEST_F(Primitives, SlsbExhaustiveAtEightBits) {
  DomainBound b{8};
  for (long z = 0; z < 256; ++z) ASSERT_EQ(dec(slsb(s(), enc(z), b)), z % 2) << z;
}

TEST_F(Primitives, SlsbAtReadsTheShiftedBit) {
  Gen gen(44);
  for (int i = 0; i < 100; ++i) {
    auto shift = static_cast<unsigned>(gen.in(0, 10));
    long y = static_cast<long>(gen.in(0, 1023));
    BigInt x = BigInt(y) << shift;
    ASSERT_EQ(dec(slsb_at(s(), enc(x), shift, shift + 10, kDefaultKappa)), y % 2);
  }
}

TEST_F(Primitives, ScCombineTruthTable) {
  for (long w = 0; w <= 1; ++w)
    for (long x = 0; x <= 1; ++x)
      for (long y = 0; y <= 1; ++y) {
        long expected = -x * (w + y - 2 * w * y) + (w + y - w * y);
        ASSERT_TRUE(expected == 0 || expected == 1);
        EXPECT_EQ(dec(sc_combine(s(), enc(w), enc(x), enc(y))), expected)
            << w << x << y;
      }
  EXPECT_EQ(dec(sc_combine(s(), enc(0), enc(1), enc(1))), 0);
  EXPECT_EQ(dec(sc_combine(s(), enc(1), enc(0), enc(0))), 1);
  EXPECT_EQ(dec(sc_combine(s(), enc(1), enc(1), enc(1))), 1);
  EXPECT_EQ(dec(sc_combine(s(), enc(1), enc(1), enc(0))), 0);
}

TEST_F(Primitives, ScExamples) {
  DomainBound b{16};
  EXPECT_EQ(dec(sc(s(), enc(7), enc(4), b)), 0);
  EXPECT_EQ(dec(sc(s(), enc(4), enc(7), b)), 1);
  EXPECT_EQ(dec(sc(s(), enc(9), enc(9), b)), 1);
  EXPECT_EQ(dec(sc(s(), enc(0), enc(65535), b)), 1);
  EXPECT_EQ(dec(sc(s(), enc(65535), enc(0), b)), 0);
}

TEST_F(Primitives, ScExhaustiveAtFiveBits) {
  DomainBound b{5};
  for (long a = 0; a < 32; ++a)
    for (long c = 0; c < 32; ++c) ASSERT_EQ(dec(sc(s(), enc(a), enc(c), b)), a <= c ? 1 : 0);
}

TEST_F(Primitives, ScSampledAtSixteenBits) {
  DomainBound b{16};
  Gen gen(45);
  for (int i = 0; i < 500; ++i) {
    long a = static_cast<long>(gen.in(0, 65535));
    long c = gen.in(0, 3) == 0 ? a : static_cast<long>(gen.in(0, 65535));
    ASSERT_EQ(dec(sc(s(), enc(a), enc(c), b)), a <= c ? 1 : 0);
  }
}

TEST_F(Primitives, SminExample) {
  DomainBound b{16};
  BigInt s1 = 111, s2 = 222;
  auto r = smin(s(), {enc(7), enc(s1)}, {enc(4), enc(s2)}, b);
  EXPECT_EQ(dec(r.value), 4);
  EXPECT_EQ(dec(r.secret), s2);
  auto tie = smin(s(), {enc(5), enc(s1)}, {enc(5), enc(s2)}, b);
  EXPECT_EQ(dec(tie.value), 5);
  EXPECT_EQ(dec(tie.secret), s1);
}

TEST_F(Primitives, SminMatchesOracle) {
  DomainBound b{20};
  Gen gen(46);
  for (int i = 0; i < 200; ++i) {
    long a = static_cast<long>(gen.in(0, (1 << 20) - 1));
    long c = gen.in(0, 4) == 0 ? a : static_cast<long>(gen.in(0, (1 << 20) - 1));
    BigInt sa = gen.below(n()), sb = gen.below(n());
    auto r = smin(s(), {enc(a), enc(sa)}, {enc(c), enc(sb)}, b);
    ASSERT_EQ(dec(r.value), std::min(a, c));
    ASSERT_EQ(dec(r.secret), a <= c ? sa : sb);
  }
}

std::vector<BigInt> decrypt_all(Primitives& f, const IndicatorVector& v) {
  std::vector<BigInt> out;
  for (const auto& c : v.entries) out.push_back(f.dec(c));
  return out;
}

TEST_F(Primitives, SminKExample) {
  DomainBound b{16};
  auto vals = enc_all({3, 6, 13, 2, 9});
  EXPECT_EQ(decrypt_all(*this, smin_k(s(), vals, b)),
            (std::vector<BigInt>{0, 0, 0, 1, 0}));
  auto tie = enc_all({8, 8});
  EXPECT_EQ(decrypt_all(*this, smin_k(s(), tie, b)), (std::vector<BigInt>{1, 0}));
  auto one = enc_all({8});
  EXPECT_THROW(smin_k(s(), one, b), UsageError);
}

TEST_F(Primitives, SminKIndicatesArgmin) {
  DomainBound b{12};
  Gen gen(47);
  for (int i = 0; i < 100; ++i) {
    auto k = static_cast<std::size_t>(gen.in(2, 8));
    std::int64_t hi = gen.in(0, 1) ? 5 : 4095;  // small range forces ties
    std::vector<long> v;
    for (std::size_t j = 0; j < k; ++j) v.push_back(static_cast<long>(gen.in(0, hi)));
    auto argmin = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    auto got = decrypt_all(*this, smin_k(s(), enc_all(v), b));
    for (std::size_t j = 0; j < k; ++j) ASSERT_EQ(got[j], j == argmin ? 1 : 0);
  }
}

TEST_F(Primitives, C2RejectsPermutedVectorWithoutSingleZero) {
  auto& st = s().stream();
  transport::PayloadWriter w;
  w.put(std::uint64_t{2}).put(enc(3).value).put(enc(5).value);
  st.send(MessageType::kSminkPermuted, w.take());
  EXPECT_THROW(st.recv_expect(MessageType::kSminkIndicators), IntegrityError);
  transport::PayloadWriter w2;
  w2.put(std::uint64_t{2}).put(enc(0).value).put(enc(0).value);
  st.send(MessageType::kSminkPermuted, w2.take());
  EXPECT_THROW(st.recv_expect(MessageType::kSminkIndicators), IntegrityError);
  // The session is still usable afterwards.
  EXPECT_EQ(dec(smp(s(), enc(6), enc(7))), 42);
}

TEST_F(Primitives, MaskReuseGivesSameResultsWithFewerBytes) {
  auto shared = enc(11);
  std::vector<Ciphertext> others = enc_all({2, 3, 5, 7});

  s().set_reuse_masks(false);
  auto before = pair_.c1_traffic().bytes_sent.load();
  std::vector<BigInt> plain_results;
  for (const auto& o : others) plain_results.push_back(dec(smp(s(), shared, o)));
  auto without = pair_.c1_traffic().bytes_sent.load() - before;

  s().set_reuse_masks(true);
  before = pair_.c1_traffic().bytes_sent.load();
  std::vector<BigInt> reused_results;
  for (const auto& o : others) reused_results.push_back(dec(smp(s(), shared, o)));
  auto with = pair_.c1_traffic().bytes_sent.load() - before;
  s().reset_cache();

  EXPECT_EQ(plain_results, reused_results);
  EXPECT_EQ(reused_results, (std::vector<BigInt>{22, 33, 55, 77}));
  EXPECT_LT(with, without);
  // After a reset the cache is gone on both sides and results stay correct.
  EXPECT_EQ(dec(smp(s(), shared, enc(4))), 44);
  s().set_reuse_masks(false);
}

TEST_F(Primitives, PooledSessionsAgree) {
  auto extra = pair_.open_session(9);
  extra.precompute_local(32, false);
  extra.precompute_peer(32);
  extra.set_use_pool(true);
  auto misses = pair_.c1_counters().pool_misses.load();
  EXPECT_EQ(dec(smp(extra, enc(12), enc(12))), 144);
  EXPECT_EQ(pair_.c1_counters().pool_misses.load(), misses);
  extra.stream().send(MessageType::kControl,
                      transport::control_payload(transport::ControlOp::kShutdown));
}

TEST_F(Primitives, C2SeesOnlyMaskedValues) {
  log_.clear();
  // Multiplying by zero many times: an unmasked protocol would show zeros.
  for (int i = 0; i < 50; ++i) smp(s(), enc(0), enc(0));
  DomainBound b{8};
  for (int i = 0; i < 50; ++i) slsb(s(), enc(3), b);
  auto entries = log_.entries();
  std::set<BigInt> smp_seen, slsb_seen;
  for (const auto& e : entries) {
    if (e.type == MessageType::kSmpMasked) smp_seen.insert(e.value);
    if (e.type == MessageType::kSlsbMasked) slsb_seen.insert(e.value);
  }
  EXPECT_EQ(smp_seen.size(), 100u);
  EXPECT_EQ(smp_seen.count(BigInt(0)), 0u);
  EXPECT_EQ(slsb_seen.size(), 50u);
  // Masked SLSB values carry at least kappa bits of randomness above the value.
  std::size_t big = 0;
  for (const auto& v : slsb_seen) big += bit_length(v) > 8 + kDefaultKappa - 8 ? 1 : 0;
  EXPECT_GE(big, 45u);
}

TEST(DomainBound, Validate) {
  DomainBound ok{40, 80};
  EXPECT_NO_THROW(ok.validate(512));
  DomainBound tight{430, 80};
  EXPECT_THROW(tight.validate(512), ConfigError);
  DomainBound edge{429, 80};
  EXPECT_NO_THROW(edge.validate(512));
}

}  // namespace
}  // namespace ppodc::primitives

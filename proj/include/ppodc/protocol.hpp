#pragma once

// Outsourced k-means over Paillier-encrypted data.
//
// Stage 1: every user splits each record into two additive shares mod N, one
//   for C1 and one for C2. C2 encrypts its shares and forwards them; C1
//   combines them into E(t_i[s]).
// Stage 2: per record, C1 computes the encrypted OPED to every cluster, the
//   one-hot closest-cluster indicator and the masked contributions to the new
//   cluster sums. Records fan out over worker sessions.
// Stage 3: C1 and C2 evaluate the scaled termination test. On success the new
//   clusters are revealed to the users through masks; otherwise iterate.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ppodc/paillier.hpp"
#include "ppodc/primitives.hpp"
#include "ppodc/transforms.hpp"
#include "ppodc/transport.hpp"

namespace ppodc::protocol {

using paillier::Ciphertext;
using paillier::PublicKey;
using primitives::ClusterState;
using primitives::DomainBound;
using transforms::Center;
using transforms::PlainRecord;

struct ShareRecord {
  std::vector<BigInt> share1;  // (t[s] + r[s]) mod N, held by C1
  std::vector<BigInt> share2;  // N - r[s], held by C2
};

ShareRecord user_split(const PlainRecord& record, const PublicKey& pk);
// Same with caller-chosen masks r[s] in [0, N).
ShareRecord user_split_with(const PlainRecord& record, const PublicKey& pk,
                            const std::vector<BigInt>& r);
std::vector<std::int64_t> reconstruct(const ShareRecord& shares, const PublicKey& pk);

struct EncRecord {
  std::vector<Ciphertext> cts;
};

struct RunConfig {
  std::size_t k = 2;
  BigInt beta = 0;
  int max_iters = transforms::kDefaultMaxIters;
  unsigned key_bits = paillier::kDefaultKeyBits;
  std::optional<unsigned> ell_override;
  unsigned kappa = primitives::kDefaultKappa;
  std::uint64_t seed = 1;
  int parallelism = 1;
  bool reuse_masks = true;
  bool pools = true;
  // Largest attribute value a record may carry (inclusive).
  std::int64_t v_max = transforms::kDefaultVMax;
  // Test hook: reveal with all-zero masks.
  bool zero_reveal_masks = false;
};

// Stage 2 compares OPED values only; Stage 3 compares the scaled termination
// sides, which need roughly twice the bits.
struct DomainPlan {
  DomainBound assign;
  DomainBound term;
};

unsigned assign_ell(std::size_t m, std::size_t k, std::size_t l, std::int64_t v_max);
unsigned term_ell(std::size_t m, std::size_t k, std::size_t l, std::int64_t v_max,
                  const BigInt& beta);
// Throws ConfigError if either bound does not fit the key or k/m/beta are
// invalid.
DomainPlan plan_domain(const RunConfig& cfg, std::size_t m, std::size_t l);

// Bytes, messages and operation counts sampled at stage boundaries.
struct MetricsSnapshot {
  std::uint64_t exponentiations = 0;
  std::uint64_t encryptions = 0;
  std::uint64_t decryptions = 0;
  std::uint64_t pool_misses = 0;
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
};
MetricsSnapshot operator-(const MetricsSnapshot& a, const MetricsSnapshot& b);
MetricsSnapshot& operator+=(MetricsSnapshot& a, const MetricsSnapshot& b);

struct StageMetrics {
  double online_ms = 0;
  double offline_ms = 0;
  MetricsSnapshot ops;
};

struct RunReport {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t l = 0;
  unsigned key_bits = 0;
  unsigned ell_assign = 0;
  unsigned ell_term = 0;
  int iterations = 0;
  bool converged = false;
  StageMetrics stage1;
  StageMetrics stage2;
  StageMetrics stage3;
  StageMetrics reveal;
  std::vector<double> stage2_iteration_ms;
  std::vector<std::size_t> empty_clusters_retained;
  // Operation counts per party; messages and bytes count frames that party sent.
  MetricsSnapshot c1_total;
  MetricsSnapshot c2_total;
};

std::string report_to_json(const RunReport& r);

// Called after each Stage 2 with the iteration number (1-based), the current
// clusters and the new ones (after the empty-cluster policy). Test-only.
using IterationObserver = std::function<void(int, const std::vector<ClusterState>&,
                                             const std::vector<ClusterState>&)>;

// ---------------------------------------------------------------------------
// C1-side building blocks; all run on one session.

// Combines C1's own shares with the encrypted C2 shares fetched over s.
// c1_shares[i][s] is C1's share of attribute s of record i.
std::vector<EncRecord> outsource_combine(primitives::C1Session& s,
                                         const std::vector<std::vector<BigInt>>& c1_shares);

std::vector<ClusterState> init_clusters(primitives::C1Session& s,
                                        const std::vector<EncRecord>& records, std::size_t k,
                                        std::uint64_t seed);

// Shared per-iteration inputs to the record kernel. With hoisting on, the
// scaling products are computed once per iteration instead of per record.
struct Stage2Shared {
  const std::vector<ClusterState>* clusters = nullptr;
  DomainBound bound;
  bool hoisted = false;
  Ciphertext alpha;                                 // E(prod |c_j|)
  std::vector<std::vector<Ciphertext>> scaled_lambda;  // E(alpha_h * lambda_h[s])
};

Stage2Shared prepare_stage2(primitives::C1Session& s, const std::vector<ClusterState>& clusters,
                            const DomainBound& bound, bool hoist);

// One record: OPED distances, indicator, and Lambda[h][s] = Gamma_h * t[s].
struct RecordContribution {
  std::vector<Ciphertext> gamma;
  std::vector<std::vector<Ciphertext>> lambda;
};
RecordContribution process_record(primitives::C1Session& s, const EncRecord& record,
                                  const Stage2Shared& shared);

// Serial reference and OpenMP record fan-out. sessions[t] serves thread t;
// the parallel kernel uses sessions.size() threads.
std::vector<ClusterState> assign_and_update_serial(primitives::C1Session& s,
                                                   const std::vector<EncRecord>& records,
                                                   const Stage2Shared& shared);
std::vector<ClusterState> assign_and_update_parallel(
    const std::vector<primitives::C1Session*>& sessions, const std::vector<EncRecord>& records,
    const Stage2Shared& shared);

// Replaces every new cluster whose size decrypts to 0 with the current one.
// Returns the retained indices.
std::vector<std::size_t> apply_empty_policy(primitives::C1Session& s,
                                            const std::vector<ClusterState>& current,
                                            std::vector<ClusterState>& next);

// E([sum_j ||c_j - c'_j||^2 <= beta]) decrypted by C2 and returned in the clear.
bool setc(primitives::C1Session& s, const std::vector<ClusterState>& current,
          const std::vector<ClusterState>& next, const BigInt& beta, const DomainBound& bound);

// Pool sizing: upper estimates of fresh encryptions per record / per
// iteration on each side.
struct EncryptionEstimate {
  std::size_t c1 = 0;
  std::size_t c2 = 0;
};
EncryptionEstimate estimate_record_encryptions(std::size_t k, std::size_t l, unsigned ell,
                                               bool reuse);
EncryptionEstimate estimate_iteration_encryptions(std::size_t k, std::size_t l,
                                                  unsigned ell_term, bool reuse);

// ---------------------------------------------------------------------------
// Parties

struct UserResult {
  std::vector<Center> centers;
  int iterations = 0;
  bool converged = false;
};

// C1 engine: receives shares from users, runs Stages 1-3 against C2 over
// c2_mux, and sends reveal masks to users. Ends by shutting down its C2
// sessions.
class CloudC1 {
 public:
  CloudC1(transport::Mux& c2_mux, PublicKey pk, RunConfig cfg,
          std::vector<transport::Stream> users);

  void set_observer(IterationObserver obs) { observer_ = std::move(obs); }
  // Adds counters to the metric snapshots (e.g. C2's in a single process).
  void set_metrics_sampler(std::function<MetricsSnapshot()> sampler) {
    sampler_ = std::move(sampler);
  }
  paillier::Counters& counters() { return counters_; }

  RunReport run();

 private:
  MetricsSnapshot sample() const;
  void top_up_pools(const std::vector<primitives::C1Session*>& sessions,
                    const std::vector<std::size_t>& targets, StageMetrics& into);

  transport::Mux& c2_mux_;
  PublicKey pk_;
  RunConfig cfg_;
  std::vector<transport::Stream> users_;
  IterationObserver observer_;
  std::function<MetricsSnapshot()> sampler_;
  paillier::Counters counters_;
};

// C2 engine: collects user shares, then answers C1 until C1 disconnects.
class CloudC2 {
 public:
  CloudC2(transport::Mux& c1_mux, paillier::SecretKey sk, std::vector<transport::Stream> users,
          primitives::DecryptionLog* log = nullptr);
  paillier::Counters& counters() { return counters_; }
  void run();

 private:
  bool on_extra(transport::Stream& stream, const transport::Frame& f,
                primitives::C2Responder& responder);

  transport::Mux& c1_mux_;
  paillier::SecretKey sk_;
  std::vector<transport::Stream> users_;
  primitives::DecryptionLog* log_;
  paillier::Counters counters_;
  std::vector<std::vector<BigInt>> shares_;  // C2 shares in record order
  std::size_t l_ = 0;
};

// User: uploads shares to both clouds and waits for the revealed centers.
UserResult run_user(std::uint64_t user_id, const std::vector<PlainRecord>& data,
                    const PublicKey& pk, transport::Stream to_c1, transport::Stream to_c2);

struct RunOutput {
  std::vector<UserResult> users;
  RunReport report;
};

struct RunHooks {
  IterationObserver observer;
  primitives::DecryptionLog* log = nullptr;
};

// All parties in one process over in-process channels; users as threads.
RunOutput run_all_in_one(const RunConfig& cfg, const paillier::KeyPair& keys,
                         const std::vector<std::vector<PlainRecord>>& user_data,
                         const RunHooks& hooks = {});

// Same, with freshly generated keys of cfg.key_bits.
RunOutput run_ppodc(const RunConfig& cfg, const std::vector<std::vector<PlainRecord>>& user_data,
                    const RunHooks& hooks = {});

// Role-separated runs over TCP. C2 listens for C1 and n users; C1 connects to
// C2 and listens for users; a user connects to C1, then C2.
void run_c2_tcp(const transport::Endpoint& listen, const paillier::SecretKey& sk,
                std::size_t n_users);
RunReport run_c1_tcp(const transport::Endpoint& listen_users, const transport::Endpoint& c2,
                     const RunConfig& cfg, std::size_t n_users);
UserResult run_user_tcp(std::uint64_t user_id, const std::vector<PlainRecord>& data,
                        const transport::Endpoint& c1, const transport::Endpoint& c2);

}  // namespace ppodc::protocol

#include <omp.h>

#include <exception>
#include <mutex>

#include "ppodc/errors.hpp"
#include "ppodc/protocol.hpp"

namespace ppodc::protocol {

using primitives::C1Session;

RecordContribution process_record(C1Session& s, const EncRecord& record,
                                  const Stage2Shared& shared) {
  const auto& clusters = *shared.clusters;
  const std::size_t k = clusters.size();
  const std::size_t l = record.cts.size();
  RecordContribution out;
  if (k == 1) {
    out.gamma = {s.encrypt(BigInt(1))};
    out.lambda = {record.cts};
    return out;
  }

  std::vector<Ciphertext> dist;
  if (shared.hoisted) {
    std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
    for (const auto& t : record.cts) pairs.emplace_back(shared.alpha, t);
    auto scaled = primitives::smp_batch(s, pairs);
    std::vector<std::pair<std::vector<Ciphertext>, std::vector<Ciphertext>>> xy;
    for (std::size_t h = 0; h < k; ++h) xy.emplace_back(scaled, shared.scaled_lambda[h]);
    dist = primitives::ssed_many(s, xy);
  } else {
    for (std::size_t h = 0; h < k; ++h)
      dist.push_back(primitives::ssed_op(s, record.cts, clusters, h));
  }

  out.gamma = primitives::smin_k(s, dist, shared.bound).entries;

  std::vector<std::pair<Ciphertext, Ciphertext>> pairs;
  for (std::size_t h = 0; h < k; ++h)
    for (const auto& t : record.cts) pairs.emplace_back(out.gamma[h], t);
  auto prod = primitives::smp_batch(s, pairs);
  out.lambda.assign(k, {});
  for (std::size_t h = 0; h < k; ++h)
    out.lambda[h].assign(prod.begin() + static_cast<std::ptrdiff_t>(h * l),
                         prod.begin() + static_cast<std::ptrdiff_t>((h + 1) * l));
  s.reset_cache();
  return out;
}

namespace {

// Running products W_h[s] and E(|c'_h|), starting from the trivial E(0) = 1.
struct Accumulator {
  std::vector<ClusterState> acc;

  Accumulator(const PublicKey& pk, std::size_t k, std::size_t l) {
    Ciphertext one{BigInt(1), pk.id()};
    acc.assign(k, ClusterState{std::vector<Ciphertext>(l, one), one});
  }

  void add(const PublicKey& pk, const RecordContribution& c) {
    for (std::size_t h = 0; h < acc.size(); ++h) {
      acc[h].enc_size = paillier::hom_add(pk, acc[h].enc_size, c.gamma[h]);
      for (std::size_t s = 0; s < acc[h].enc_lambda.size(); ++s)
        acc[h].enc_lambda[s] = paillier::hom_add(pk, acc[h].enc_lambda[s], c.lambda[h][s]);
    }
  }

  void merge(const PublicKey& pk, const Accumulator& other) {
    for (std::size_t h = 0; h < acc.size(); ++h) {
      acc[h].enc_size = paillier::hom_add(pk, acc[h].enc_size, other.acc[h].enc_size);
      for (std::size_t s = 0; s < acc[h].enc_lambda.size(); ++s)
        acc[h].enc_lambda[s] =
            paillier::hom_add(pk, acc[h].enc_lambda[s], other.acc[h].enc_lambda[s]);
    }
  }
};

std::size_t dims(const std::vector<EncRecord>& records) {
  return records.empty() ? 0 : records.front().cts.size();
}

}  // namespace

std::vector<ClusterState> assign_and_update_serial(C1Session& s,
                                                   const std::vector<EncRecord>& records,
                                                   const Stage2Shared& shared) {
  const PublicKey& pk = s.pk();
  Accumulator total(pk, shared.clusters->size(), dims(records));
  for (const auto& rec : records) total.add(pk, process_record(s, rec, shared));
  return total.acc;
}

std::vector<ClusterState> assign_and_update_parallel(const std::vector<C1Session*>& sessions,
                                                     const std::vector<EncRecord>& records,
                                                     const Stage2Shared& shared) {
  if (sessions.empty()) throw UsageError("parallel stage needs at least one session");
  const PublicKey& pk = sessions.front()->pk();
  const int threads = static_cast<int>(sessions.size());
  const std::size_t k = shared.clusters->size();
  const std::size_t l = dims(records);
  const auto m = static_cast<std::ptrdiff_t>(records.size());

  std::vector<Accumulator> partial;
  partial.reserve(sessions.size());
  for (std::size_t t = 0; t < sessions.size(); ++t) partial.emplace_back(pk, k, l);

  std::exception_ptr failure;
  std::mutex failure_mu;
  // schedule(static, 1) pins record i to thread i % threads, matching the
  // per-session pool sizing.
#pragma omp parallel for num_threads(threads) schedule(static, 1)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    {
      std::lock_guard lock(failure_mu);
      if (failure) continue;
    }
    const int t = omp_get_thread_num();
    try {
      partial[t].add(pk, process_record(*sessions[t], records[i], shared));
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  Accumulator total(pk, k, l);
  for (const auto& p : partial) total.merge(pk, p);
  return total.acc;
}

}  // namespace ppodc::protocol

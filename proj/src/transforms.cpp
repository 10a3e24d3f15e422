#include "ppodc/transforms.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "ppodc/errors.hpp"

namespace ppodc::transforms {

namespace {

void require_positive(const BigInt& size) {
  if (sgn(size) <= 0) throw DegenerateClusterError("cluster of size zero");
}

void require_dims(std::size_t a, std::size_t b) {
  if (a != b) throw UsageError("dimension mismatch");
}

void require_pairs(const std::vector<PlainCluster>& current,
                   const std::vector<PlainCluster>& next) {
  if (current.size() != next.size() || current.empty())
    throw UsageError("termination test needs k current and k new clusters");
  for (std::size_t j = 0; j < current.size(); ++j) {
    require_positive(current[j].size);
    require_positive(next[j].size);
    require_dims(current[j].dim(), next[j].dim());
  }
}

}  // namespace

PlainCluster PlainCluster::of_record(const PlainRecord& t) {
  PlainCluster c;
  c.lambda.reserve(t.dim());
  for (auto v : t.attrs) c.lambda.emplace_back(static_cast<long>(v));
  c.size = 1;
  return c;
}

std::vector<Rational> cluster_center(const PlainCluster& c) {
  require_positive(c.size);
  std::vector<Rational> mu;
  mu.reserve(c.dim());
  for (const auto& sum : c.lambda) {
    Rational q(sum, c.size);
    q.canonicalize();
    mu.push_back(q);
  }
  return mu;
}

Rational squared_distance(const PlainRecord& t, const PlainCluster& c) {
  require_dims(t.dim(), c.dim());
  auto mu = cluster_center(c);
  Rational total = 0;
  for (std::size_t s = 0; s < t.dim(); ++s) {
    Rational d = Rational(BigInt(static_cast<long>(t.attrs[s]))) - mu[s];
    total += d * d;
  }
  return total;
}

double euclidean_distance(const PlainRecord& t, const PlainCluster& c) {
  return std::sqrt(squared_distance(t, c).get_d());
}

std::string to_decimal(const Rational& q, int places) {
  BigInt scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  BigInt scaled = q.get_num() * scale;
  mpz_tdiv_q(scaled.get_mpz_t(), scaled.get_mpz_t(), q.get_den().get_mpz_t());
  std::string sign = sgn(scaled) < 0 || (sgn(scaled) == 0 && sgn(q) < 0) ? "-" : "";
  BigInt mag = abs(scaled);
  BigInt whole = mag / scale, frac = mag % scale;
  std::string digits = frac.get_str();
  if (places == 0) return sign + whole.get_str();
  return sign + whole.get_str() + "." + std::string(places - digits.size(), '0') + digits;
}

double truncate_decimal(double x, int places) {
  double scale = std::pow(10.0, places);
  return std::trunc(x * scale) / scale;
}

Rational squared_center_distance(const PlainCluster& a, const PlainCluster& b) {
  require_dims(a.dim(), b.dim());
  auto mu_a = cluster_center(a);
  auto mu_b = cluster_center(b);
  Rational total = 0;
  for (std::size_t s = 0; s < mu_a.size(); ++s) {
    Rational d = mu_a[s] - mu_b[s];
    total += d * d;
  }
  return total;
}

ScalingFactors scaling_factors(const std::vector<BigInt>& sizes) {
  ScalingFactors out;
  out.alpha = 1;
  for (const auto& s : sizes) {
    require_positive(s);
    out.alpha *= s;
  }
  out.alphas.reserve(sizes.size());
  for (const auto& s : sizes) {
    BigInt a;
    mpz_divexact(a.get_mpz_t(), out.alpha.get_mpz_t(), s.get_mpz_t());
    out.alphas.push_back(a);
  }
  return out;
}

BigInt oped_squared(const PlainRecord& t, const PlainCluster& c, const BigInt& alpha,
                    const BigInt& alpha_c) {
  require_dims(t.dim(), c.dim());
  BigInt total = 0;
  for (std::size_t s = 0; s < t.dim(); ++s) {
    BigInt d = alpha * static_cast<long>(t.attrs[s]) - alpha_c * c.lambda[s];
    total += d * d;
  }
  return total;
}

TerminationParams termination_factors(const std::vector<PlainCluster>& current,
                                      const std::vector<PlainCluster>& next) {
  require_pairs(current, next);
  std::vector<BigInt> pair_sizes;
  pair_sizes.reserve(current.size());
  for (std::size_t j = 0; j < current.size(); ++j)
    pair_sizes.push_back(current[j].size * next[j].size);
  auto sf = scaling_factors(pair_sizes);
  return {sf.alpha, sf.alphas};
}

BigInt termination_lhs(const std::vector<PlainCluster>& current,
                       const std::vector<PlainCluster>& next) {
  auto params = termination_factors(current, next);
  BigInt total = 0;
  for (std::size_t j = 0; j < current.size(); ++j) {
    for (std::size_t s = 0; s < current[j].dim(); ++s) {
      BigInt d = next[j].size * params.fj[j] * current[j].lambda[s] -
                 current[j].size * params.fj[j] * next[j].lambda[s];
      total += d * d;
    }
  }
  return total;
}

BigInt termination_rhs(const BigInt& f, const BigInt& beta) {
  if (sgn(beta) < 0) throw DomainError("beta must be non-negative");
  return f * f * beta;
}

bool termination_holds_scaled(const std::vector<PlainCluster>& current,
                              const std::vector<PlainCluster>& next, const BigInt& beta) {
  auto params = termination_factors(current, next);
  return termination_lhs(current, next) <= termination_rhs(params.f, beta);
}

bool termination_holds_exact(const std::vector<PlainCluster>& current,
                             const std::vector<PlainCluster>& next, const BigInt& beta) {
  require_pairs(current, next);
  if (sgn(beta) < 0) throw DomainError("beta must be non-negative");
  Rational total = 0;
  for (std::size_t j = 0; j < current.size(); ++j)
    total += squared_center_distance(current[j], next[j]);
  return total <= Rational(beta);
}

std::vector<std::size_t> choose_initial_indices(std::size_t m, std::size_t k,
                                                std::uint64_t seed) {
  if (k == 0 || k > m) throw ConfigError("need 1 <= k <= m");
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Partial Fisher-Yates with an explicit draw so the sequence is identical
  // across standard library implementations.
  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t span = m - i;
    std::size_t j = i + static_cast<std::size_t>(gen() % span);
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  return all;
}

std::size_t nearest_cluster(const PlainRecord& t, const std::vector<PlainCluster>& clusters) {
  if (clusters.empty()) throw UsageError("no clusters");
  std::size_t best = 0;
  Rational best_d = squared_distance(t, clusters[0]);
  for (std::size_t h = 1; h < clusters.size(); ++h) {
    Rational d = squared_distance(t, clusters[h]);
    if (d < best_d) {
      best_d = d;
      best = h;
    }
  }
  return best;
}

std::vector<PlainCluster> lloyd_step(const std::vector<PlainRecord>& records,
                                     const std::vector<PlainCluster>& current) {
  const std::size_t k = current.size();
  const std::size_t l = current.empty() ? 0 : current[0].dim();
  std::vector<PlainCluster> next(k);
  for (auto& c : next) {
    c.lambda.assign(l, BigInt(0));
    c.size = 0;
  }
  for (const auto& t : records) {
    auto h = nearest_cluster(t, current);
    for (std::size_t s = 0; s < l; ++s) next[h].lambda[s] += static_cast<long>(t.attrs[s]);
    next[h].size += 1;
  }
  for (std::size_t h = 0; h < k; ++h)
    if (sgn(next[h].size) == 0) next[h] = current[h];
  return next;
}

LloydResult lloyd_kmeans(const std::vector<PlainRecord>& records, std::size_t k,
                         const BigInt& beta, const std::vector<std::size_t>& init_indices,
                         int max_iters) {
  if (k == 0 || k > records.size()) throw ConfigError("need 1 <= k <= m");
  if (init_indices.size() != k) throw UsageError("need exactly k initial indices");
  if (std::set<std::size_t>(init_indices.begin(), init_indices.end()).size() != k)
    throw UsageError("initial indices must be distinct");
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  const std::size_t l = records.front().dim();
  for (const auto& t : records) require_dims(t.dim(), l);

  std::vector<PlainCluster> current;
  current.reserve(k);
  for (auto idx : init_indices) {
    if (idx >= records.size()) throw UsageError("initial index out of range");
    current.push_back(PlainCluster::of_record(records[idx]));
  }

  LloydResult result;
  std::vector<PlainCluster> next;
  for (int iter = 1; iter <= max_iters; ++iter) {
    next = lloyd_step(records, current);
    result.iterations = iter;
    if (termination_holds_exact(current, next, beta)) {
      result.converged = true;
      break;
    }
    current = next;
  }
  result.clusters = next;
  for (const auto& c : next) result.centers.push_back(cluster_center(c));
  return result;
}

}  // namespace ppodc::transforms

#pragma once

// Plaintext k-means arithmetic: cluster centers, integer scaling factors, the
// order-preserving Euclidean distance (OPED), the integer form of the
// termination test, and an exact-rational Lloyd's k-means used as the oracle
// for the encrypted protocol.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ppodc/bigint.hpp"

namespace ppodc::transforms {

constexpr std::int64_t kDefaultVMax = 1000;
constexpr int kDefaultMaxIters = 50;

struct PlainRecord {
  std::vector<std::int64_t> attrs;

  std::size_t dim() const { return attrs.size(); }
  friend bool operator==(const PlainRecord&, const PlainRecord&) = default;
};

// lambda[s] is the attribute-wise sum of the members, size = |c|.
struct PlainCluster {
  std::vector<BigInt> lambda;
  BigInt size;

  static PlainCluster of_record(const PlainRecord& t);
  std::size_t dim() const { return lambda.size(); }
  friend bool operator==(const PlainCluster&, const PlainCluster&) = default;
};

using Center = std::vector<Rational>;

std::vector<Rational> cluster_center(const PlainCluster& c);

// Exact ||t - mu_c||^2.
Rational squared_distance(const PlainRecord& t, const PlainCluster& c);
// sqrt of the above; for display only.
double euclidean_distance(const PlainRecord& t, const PlainCluster& c);
// Decimal display truncated toward zero, the convention of the worked
// examples: 5/3 -> "1.666", sqrt(13/9) -> 1.201.
std::string to_decimal(const Rational& q, int places = 3);
double truncate_decimal(double x, int places = 3);

// ||mu_a - mu_b||^2.
Rational squared_center_distance(const PlainCluster& a, const PlainCluster& b);

struct ScalingFactors {
  BigInt alpha;                // product of all sizes
  std::vector<BigInt> alphas;  // alpha / sizes[i]
};

ScalingFactors scaling_factors(const std::vector<BigInt>& sizes);

// sum_s (alpha * t[s] - alpha_c * lambda_c[s])^2 == alpha^2 * ||t - c||^2.
BigInt oped_squared(const PlainRecord& t, const PlainCluster& c, const BigInt& alpha,
                    const BigInt& alpha_c);

struct TerminationParams {
  BigInt f;                // prod_j |c_j| * |c'_j|
  std::vector<BigInt> fj;  // f / (|c_j| * |c'_j|)
};

TerminationParams termination_factors(const std::vector<PlainCluster>& current,
                                      const std::vector<PlainCluster>& next);
BigInt termination_lhs(const std::vector<PlainCluster>& current,
                       const std::vector<PlainCluster>& next);
BigInt termination_rhs(const BigInt& f, const BigInt& beta);
// Integer route: lhs <= f^2 * beta.
bool termination_holds_scaled(const std::vector<PlainCluster>& current,
                              const std::vector<PlainCluster>& next, const BigInt& beta);
// Rational route: sum_j ||c_j - c'_j||^2 <= beta.
bool termination_holds_exact(const std::vector<PlainCluster>& current,
                             const std::vector<PlainCluster>& next, const BigInt& beta);

// k distinct indices in [0, m) drawn with a seeded generator; shared by the
// protocol's cluster initialisation and the oracle.
std::vector<std::size_t> choose_initial_indices(std::size_t m, std::size_t k,
                                                std::uint64_t seed);

// Index of the closest cluster, lowest index on ties.
std::size_t nearest_cluster(const PlainRecord& t, const std::vector<PlainCluster>& clusters);

// One assignment + update step. A cluster that receives no record keeps its
// previous state.
std::vector<PlainCluster> lloyd_step(const std::vector<PlainRecord>& records,
                                     const std::vector<PlainCluster>& current);

struct LloydResult {
  std::vector<Center> centers;
  std::vector<PlainCluster> clusters;
  int iterations = 0;
  bool converged = false;
};

LloydResult lloyd_kmeans(const std::vector<PlainRecord>& records, std::size_t k,
                         const BigInt& beta, const std::vector<std::size_t>& init_indices,
                         int max_iters = kDefaultMaxIters);

}  // namespace ppodc::transforms

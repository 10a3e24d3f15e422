#pragma once

// Benchmark grid over (m, k, l): one all-in-one run per repeat, averaged per
// stage and emitted as CSV.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ppodc/paillier.hpp"

namespace ppodc::bench {

struct GridPoint {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t l = 0;
};

struct Row {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t l = 0;
  unsigned key_bits = 0;
  std::string stage;
  double online_ms = 0;
  double offline_ms = 0;
  double exp_count = 0;
  double msg_count = 0;
  double bytes = 0;
};

struct Options {
  int repeats = 3;
  int max_iters = 1;
  int parallelism = 1;
  bool reuse_masks = true;
  bool pools = true;
  std::uint64_t seed = 1;
};

// m in {100, 200, 400} at k=3, l=5; k in {2, 3, 4} at m=100, l=5;
// l in {2, 4, 8} at m=100, k=3. Duplicates are kept once.
std::vector<GridPoint> default_grid();

// Rows for stage1, stage2, stage3, averaged over opts.repeats runs.
std::vector<Row> run_point(const GridPoint& p, const paillier::KeyPair& keys, const Options& opts);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const Row& r);

// Coefficient of determination of the least-squares line through (x, y).
double linear_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ppodc::bench

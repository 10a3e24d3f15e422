#include <algorithm>
#include <ostream>

#include "ppodc/bench.hpp"
#include "ppodc/errors.hpp"
#include "ppodc/ingest.hpp"
#include "ppodc/protocol.hpp"

namespace ppodc::bench {

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> grid;
  auto add = [&](GridPoint p) {
    for (const auto& g : grid)
      if (g.m == p.m && g.k == p.k && g.l == p.l) return;
    grid.push_back(p);
  };
  for (std::size_t m : {100, 200, 400}) add({m, 3, 5});
  for (std::size_t k : {2, 3, 4}) add({100, k, 5});
  for (std::size_t l : {2, 4, 8}) add({100, 3, l});
  return grid;
}

std::vector<Row> run_point(const GridPoint& p, const paillier::KeyPair& keys, const Options& opts) {
  if (opts.repeats < 1) throw ConfigError("repeats must be at least 1");
  const char* names[] = {"stage1", "stage2", "stage3"};
  std::vector<Row> rows(3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].m = p.m;
    rows[i].k = p.k;
    rows[i].l = p.l;
    rows[i].key_bits = keys.pub.key_bits();
    rows[i].stage = names[i];
  }
  for (int rep = 0; rep < opts.repeats; ++rep) {
    std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(rep);
    auto data = ingest::synthetic(p.m, p.l, transforms::kDefaultVMax, seed, p.k);
    protocol::RunConfig cfg;
    cfg.k = p.k;
    cfg.max_iters = opts.max_iters;
    cfg.seed = seed;
    cfg.parallelism = opts.parallelism;
    cfg.reuse_masks = opts.reuse_masks;
    cfg.pools = opts.pools;
    cfg.key_bits = keys.pub.key_bits();
    auto out = protocol::run_all_in_one(cfg, keys, {data});
    const protocol::StageMetrics* stages[] = {&out.report.stage1, &out.report.stage2,
                                              &out.report.stage3};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].online_ms += stages[i]->online_ms;
      rows[i].offline_ms += stages[i]->offline_ms;
      rows[i].exp_count += static_cast<double>(stages[i]->ops.exponentiations);
      rows[i].msg_count += static_cast<double>(stages[i]->ops.messages);
      rows[i].bytes += static_cast<double>(stages[i]->ops.bytes);
    }
  }
  const double n = opts.repeats;
  for (auto& r : rows) {
    r.online_ms /= n;
    r.offline_ms /= n;
    r.exp_count /= n;
    r.msg_count /= n;
    r.bytes /= n;
  }
  return rows;
}

void write_csv_header(std::ostream& out) {
  out << "m,k,l,key_bits,stage,online_ms,offline_ms,exp_count,msg_count,bytes\n";
}

void write_csv_row(std::ostream& out, const Row& r) {
  out << r.m << ',' << r.k << ',' << r.l << ',' << r.key_bits << ',' << r.stage << ','
      << r.online_ms << ',' << r.offline_ms << ',' << r.exp_count << ',' << r.msg_count << ','
      << r.bytes << '\n';
}

double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw UsageError("x values are all equal");
  if (syy == 0) return 1.0;
  return (sxy * sxy) / (sxx * syy);
}

}  // namespace ppodc::bench

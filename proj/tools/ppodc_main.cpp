// ppodc: key generation, ingestion, share splitting, protocol runs, oracle
// verification and benchmarks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "ppodc/bench.hpp"
#include "ppodc/errors.hpp"
#include "ppodc/ingest.hpp"
#include "ppodc/paillier.hpp"
#include "ppodc/protocol.hpp"
#include "ppodc/transforms.hpp"

namespace {

using namespace ppodc;
namespace fs = std::filesystem;

struct RunFlags {
  std::string role = "all-in-one";
  std::string data;
  std::size_t m = 50;
  std::size_t l = 3;
  std::int64_t v_max = transforms::kDefaultVMax;
  std::size_t users = 1;
  std::uint64_t user_id = 1;
  std::size_t k = 2;
  std::string beta = "0";
  int max_iters = transforms::kDefaultMaxIters;
  std::uint64_t seed = 1;
  unsigned key_bits = paillier::kDefaultKeyBits;
  std::string key;
  int parallelism = 1;
  std::optional<unsigned> ell_override;
  unsigned kappa = primitives::kDefaultKappa;
  bool reuse_masks = true;
  bool pools = true;
  std::string transport = "inproc";
  std::string listen;
  std::string connect;
  std::string c2;
  std::string out;
};

const std::map<std::string, bool> kOnOff{{"on", true}, {"off", false}};

void add_engine_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--max-iters", f.max_iters, "iteration cap")->check(CLI::PositiveNumber);
  app->add_option("--seed", f.seed, "seed for initial clusters and synthetic data");
  app->add_option("--key-bits", f.key_bits, "Paillier modulus size");
  app->add_option("--parallelism", f.parallelism, "Stage 2 worker sessions")
      ->check(CLI::PositiveNumber);
  app->add_option("--reuse-masks", f.reuse_masks, "mask reuse and hoisting: on|off")
      ->transform(CLI::CheckedTransformer(kOnOff));
  app->add_option("--pools", f.pools, "precomputed encryption randomness: on|off")
      ->transform(CLI::CheckedTransformer(kOnOff));
}

void add_config_flags(CLI::App* app, RunFlags& f) {
  add_engine_flags(app, f);
  app->add_option("--k", f.k, "number of clusters")->check(CLI::PositiveNumber);
  app->add_option("--beta", f.beta, "termination threshold (non-negative integer)");
  app->add_option("--ell-override", f.ell_override, "force the comparison bit length");
  app->add_option("--kappa", f.kappa, "statistical masking parameter");
}

void add_data_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--data", f.data, "CSV dataset; synthetic data when omitted");
  app->add_option("--m", f.m, "synthetic record count")->check(CLI::PositiveNumber);
  app->add_option("--l", f.l, "synthetic attribute count")->check(CLI::PositiveNumber);
  app->add_option("--v-max", f.v_max, "attribute domain upper bound")->check(CLI::PositiveNumber);
}

protocol::RunConfig to_config(const RunFlags& f) {
  protocol::RunConfig cfg;
  cfg.k = f.k;
  BigInt beta;
  if (beta.set_str(f.beta, 10) != 0) throw UsageError("--beta must be an integer");
  cfg.beta = beta;
  cfg.max_iters = f.max_iters;
  cfg.key_bits = f.key_bits;
  cfg.ell_override = f.ell_override;
  cfg.kappa = f.kappa;
  cfg.seed = f.seed;
  cfg.parallelism = f.parallelism;
  cfg.reuse_masks = f.reuse_masks;
  cfg.pools = f.pools;
  cfg.v_max = f.v_max;
  return cfg;
}

std::vector<transforms::PlainRecord> load_records(const RunFlags& f) {
  if (f.data.empty()) return ingest::synthetic(f.m, f.l, f.v_max, f.seed);
  auto res = ingest::ingest_file(f.data, f.v_max);
  std::cerr << "ingested " << res.records.size() << " records from " << f.data << " ("
            << res.rows_dropped << " of " << res.rows_read << " rows dropped)\n";
  return res.records;
}

std::string format_rational(const Rational& q) {
  std::ostringstream s;
  s << q.get_str() << " (" << transforms::to_decimal(q) << ")";
  return s.str();
}

void print_centers(std::ostream& out, const std::vector<transforms::Center>& centers,
                   int iterations, bool converged) {
  out << "iterations: " << iterations << (converged ? " (converged)" : " (iteration cap reached)")
      << '\n';
  for (std::size_t h = 0; h < centers.size(); ++h) {
    out << "center " << h << ':';
    for (const auto& v : centers[h]) out << ' ' << format_rational(v);
    out << '\n';
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

paillier::KeyPair keys_for(const RunFlags& f) {
  if (f.key.empty()) return paillier::keygen(f.key_bits);
  auto sk = paillier::read_secret_key(f.key);
  return {sk.public_key(), sk};
}

transport::Endpoint loopback(std::uint16_t port) { return {"127.0.0.1", port}; }

std::uint16_t free_port() {
  transport::TcpListener probe(loopback(0));
  return probe.port();
}

// all-in-one with every party on its own loopback TCP connection.
protocol::RunOutput run_all_tcp(const protocol::RunConfig& cfg, const paillier::KeyPair& keys,
                                const std::vector<std::vector<transforms::PlainRecord>>& parts) {
  auto c2_ep = loopback(free_port());
  auto c1_ep = loopback(free_port());
  std::exception_ptr c2_err, c1_err;
  std::thread c2([&] {
    try {
      protocol::run_c2_tcp(c2_ep, keys.sec, parts.size());
    } catch (...) {
      c2_err = std::current_exception();
    }
  });
  protocol::RunOutput out;
  std::thread c1([&] {
    try {
      out.report = protocol::run_c1_tcp(c1_ep, c2_ep, cfg, parts.size());
    } catch (...) {
      c1_err = std::current_exception();
    }
  });
  out.users.resize(parts.size());
  std::vector<std::exception_ptr> user_err(parts.size());
  std::vector<std::thread> users;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    users.emplace_back([&, j] {
      try {
        out.users[j] = protocol::run_user_tcp(j + 1, parts[j], c1_ep, c2_ep);
      } catch (...) {
        user_err[j] = std::current_exception();
      }
    });
  }
  for (auto& t : users) t.join();
  c1.join();
  c2.join();
  for (const auto& e : {c1_err, c2_err})
    if (e) std::rethrow_exception(e);
  for (const auto& e : user_err)
    if (e) std::rethrow_exception(e);
  return out;
}

int cmd_keygen(unsigned bits, const std::string& out) {
  auto keys = paillier::keygen(bits);
  paillier::write_secret_key(keys.sec, out);
  paillier::write_public_key(keys.pub, out + ".pub");
  std::cout << "wrote " << out << " and " << out << ".pub (" << bits << "-bit modulus)\n";
  return 0;
}

int cmd_ingest(const RunFlags& f) {
  if (f.data.empty()) throw UsageError("--data is required");
  auto res = ingest::ingest_file(f.data, f.v_max);
  std::cout << "rows read: " << res.rows_read << ", dropped: " << res.rows_dropped
            << ", kept: " << res.records.size() << '\n';
  if (!f.out.empty()) ingest::write_records_csv(res.records, f.out);
  return 0;
}

// Writes per-user plaintext blocks plus the share files each cloud would
// receive: rows of "user_id,record,share...".
int cmd_split(const RunFlags& f) {
  if (f.out.empty()) throw UsageError("--out directory is required");
  if (f.key.empty()) throw UsageError("--key is required");
  auto pk = paillier::read_public_key(f.key);
  auto parts = ingest::partition(load_records(f), f.users);
  fs::create_directories(f.out);
  std::ofstream c1(fs::path(f.out) / "c1_shares.csv"), c2(fs::path(f.out) / "c2_shares.csv");
  if (!c1 || !c2) throw UsageError("cannot write share files in " + f.out);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    ingest::write_records_csv(parts[j], fs::path(f.out) / ("user_" + std::to_string(j + 1) + ".csv"));
    for (std::size_t i = 0; i < parts[j].size(); ++i) {
      auto sh = protocol::user_split(parts[j][i], pk);
      c1 << j + 1 << ',' << i;
      c2 << j + 1 << ',' << i;
      for (const auto& v : sh.share1) c1 << ',' << v.get_str();
      for (const auto& v : sh.share2) c2 << ',' << v.get_str();
      c1 << '\n';
      c2 << '\n';
    }
  }
  std::cout << "split " << f.users << " users into " << f.out << '\n';
  return 0;
}

int cmd_run(const RunFlags& f) {
  auto cfg = to_config(f);
  if (f.role == "all-in-one") {
    auto records = load_records(f);
    if (records.empty()) throw UsageError("no records to cluster");
    protocol::plan_domain(cfg, records.size(), records.front().dim());
    auto keys = keys_for(f);
    auto parts = ingest::partition(records, f.users);
    protocol::RunOutput out;
    if (f.transport == "inproc")
      out = protocol::run_all_in_one(cfg, keys, parts);
    else if (f.transport == "tcp")
      out = run_all_tcp(cfg, keys, parts);
    else
      throw UsageError("--transport must be inproc or tcp");
    const auto& u = out.users.front();
    print_centers(std::cout, u.centers, u.iterations, u.converged);
    auto json = protocol::report_to_json(out.report);
    if (f.out.empty())
      std::cout << json << '\n';
    else
      write_text(f.out, json + "\n");
    return 0;
  }
  if (f.role == "c2") {
    if (f.key.empty() || f.listen.empty()) throw UsageError("c2 needs --key and --listen");
    auto sk = paillier::read_secret_key(f.key);
    protocol::run_c2_tcp(transport::Endpoint::parse(f.listen), sk, f.users);
    return 0;
  }
  if (f.role == "c1") {
    if (f.listen.empty() || f.connect.empty())
      throw UsageError("c1 needs --listen (users) and --connect (C2)");
    auto report = protocol::run_c1_tcp(transport::Endpoint::parse(f.listen),
                                       transport::Endpoint::parse(f.connect), cfg, f.users);
    auto json = protocol::report_to_json(report);
    if (f.out.empty())
      std::cout << json << '\n';
    else
      write_text(f.out, json + "\n");
    return 0;
  }
  if (f.role == "user") {
    if (f.connect.empty() || f.c2.empty()) throw UsageError("user needs --connect (C1) and --c2");
    if (f.user_id < 1 || f.user_id > f.users) throw UsageError("--user-id must be in [1, --users]");
    // Same partition as split and all-in-one; this user keeps slice user_id.
    auto records = ingest::partition(load_records(f), f.users).at(f.user_id - 1);
    auto res = protocol::run_user_tcp(f.user_id, records, transport::Endpoint::parse(f.connect),
                                      transport::Endpoint::parse(f.c2));
    std::ostringstream text;
    print_centers(text, res.centers, res.iterations, res.converged);
    std::cout << text.str();
    if (!f.out.empty()) write_text(f.out, text.str());
    return 0;
  }
  throw UsageError("--role must be all-in-one, c1, c2 or user");
}

int cmd_verify(const RunFlags& f) {
  auto cfg = to_config(f);
  auto records = load_records(f);
  if (records.empty()) throw UsageError("no records to cluster");
  auto out = protocol::run_ppodc(cfg, ingest::partition(records, f.users));
  auto want = transforms::lloyd_kmeans(
      records, cfg.k, cfg.beta, transforms::choose_initial_indices(records.size(), cfg.k, cfg.seed),
      cfg.max_iters);
  bool pass = true;
  for (const auto& u : out.users)
    pass = pass && u.centers == want.centers && u.iterations == want.iterations &&
           u.converged == want.converged;
  print_centers(std::cout, out.users.front().centers, out.users.front().iterations,
                out.users.front().converged);
  std::cout << (pass ? "PASS" : "FAIL") << ": encrypted run vs plaintext Lloyd (m=" << records.size()
            << ", l=" << records.front().dim() << ", k=" << cfg.k << ", iterations "
            << out.users.front().iterations << " vs " << want.iterations << ")\n";
  return pass ? 0 : 1;
}

struct BenchFlags {
  int repeats = 3;
  std::vector<std::size_t> ms, ks, ls;
};

int cmd_bench(const RunFlags& f, const BenchFlags& b) {
  std::vector<bench::GridPoint> grid;
  if (b.ms.empty() && b.ks.empty() && b.ls.empty()) {
    grid = bench::default_grid();
  } else {
    for (auto m : b.ms.empty() ? std::vector<std::size_t>{100} : b.ms)
      for (auto k : b.ks.empty() ? std::vector<std::size_t>{3} : b.ks)
        for (auto l : b.ls.empty() ? std::vector<std::size_t>{5} : b.ls) grid.push_back({m, k, l});
  }
  bench::Options opts;
  opts.repeats = b.repeats;
  opts.max_iters = f.max_iters;
  opts.parallelism = f.parallelism;
  opts.reuse_masks = f.reuse_masks;
  opts.pools = f.pools;
  opts.seed = f.seed;
  auto keys = keys_for(f);

  std::ofstream file;
  if (!f.out.empty()) {
    file.open(f.out);
    if (!file) throw UsageError("cannot write " + f.out);
  }
  std::ostream& out = f.out.empty() ? std::cout : file;
  bench::write_csv_header(out);
  for (const auto& p : grid) {
    std::cerr << "m=" << p.m << " k=" << p.k << " l=" << p.l << " ...\n";
    for (const auto& row : bench::run_point(p, keys, opts)) bench::write_csv_row(out, row);
    out.flush();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outsourced k-means over Paillier-encrypted data"};
  app.require_subcommand(1);

  unsigned keygen_bits = paillier::kDefaultKeyBits;
  std::string keygen_out = "ppodc.key";
  auto* keygen = app.add_subcommand("keygen", "generate a Paillier key pair");
  keygen->add_option("--key-bits", keygen_bits, "modulus size");
  keygen->add_option("--out", keygen_out, "secret key path; the public key goes to <out>.pub");

  RunFlags ingest_flags;
  auto* ingest_cmd = app.add_subcommand("ingest", "normalise a CSV into [0, v_max]");
  ingest_cmd->add_option("--data", ingest_flags.data, "input CSV")->required();
  ingest_cmd->add_option("--v-max", ingest_flags.v_max, "domain upper bound");
  ingest_cmd->add_option("--out", ingest_flags.out, "write the integer records here");

  RunFlags split_flags;
  auto* split = app.add_subcommand("split", "partition a dataset over users and write shares");
  add_data_flags(split, split_flags);
  split->add_option("--users", split_flags.users, "number of users")->check(CLI::PositiveNumber);
  split->add_option("--key", split_flags.key, "public or secret key file")->required();
  split->add_option("--out", split_flags.out, "output directory")->required();

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run the protocol in one role");
  add_data_flags(run, run_flags);
  add_config_flags(run, run_flags);
  run->add_option("--role", run_flags.role, "all-in-one | c1 | c2 | user")
      ->check(CLI::IsMember({"all-in-one", "c1", "c2", "user"}));
  run->add_option("--users", run_flags.users, "number of users")->check(CLI::PositiveNumber);
  run->add_option("--user-id", run_flags.user_id, "this user's id (role user)");
  run->add_option("--key", run_flags.key, "secret key file (c2; optional for all-in-one)");
  run->add_option("--transport", run_flags.transport, "inproc | tcp (all-in-one)")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  run->add_option("--listen", run_flags.listen, "host:port to accept connections on");
  run->add_option("--connect", run_flags.connect, "host:port of C2 (role c1) or C1 (role user)");
  run->add_option("--c2", run_flags.c2, "host:port of C2 (role user)");
  run->add_option("--out", run_flags.out, "write the report (or user centers) here");

  RunFlags verify_flags;
  verify_flags.key_bits = 512;
  auto* verify = app.add_subcommand("verify", "compare the encrypted run with plaintext Lloyd");
  add_data_flags(verify, verify_flags);
  add_config_flags(verify, verify_flags);
  verify->add_option("--users", verify_flags.users, "number of users")->check(CLI::PositiveNumber);

  RunFlags bench_flags;
  bench_flags.key_bits = 512;
  bench_flags.max_iters = 1;
  BenchFlags bench_grid;
  auto* bench_cmd = app.add_subcommand("bench", "per-stage timings over an (m, k, l) grid");
  add_engine_flags(bench_cmd, bench_flags);
  bench_cmd->add_option("--key", bench_flags.key, "secret key file; generated when omitted");
  bench_cmd->add_option("--repeats", bench_grid.repeats, "runs averaged per grid point")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--m", bench_grid.ms, "record counts")->delimiter(',');
  bench_cmd->add_option("--k", bench_grid.ks, "cluster counts")->delimiter(',');
  bench_cmd->add_option("--l", bench_grid.ls, "attribute counts")->delimiter(',');
  bench_cmd->add_option("--out", bench_flags.out, "CSV path; stdout when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*keygen) return cmd_keygen(keygen_bits, keygen_out);
    if (*ingest_cmd) return cmd_ingest(ingest_flags);
    if (*split) return cmd_split(split_flags);
    if (*run) return cmd_run(run_flags);
    if (*verify) return cmd_verify(verify_flags);
    if (*bench_cmd) return cmd_bench(bench_flags, bench_grid);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const IngestError& e) {
    std::cerr << "ingest error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include <algorithm>
#include <chrono>
#include <exception>
#include <map>
#include <thread>

#include "ppodc/errors.hpp"
#include "ppodc/protocol.hpp"

namespace ppodc::protocol {

using primitives::C1Session;
using transport::ControlOp;
using transport::Frame;
using transport::MessageType;
using transport::Mux;
using transport::PayloadReader;
using transport::PayloadWriter;
using transport::Stream;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

constexpr std::uint64_t kRoleC1 = 1;
constexpr std::uint64_t kRoleUser = 2;
constexpr std::uint32_t kUserSession = 0;
constexpr std::uint32_t kMainSession = 1;

void send_control(Stream& s, ControlOp op) {
  s.send(MessageType::kControl, transport::control_payload(op));
}

void expect_ack(Stream& s) {
  Frame f = s.recv_expect(MessageType::kControl);
  PayloadReader r(f.payload);
  if (r.get_u64() != static_cast<std::uint64_t>(ControlOp::kAck))
    throw IntegrityError("expected acknowledgement");
}

struct Upload {
  std::uint64_t user_id = 0;
  std::size_t l = 0;
  std::vector<std::vector<BigInt>> rows;
};

Upload read_upload(Stream& s) {
  Frame f = s.recv_expect(MessageType::kShareUpload);
  PayloadReader r(f.payload);
  Upload u;
  u.user_id = r.get_u64();
  auto m = r.get_u64();
  u.l = r.get_u64();
  u.rows.assign(m, {});
  for (auto& row : u.rows) {
    row.reserve(u.l);
    for (std::size_t s = 0; s < u.l; ++s) row.push_back(r.get());
  }
  r.expect_end();
  return u;
}

// Uploads from all users, concatenated in user-id order.
std::vector<std::vector<BigInt>> collect_shares(std::vector<Stream>& users, std::size_t& l) {
  std::vector<Upload> uploads;
  for (auto& s : users) uploads.push_back(read_upload(s));
  std::sort(uploads.begin(), uploads.end(),
            [](const Upload& a, const Upload& b) { return a.user_id < b.user_id; });
  for (std::size_t i = 1; i < uploads.size(); ++i)
    if (uploads[i].user_id == uploads[i - 1].user_id) throw IngestError("duplicate user id");
  std::vector<std::vector<BigInt>> rows;
  l = 0;
  for (auto& u : uploads) {
    if (u.rows.empty()) continue;
    if (l == 0) l = u.l;
    if (u.l != l) throw IngestError("users disagree on the number of attributes");
    for (auto& row : u.rows) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// C1

CloudC1::CloudC1(Mux& c2_mux, PublicKey pk, RunConfig cfg, std::vector<Stream> users)
    : c2_mux_(c2_mux), pk_(std::move(pk)), cfg_(std::move(cfg)), users_(std::move(users)) {}

MetricsSnapshot CloudC1::sample() const {
  MetricsSnapshot s;
  if (sampler_) s = sampler_();
  s.exponentiations += counters_.exponentiations.load();
  s.encryptions += counters_.encryptions.load();
  s.decryptions += counters_.decryptions.load();
  s.pool_misses += counters_.pool_misses.load();
  return s;
}

void CloudC1::top_up_pools(const std::vector<C1Session*>& sessions,
                           const std::vector<std::size_t>& targets, StageMetrics& into) {
  if (!cfg_.pools) return;
  auto start = Clock::now();
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto* s = sessions[i];
    std::size_t have = s->pool().size();
    if (have < targets[i]) s->precompute_local(targets[i] - have, true);
    s->precompute_peer(targets[i]);
  }
  into.offline_ms += ms_since(start);
}

RunReport CloudC1::run() {
  cfg_.key_bits = pk_.key_bits();
  RunReport report;
  report.k = cfg_.k;
  report.key_bits = cfg_.key_bits;

  std::size_t l = 0;
  auto c1_shares = collect_shares(users_, l);
  const std::size_t m = c1_shares.size();
  report.m = m;
  report.l = l;
  DomainPlan plan = plan_domain(cfg_, m, l);
  report.ell_assign = plan.assign.ell;
  report.ell_term = plan.term.ell;

  const int workers = std::max(1, cfg_.parallelism);
  C1Session main(c2_mux_.open_stream(kMainSession), pk_, &counters_);
  std::vector<std::unique_ptr<C1Session>> worker_sessions;
  for (int t = 0; t < workers; ++t)
    worker_sessions.push_back(std::make_unique<C1Session>(
        c2_mux_.open_stream(kMainSession + 1 + static_cast<std::uint32_t>(t)), pk_, &counters_));
  std::vector<C1Session*> all{&main};
  std::vector<C1Session*> worker_ptrs;
  for (auto& w : worker_sessions) {
    all.push_back(w.get());
    worker_ptrs.push_back(w.get());
  }
  for (auto* s : all) {
    s->set_reuse_masks(cfg_.reuse_masks);
    s->set_use_pool(cfg_.pools);
  }

  // Stage 1
  top_up_pools({&main}, {m * l + cfg_.k}, report.stage1);
  auto snap = sample();
  auto start = Clock::now();
  auto records = outsource_combine(main, c1_shares);
  auto clusters = init_clusters(main, records, cfg_.k, cfg_.seed);
  report.stage1.online_ms = ms_since(start);
  report.stage1.ops = sample() - snap;

  const auto rec_est = estimate_record_encryptions(cfg_.k, l, plan.assign.ell, cfg_.reuse_masks);
  const auto it_est = estimate_iteration_encryptions(cfg_.k, l, plan.term.ell, cfg_.reuse_masks);
  // Worker t handles records t, t + workers, ...
  std::vector<std::size_t> worker_targets;
  for (int t = 0; t < workers; ++t) {
    std::size_t count = m / workers + (static_cast<std::size_t>(t) < m % workers ? 1 : 0);
    worker_targets.push_back(count * std::max(rec_est.c1, rec_est.c2));
  }

  std::vector<ClusterState> next;
  for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
    std::vector<std::size_t> targets{std::max(it_est.c1, it_est.c2)};
    targets.insert(targets.end(), worker_targets.begin(), worker_targets.end());
    top_up_pools(all, targets, report.stage2);

    snap = sample();
    start = Clock::now();
    auto shared = prepare_stage2(main, clusters, plan.assign, cfg_.reuse_masks);
    next = workers == 1 ? assign_and_update_serial(*worker_ptrs.front(), records, shared)
                        : assign_and_update_parallel(worker_ptrs, records, shared);
    auto retained = apply_empty_policy(main, clusters, next);
    main.reset_cache();
    double it_ms = ms_since(start);
    report.stage2.online_ms += it_ms;
    report.stage2_iteration_ms.push_back(it_ms);
    report.stage2.ops += sample() - snap;
    report.empty_clusters_retained.push_back(retained.size());
    report.iterations = iter;

    if (observer_) observer_(iter, clusters, next);

    snap = sample();
    start = Clock::now();
    bool done = setc(main, clusters, next, cfg_.beta, plan.term);
    main.reset_cache();
    report.stage3.online_ms += ms_since(start);
    report.stage3.ops += sample() - snap;
    if (done) {
      report.converged = true;
      break;
    }
    clusters = next;
  }

  // Reveal the last new clusters; on timeout they are the best state held.
  snap = sample();
  start = Clock::now();
  const BigInt& n = pk_.n();
  std::vector<BigInt> r1, r2;
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(cfg_.k)).put(static_cast<std::uint64_t>(l));
  for (const auto& c : next) {
    for (const auto& lam : c.enc_lambda) {
      BigInt r = cfg_.zero_reveal_masks ? BigInt(0) : random_below(n);
      w.put(paillier::hom_add(pk_, lam, main.encrypt(r)).value);
      r1.push_back(r);
    }
  }
  for (const auto& c : next) {
    BigInt r = cfg_.zero_reveal_masks ? BigInt(0) : random_below(n);
    w.put(paillier::hom_add(pk_, c.enc_size, main.encrypt(r)).value);
    r2.push_back(r);
  }
  main.stream().send(MessageType::kRevealMasked, w.take());
  expect_ack(main.stream());
  for (auto& u : users_) {
    PayloadWriter mw;
    mw.put(static_cast<std::uint64_t>(cfg_.k)).put(static_cast<std::uint64_t>(l));
    mw.put_all(r1).put_all(r2);
    mw.put(static_cast<std::uint64_t>(report.iterations))
        .put(std::uint64_t{report.converged ? 1u : 0u});
    u.send(MessageType::kRevealMasks, mw.take());
  }
  report.reveal.online_ms = ms_since(start);
  report.reveal.ops = sample() - snap;

  for (auto* s : all) send_control(s->stream(), ControlOp::kShutdown);
  report.c1_total.exponentiations = counters_.exponentiations.load();
  report.c1_total.encryptions = counters_.encryptions.load();
  report.c1_total.decryptions = counters_.decryptions.load();
  report.c1_total.pool_misses = counters_.pool_misses.load();
  return report;
}

// ---------------------------------------------------------------------------
// C2

CloudC2::CloudC2(Mux& c1_mux, paillier::SecretKey sk, std::vector<Stream> users,
                 primitives::DecryptionLog* log)
    : c1_mux_(c1_mux), sk_(std::move(sk)), users_(std::move(users)), log_(log) {}

void CloudC2::run() {
  shares_ = collect_shares(users_, l_);
  primitives::C2Server server(
      c1_mux_, primitives::C2Context{&sk_, &counters_, log_},
      [this](Stream& s, const Frame& f, primitives::C2Responder& r) { return on_extra(s, f, r); });
  server.join();
}

bool CloudC2::on_extra(Stream& stream, const Frame& f, primitives::C2Responder& responder) {
  PayloadReader r(f.payload);
  const BigInt& n = sk_.public_key().n();
  if (f.type == MessageType::kControl) {
    if (r.get_u64() != static_cast<std::uint64_t>(ControlOp::kFetchShares)) return false;
    auto m = r.get_u64();
    auto l = r.get_u64();
    r.expect_end();
    if (m != shares_.size() || l != l_)
      throw IngestError("share count mismatch: C1 has " + std::to_string(m) + "x" +
                        std::to_string(l) + ", C2 has " + std::to_string(shares_.size()) + "x" +
                        std::to_string(l_));
    for (std::size_t i = 0; i < shares_.size(); ++i) {
      PayloadWriter w;
      w.put(static_cast<std::uint64_t>(i));
      for (const auto& sh : shares_[i]) w.put(responder.encrypt(mod(sh, n)).value);
      stream.send(MessageType::kEncForward, w.take());
    }
    return true;
  }
  if (f.type == MessageType::kRevealMasked) {
    auto k = r.get_u64();
    auto l = r.get_u64();
    std::vector<BigInt> plain;
    for (std::uint64_t i = 0; i < k * l + k; ++i)
      plain.push_back(responder.decrypt(responder.read_ciphertext(r), MessageType::kRevealMasked));
    r.expect_end();
    for (auto& u : users_) {
      PayloadWriter w;
      w.put(k).put(l).put_all(plain);
      u.send(MessageType::kRevealPlain, w.take());
    }
    send_control(stream, ControlOp::kAck);
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Users

UserResult run_user(std::uint64_t user_id, const std::vector<PlainRecord>& data,
                    const PublicKey& pk, Stream to_c1, Stream to_c2) {
  const std::size_t l = data.empty() ? 0 : data.front().dim();
  PayloadWriter w1, w2;
  for (auto* w : {&w1, &w2})
    w->put(user_id).put(static_cast<std::uint64_t>(data.size())).put(static_cast<std::uint64_t>(l));
  for (const auto& rec : data) {
    if (rec.dim() != l) throw IngestError("records of one user differ in length");
    auto sh = user_split(rec, pk);
    w1.put_all(sh.share1);
    w2.put_all(sh.share2);
  }
  to_c1.send(MessageType::kShareUpload, w1.take());
  to_c2.send(MessageType::kShareUpload, w2.take());

  Frame plain = to_c2.recv_expect(MessageType::kRevealPlain);
  Frame masks = to_c1.recv_expect(MessageType::kRevealMasks);
  PayloadReader rp(plain.payload);
  PayloadReader rm(masks.payload);
  auto k = rp.get_u64();
  auto dim = rp.get_u64();
  if (rm.get_u64() != k || rm.get_u64() != dim) throw IntegrityError("reveal shapes disagree");
  std::vector<BigInt> o, r1;
  for (std::uint64_t i = 0; i < k * dim; ++i) o.push_back(rp.get());
  for (std::uint64_t i = 0; i < k * dim; ++i) r1.push_back(rm.get());
  const BigInt& n = pk.n();
  UserResult out;
  std::vector<transforms::PlainCluster> clusters(k);
  for (std::uint64_t h = 0; h < k; ++h)
    for (std::uint64_t s = 0; s < dim; ++s)
      clusters[h].lambda.push_back(mod(o[h * dim + s] - r1[h * dim + s], n));
  for (std::uint64_t h = 0; h < k; ++h) {
    BigInt delta = rp.get();
    clusters[h].size = mod(delta - rm.get(), n);
  }
  out.iterations = static_cast<int>(rm.get_u64());
  out.converged = rm.get_u64() != 0;
  rp.expect_end();
  rm.expect_end();
  for (const auto& c : clusters) out.centers.push_back(transforms::cluster_center(c));
  return out;
}

// ---------------------------------------------------------------------------
// Single process

namespace {

struct Link {
  std::unique_ptr<Mux> a;
  std::unique_ptr<Mux> b;
};

Link make_link(transport::TrafficCounters* ca, transport::TrafficCounters* cb) {
  auto [x, y] = transport::make_inproc_pair();
  x->set_counters(ca);
  y->set_counters(cb);
  return {std::make_unique<Mux>(std::move(x)), std::make_unique<Mux>(std::move(y))};
}

MetricsSnapshot counters_snapshot(const paillier::Counters& c) {
  MetricsSnapshot s;
  s.exponentiations = c.exponentiations.load();
  s.encryptions = c.encryptions.load();
  s.decryptions = c.decryptions.load();
  s.pool_misses = c.pool_misses.load();
  return s;
}

}  // namespace

RunOutput run_all_in_one(const RunConfig& cfg, const paillier::KeyPair& keys,
                         const std::vector<std::vector<PlainRecord>>& user_data,
                         const RunHooks& hooks) {
  const std::size_t n_users = user_data.size();
  if (n_users == 0) throw ConfigError("at least one user required");

  // Sent-side counters only: every message is counted exactly once.
  transport::TrafficCounters c1_traffic, c2_traffic, user_traffic, sink;
  Link clouds = make_link(&c1_traffic, &c2_traffic);
  std::vector<Link> to_c1, to_c2;
  std::vector<Stream> c1_users, c2_users;
  for (std::size_t j = 0; j < n_users; ++j) {
    to_c1.push_back(make_link(&user_traffic, &c1_traffic));
    to_c2.push_back(make_link(&user_traffic, &c2_traffic));
    c1_users.push_back(to_c1.back().b->open_stream(kUserSession));
    c2_users.push_back(to_c2.back().b->open_stream(kUserSession));
  }

  auto close_all = [&] {
    clouds.a->close();
    clouds.b->close();
    for (auto& l : to_c1) l.a->close(), l.b->close();
    for (auto& l : to_c2) l.a->close(), l.b->close();
  };

  CloudC2 c2(*clouds.b, keys.sec, c2_users, hooks.log);
  std::exception_ptr c2_error;
  std::thread c2_thread([&] {
    try {
      c2.run();
    } catch (...) {
      c2_error = std::current_exception();
      clouds.b->close();
    }
  });

  std::vector<UserResult> results(n_users);
  std::vector<std::exception_ptr> user_errors(n_users);
  std::vector<std::thread> user_threads;
  for (std::size_t j = 0; j < n_users; ++j) {
    user_threads.emplace_back([&, j] {
      try {
        results[j] = run_user(j + 1, user_data[j], keys.pub,
                              to_c1[j].a->open_stream(kUserSession),
                              to_c2[j].a->open_stream(kUserSession));
      } catch (...) {
        user_errors[j] = std::current_exception();
        to_c1[j].a->close();
        to_c2[j].a->close();
      }
    });
  }

  CloudC1 c1(*clouds.a, keys.pub, cfg, c1_users);
  if (hooks.observer) c1.set_observer(hooks.observer);
  c1.set_metrics_sampler([&] {
    MetricsSnapshot s = counters_snapshot(c2.counters());
    s.messages = c1_traffic.messages_sent + c2_traffic.messages_sent + user_traffic.messages_sent;
    s.bytes = c1_traffic.bytes_sent + c2_traffic.bytes_sent + user_traffic.bytes_sent;
    return s;
  });

  RunOutput out;
  std::exception_ptr c1_error;
  try {
    out.report = c1.run();
  } catch (...) {
    c1_error = std::current_exception();
    close_all();
  }
  for (auto& t : user_threads) t.join();
  clouds.a->close();
  c2_thread.join();

  // Report the root cause: a channel abort is usually the echo of another
  // party's failure.
  auto is_abort = [](const std::exception_ptr& e) {
    try {
      std::rethrow_exception(e);
    } catch (const ProtocolAbort&) {
      return true;
    } catch (...) {
      return false;
    }
  };
  std::vector<std::exception_ptr> errors{c1_error, c2_error};
  errors.insert(errors.end(), user_errors.begin(), user_errors.end());
  for (const auto& e : errors)
    if (e && !is_abort(e)) std::rethrow_exception(e);
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  out.report.c1_total.messages = c1_traffic.messages_sent;
  out.report.c1_total.bytes = c1_traffic.bytes_sent;
  out.report.c2_total = counters_snapshot(c2.counters());
  out.report.c2_total.messages = c2_traffic.messages_sent;
  out.report.c2_total.bytes = c2_traffic.bytes_sent;
  out.users = std::move(results);
  return out;
}

RunOutput run_ppodc(const RunConfig& cfg, const std::vector<std::vector<PlainRecord>>& user_data,
                    const RunHooks& hooks) {
  std::size_t m = 0, l = 0;
  for (const auto& u : user_data) {
    m += u.size();
    if (!u.empty()) l = u.front().dim();
  }
  // Fail on sizing before generating keys or opening channels.
  plan_domain(cfg, m, l);
  auto keys = paillier::keygen(cfg.key_bits);
  return run_all_in_one(cfg, keys, user_data, hooks);
}

// ---------------------------------------------------------------------------
// TCP roles

namespace {

std::vector<std::uint8_t> hello_payload(std::uint64_t role, std::uint64_t user_id) {
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(ControlOp::kHello)).put(role).put(user_id);
  return w.take();
}

void raw_send(transport::Channel& ch, std::vector<std::uint8_t> payload) {
  Frame f;
  f.type = MessageType::kControl;
  f.session_id = kUserSession;
  f.payload = std::move(payload);
  ch.send(f);
}

PayloadReader raw_control(const Frame& f, ControlOp expected) {
  if (f.type != MessageType::kControl) throw IntegrityError("expected CONTROL during handshake");
  PayloadReader r(f.payload);
  auto op = r.get_u64();
  if (op == static_cast<std::uint64_t>(ControlOp::kError))
    throw IntegrityError("peer reported: " + r.get_string());
  if (op != static_cast<std::uint64_t>(expected)) throw IntegrityError("unexpected handshake");
  return r;
}

std::vector<std::uint8_t> public_key_payload(const PublicKey& pk) {
  PayloadWriter w;
  w.put(static_cast<std::uint64_t>(ControlOp::kPublicKey)).put(pk.n());
  return w.take();
}

PublicKey read_public_key_frame(transport::Channel& ch) {
  Frame f = ch.recv();
  auto r = raw_control(f, ControlOp::kPublicKey);
  return PublicKey(r.get());
}

}  // namespace

void run_c2_tcp(const transport::Endpoint& listen, const paillier::SecretKey& sk,
                std::size_t n_users) {
  transport::TcpListener listener(listen);
  std::unique_ptr<Mux> c1;
  std::map<std::uint64_t, std::unique_ptr<Mux>> users;
  while (!c1 || users.size() < n_users) {
    auto ch = listener.accept();
    Frame f = ch->recv();
    auto r = raw_control(f, ControlOp::kHello);
    auto role = r.get_u64();
    auto id = r.get_u64();
    raw_send(*ch, public_key_payload(sk.public_key()));
    if (role == kRoleC1 && !c1) {
      c1 = std::make_unique<Mux>(std::move(ch));
    } else if (role == kRoleUser && !users.count(id)) {
      users.emplace(id, std::make_unique<Mux>(std::move(ch)));
    } else {
      raw_send(*ch, transport::error_payload("unexpected or duplicate party"));
    }
  }
  std::vector<Stream> streams;
  for (auto& [id, mux] : users) streams.push_back(mux->open_stream(kUserSession));
  CloudC2 c2(*c1, sk, streams);
  c2.run();
}

RunReport run_c1_tcp(const transport::Endpoint& listen_users, const transport::Endpoint& c2,
                     const RunConfig& cfg, std::size_t n_users) {
  // Every frame C1 sends or receives; C2's own sends are not visible here.
  transport::TrafficCounters traffic;
  auto c2_ch = transport::tcp_connect(c2);
  raw_send(*c2_ch, hello_payload(kRoleC1, 0));
  PublicKey pk = read_public_key_frame(*c2_ch);
  c2_ch->set_counters(&traffic);
  auto c2_mux = std::make_unique<Mux>(std::move(c2_ch));

  transport::TcpListener listener(listen_users);
  std::map<std::uint64_t, std::unique_ptr<Mux>> users;
  while (users.size() < n_users) {
    auto ch = listener.accept();
    Frame f = ch->recv();
    auto r = raw_control(f, ControlOp::kHello);
    if (r.get_u64() != kRoleUser) throw IntegrityError("only users connect to C1");
    auto id = r.get_u64();
    raw_send(*ch, transport::control_payload(ControlOp::kAck));
    ch->set_counters(&traffic);
    users.emplace(id, std::make_unique<Mux>(std::move(ch)));
  }
  std::vector<Stream> streams;
  for (auto& [id, mux] : users) streams.push_back(mux->open_stream(kUserSession));
  CloudC1 c1(*c2_mux, pk, cfg, streams);
  c1.set_metrics_sampler([&traffic] {
    MetricsSnapshot s;
    s.messages = traffic.messages_sent + traffic.messages_received;
    s.bytes = traffic.bytes_sent + traffic.bytes_received;
    return s;
  });
  auto report = c1.run();
  report.c1_total.messages = traffic.messages_sent;
  report.c1_total.bytes = traffic.bytes_sent;
  c2_mux->close();
  return report;
}

UserResult run_user_tcp(std::uint64_t user_id, const std::vector<PlainRecord>& data,
                        const transport::Endpoint& c1, const transport::Endpoint& c2) {
  auto c1_ch = transport::tcp_connect(c1);
  raw_send(*c1_ch, hello_payload(kRoleUser, user_id));
  raw_control(c1_ch->recv(), ControlOp::kAck);
  auto c2_ch = transport::tcp_connect(c2);
  raw_send(*c2_ch, hello_payload(kRoleUser, user_id));
  PublicKey pk = read_public_key_frame(*c2_ch);
  Mux c1_mux(std::move(c1_ch));
  Mux c2_mux(std::move(c2_ch));
  return run_user(user_id, data, pk, c1_mux.open_stream(kUserSession),
                  c2_mux.open_stream(kUserSession));
}

}  // namespace ppodc::protocol

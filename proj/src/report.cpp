#include <json.hpp>

#include "ppodc/protocol.hpp"

namespace ppodc::protocol {

namespace {

nlohmann::json ops_json(const MetricsSnapshot& s) {
  return {{"exponentiations", s.exponentiations}, {"encryptions", s.encryptions},
          {"decryptions", s.decryptions},         {"pool_misses", s.pool_misses},
          {"messages", s.messages},               {"bytes", s.bytes}};
}

nlohmann::json stage_json(const StageMetrics& s) {
  return {{"online_ms", s.online_ms}, {"offline_ms", s.offline_ms}, {"ops", ops_json(s.ops)}};
}

}  // namespace

std::string report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["m"] = r.m;
  j["k"] = r.k;
  j["l"] = r.l;
  j["key_bits"] = r.key_bits;
  j["ell_assign"] = r.ell_assign;
  j["ell_term"] = r.ell_term;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["stages"] = {{"stage1", stage_json(r.stage1)},
                 {"stage2", stage_json(r.stage2)},
                 {"stage3", stage_json(r.stage3)},
                 {"reveal", stage_json(r.reveal)}};
  j["stage2_iteration_ms"] = r.stage2_iteration_ms;
  j["empty_clusters_retained"] = r.empty_clusters_retained;
  j["c1"] = ops_json(r.c1_total);
  j["c2"] = ops_json(r.c2_total);
  return j.dump(2);
}

}  // namespace ppodc::protocol

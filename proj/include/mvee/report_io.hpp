#pragma once

#include <string>

#include <json.hpp>

#include "mvee/harness.hpp"
#include "mvee/syncid.hpp"

namespace mvee {

using nlohmann::json;

inline json to_json(const DivergenceReport& d) {
    return json{{"replica", d.replica},       {"thread", d.thread},
                {"event_index", d.event_index}, {"field", d.field},
                {"master_value", d.master_value}, {"deviant_value", d.deviant_value}};
}

inline json to_json(const ReplicaStats& s) {
    return json{{"steps", s.steps},
                {"sync_ops", s.sync_ops},
                {"recorded", s.recorded},
                {"replayed", s.replayed},
                {"replay_stalls", s.replay_stalls},
                {"publish_stalls", s.publish_stalls},
                {"futex_waits", s.futex_waits},
                {"futex_wakes", s.futex_wakes},
                {"rvps", s.rvps},
                {"plain_ops", s.plain_ops}};
}

inline json to_json(const TrialReport& t) {
    json j{{"workload", t.workload},
           {"strategy", strategy_name(t.strategy)},
           {"replicas", t.replicas},
           {"threads", t.threads},
           {"seed", t.seed},
           {"outcome", outcome_name(t.outcome)},
           {"equivalent", t.equivalent()},
           {"total_steps", t.total_steps},
           {"wall_seconds", t.wall_seconds}};
    if (!t.detail.empty()) j["detail"] = t.detail;
    if (!t.audit_failure.empty()) j["audit_failure"] = t.audit_failure;
    if (t.divergence) j["divergence"] = to_json(*t.divergence);
    json stats = json::array();
    for (const auto& s : t.stats) stats.push_back(to_json(s));
    j["stats"] = stats;
    return j;
}

inline json to_json(const BenchRow& r) {
    return json{{"workload", r.workload},
                {"strategy", strategy_name(r.strategy)},
                {"threads", r.threads},
                {"replicas", r.replicas},
                {"median_wall_seconds", r.median_wall},
                {"native_wall_seconds", r.native_wall},
                {"overhead", r.overhead},
                {"master_sync_ops", r.master_sync_ops},
                {"slave_stalls", r.slave_stalls}};
}

inline json to_json(const BenchReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.rows) rows.push_back(to_json(r));
    return json{{"rows", rows}};
}

inline std::string bench_csv(const BenchReport& rep) {
    std::string out =
        "workload,strategy,threads,replicas,median_wall_seconds,native_wall_seconds,overhead,"
        "master_sync_ops,slave_stalls\n";
    for (const auto& r : rep.rows) {
        out += r.workload;
        out += ',';
        out += strategy_name(r.strategy);
        out += ',' + std::to_string(r.threads) + ',' + std::to_string(r.replicas) + ',' +
               std::to_string(r.median_wall) + ',' + std::to_string(r.native_wall) + ',' +
               std::to_string(r.overhead) + ',' + std::to_string(r.master_sync_ops) + ',' +
               std::to_string(r.slave_stalls) + '\n';
    }
    return out;
}

inline std::string trials_csv(const std::vector<TrialReport>& trials) {
    std::string out = "workload,strategy,replicas,threads,seed,outcome,equivalent,steps,wall\n";
    for (const auto& t : trials) {
        out += t.workload;
        out += ',';
        out += strategy_name(t.strategy);
        out += ',' + std::to_string(t.replicas) + ',' + std::to_string(t.threads) + ',' +
               std::to_string(t.seed) + ',' + outcome_name(t.outcome) + ',' +
               (t.equivalent() ? "1" : "0") + ',' + std::to_string(t.total_steps) + ',' +
               std::to_string(t.wall_seconds) + '\n';
    }
    return out;
}

inline json to_json(const syncid::ClassifyResult& res, const std::vector<syncid::Instr>& instrs,
                    const syncid::WrapPlan& plan) {
    json classified = json::array();
    for (const auto& [i, cls] : res.classes) {
        classified.push_back(json{{"index", i},
                                  {"address", instrs[i].address},
                                  {"mnemonic", instrs[i].mnemonic},
                                  {"class", syncid::sync_class_name(cls)}});
    }
    json entries = json::array();
    for (const auto& e : plan.entries) {
        entries.push_back(json{{"file", e.file},
                               {"line", e.line},
                               {"class", syncid::sync_class_name(e.cls)},
                               {"action", syncid::wrap_action_name(e.action)},
                               {"address", e.address}});
    }
    return json{{"sync_ops", classified},
                {"wrap_plan", entries},
                {"manual_review", plan.manual_review},
                {"counts",
                 json{{"wrap_targets", plan.entries.size() + plan.manual_review.size()},
                      {"strong_determinism_memory_ops", res.memory_op_count},
                      {"weak_determinism_sync_ops", res.weak_sync_count}}}};
}

}  // namespace mvee

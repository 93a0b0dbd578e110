#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

#include "jsqlab/experiments.hpp"
#include "jsqlab/network.hpp"
#include "jsqlab/sha256.hpp"

namespace jsqlab {

using json = nlohmann::json;

// Config schema (version 1).  Queue indices in files are 1-based and selection
// sets are sorted arrays; distributions are {"kind": ..., params...}.

inline json to_json(const Distribution& d) {
    json j;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                j = {{"kind", "exponential"}, {"rate", v.rate}};
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                j = {{"kind", "deterministic"}, {"value", v.value}};
            } else if constexpr (std::is_same_v<T, UniformInterval>) {
                j = {{"kind", "uniform"}, {"a", v.a}, {"b", v.b}};
            } else if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                j = {{"kind", "discrete"}, {"masses", v.masses}};
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                j = {{"kind", "hyperexponential"}, {"components", v.components}};
            } else if constexpr (std::is_same_v<T, Pareto>) {
                j = {{"kind", "pareto"}, {"shape", v.shape}, {"scale", v.scale}};
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                j = {{"kind", "lognormal"}, {"location", v.location}, {"scale", v.scale}};
            }
        },
        d.variant());
    return j;
}

inline Distribution distribution_from_json(const json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "exponential") return Distribution::exponential(j.at("rate").get<double>());
    if (kind == "deterministic") return Distribution::deterministic(j.at("value").get<double>());
    if (kind == "uniform")
        return Distribution::uniform(j.at("a").get<double>(), j.at("b").get<double>());
    if (kind == "discrete")
        return Distribution::discrete(
            j.at("masses").get<std::vector<std::pair<double, double>>>());
    if (kind == "hyperexponential")
        return Distribution::hyperexponential(
            j.at("components").get<std::vector<std::pair<double, double>>>());
    if (kind == "pareto")
        return Distribution::pareto(j.at("shape").get<double>(), j.at("scale").get<double>());
    if (kind == "lognormal")
        return Distribution::lognormal(j.at("location").get<double>(),
                                       j.at("scale").get<double>());
    throw std::invalid_argument("unknown distribution kind: " + kind);
}

inline json set_to_json(const QueueSet& s) {
    json arr = json::array();
    for (int n : s) arr.push_back(n + 1);
    return arr;
}

inline QueueSet set_from_json(const json& j) {
    QueueSet s;
    for (auto& v : j) s.push_back(v.get<int>() - 1);
    std::sort(s.begin(), s.end());
    return s;
}

inline json to_json(const SelectionRule& r) {
    json j;
    if (auto* ex = std::get_if<ExplicitRule>(&r.v)) {
        j["kind"] = "explicit";
        json sets = json::array();
        for (auto& [s, p] : ex->sets) sets.push_back({{"queues", set_to_json(s)}, {"prob", p}});
        j["sets"] = sets;
    } else if (auto* mf = std::get_if<MeanFieldChoose>(&r.v)) {
        j = {{"kind", "mean_field"}, {"d", mf->d}};
    } else if (auto* mr = std::get_if<MeanFieldWithReplacement>(&r.v)) {
        j = {{"kind", "mean_field_replacement"}, {"d", mr->d}};
    } else {
        j = {{"kind", "circle"}, {"radius", std::get<CircleNeighborhood>(r.v).radius}};
    }
    return j;
}

inline SelectionRule selection_from_json(const json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "explicit") {
        ExplicitRule ex;
        for (auto& e : j.at("sets"))
            ex.sets.emplace_back(set_from_json(e.at("queues")), e.at("prob").get<double>());
        return SelectionRule{std::move(ex)};
    }
    if (kind == "mean_field") return SelectionRule{MeanFieldChoose{j.at("d").get<int>()}};
    if (kind == "mean_field_replacement")
        return SelectionRule{MeanFieldWithReplacement{j.at("d").get<int>()}};
    if (kind == "circle") return SelectionRule{CircleNeighborhood{j.at("radius").get<int>()}};
    throw std::invalid_argument("unknown selection rule kind: " + kind);
}

inline const char* discipline_name(DisciplineKind d) {
    switch (d) {
        case DisciplineKind::Fifo: return "fifo";
        case DisciplineKind::LifoPreemptive: return "lifo";
        case DisciplineKind::ProcessorSharing: return "ps";
        case DisciplineKind::DesignatedQueue: return "designated_queue";
        case DisciplineKind::PriorityShortestResidual: return "priority_shortest";
        case DisciplineKind::PriorityLongestResidual: return "priority_longest";
    }
    return "fifo";
}

inline DisciplineKind discipline_from_name(const std::string& s) {
    if (s == "fifo") return DisciplineKind::Fifo;
    if (s == "lifo") return DisciplineKind::LifoPreemptive;
    if (s == "ps") return DisciplineKind::ProcessorSharing;
    if (s == "designated_queue") return DisciplineKind::DesignatedQueue;
    if (s == "priority_shortest") return DisciplineKind::PriorityShortestResidual;
    if (s == "priority_longest") return DisciplineKind::PriorityLongestResidual;
    throw std::invalid_argument("unknown discipline: " + s);
}

inline const char* assignment_name(AssignmentKind a) {
    switch (a) {
        case AssignmentKind::Jsq: return "jsq";
        case AssignmentKind::Jllq: return "jllq";
        case AssignmentKind::RandomD1: return "random_d1";
        case AssignmentKind::JsqHandicap: return "jsq_handicap";
    }
    return "jsq";
}

inline AssignmentKind assignment_from_name(const std::string& s) {
    if (s == "jsq") return AssignmentKind::Jsq;
    if (s == "jllq") return AssignmentKind::Jllq;
    if (s == "random_d1") return AssignmentKind::RandomD1;
    if (s == "jsq_handicap") return AssignmentKind::JsqHandicap;
    throw std::invalid_argument("unknown assignment rule: " + s);
}

inline json to_json(const NetworkSpec& spec) {
    json j;
    j["version"] = 1;
    j["queues"] = spec.N;
    json streams = json::array();
    for (int k = 0; k < spec.K; ++k)
        streams.push_back({{"interarrival", to_json(spec.interarrival[k])},
                           {"selection", to_json(spec.selection[k])}});
    j["streams"] = streams;
    json service;
    if (auto* ci = std::get_if<ClassIndependent>(&spec.service)) {
        service["mode"] = "class_independent";
        json per_queue = json::array();
        for (auto& d : ci->per_queue) per_queue.push_back(to_json(d));
        service["per_queue"] = per_queue;
    } else {
        auto& si = std::get<StationIndependent>(spec.service);
        service["mode"] = "station_independent";
        json per_stream = json::array();
        for (auto& d : si.per_stream) per_stream.push_back(to_json(d));
        service["per_stream"] = per_stream;
        json overrides = json::array();
        for (auto& ov : si.overrides)
            overrides.push_back({{"stream", ov.stream + 1},
                                 {"queues", set_to_json(ov.set)},
                                 {"dist", to_json(ov.dist)}});
        if (!overrides.empty()) service["overrides"] = overrides;
    }
    j["service"] = service;
    j["discipline"] = discipline_name(spec.discipline);
    j["assignment"] = assignment_name(spec.assignment);
    if (spec.assignment == AssignmentKind::JsqHandicap) j["kappa"] = spec.handicap_kappa;
    j["tie_break"] = spec.tie_break == TieBreak::MinIndex ? "min_index" : "uniform";
    return j;
}

inline NetworkSpec network_from_json(const json& j) {
    if (j.value("version", 1) != 1) throw std::invalid_argument("unsupported config version");
    NetworkSpec spec;
    spec.N = j.at("queues").get<int>();
    for (auto& s : j.at("streams")) {
        spec.interarrival.push_back(distribution_from_json(s.at("interarrival")));
        spec.selection.push_back(selection_from_json(s.at("selection")));
    }
    spec.K = (int)spec.interarrival.size();
    auto& service = j.at("service");
    std::string mode = service.at("mode").get<std::string>();
    if (mode == "class_independent") {
        ClassIndependent ci;
        for (auto& d : service.at("per_queue")) ci.per_queue.push_back(distribution_from_json(d));
        spec.service = std::move(ci);
    } else if (mode == "station_independent") {
        StationIndependent si;
        for (auto& d : service.at("per_stream"))
            si.per_stream.push_back(distribution_from_json(d));
        if (service.contains("overrides"))
            for (auto& ov : service.at("overrides"))
                si.overrides.push_back({ov.at("stream").get<int>() - 1,
                                        set_from_json(ov.at("queues")),
                                        distribution_from_json(ov.at("dist"))});
        spec.service = std::move(si);
    } else {
        throw std::invalid_argument("unknown service mode: " + mode);
    }
    spec.discipline = discipline_from_name(j.value("discipline", "fifo"));
    spec.assignment = assignment_from_name(j.value("assignment", "jsq"));
    spec.handicap_kappa = j.value("kappa", 0);
    spec.tie_break =
        j.value("tie_break", "uniform") == "min_index" ? TieBreak::MinIndex : TieBreak::UniformRandom;
    spec.validate();
    return spec;
}

inline bool spec_equal(const NetworkSpec& a, const NetworkSpec& b) {
    return to_json(a) == to_json(b);
}

// canonical form: sorted keys, shortest round-trip doubles (nlohmann default)
inline std::string canonical_config(const json& j) { return j.dump(); }

inline std::string spec_hash(const NetworkSpec& spec) {
    return Sha256::of(canonical_config(to_json(spec)));
}

inline json to_json(const LargeWorkloadParams& p) {
    return {{"section7",
             {{"gamma0", p.gamma0},
              {"eta", p.eta},
              {"h2", p.h2},
              {"depth", p.depth},
              {"epsilon", p.epsilon},
              {"strict", p.strict}}}};
}

inline LargeWorkloadParams large_workload_params_from_json(const json& j) {
    const json& s = j.at("section7");
    LargeWorkloadParams p;
    p.gamma0 = s.at("gamma0").get<double>();
    p.eta = s.at("eta").get<double>();
    p.h2 = s.at("h2").get<long>();
    p.depth = s.value("depth", 4);
    p.epsilon = s.at("epsilon").get<double>();
    p.strict = s.value("strict", true);
    return p;
}

// fixed 17-significant-digit rendering for bytewise-stable artifacts
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace jsqlab

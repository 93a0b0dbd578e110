// jsqlab command-line driver: configuration ingestion, experiment
// orchestration and result emission.
//
// Exit codes: 0 success, 1 failed validation, 2 configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "jsqlab/config.hpp"
#include "jsqlab/experiments.hpp"

namespace fs = std::filesystem;
using namespace jsqlab;

namespace {

#ifndef JSQLAB_VERSION
#define JSQLAB_VERSION "unversioned"
#endif

struct Options {
    std::string config_path;
    std::uint64_t seed = 1;
    double horizon = 10000;
    double burn_in = -1;
    int reps = 16;
    std::string out_dir;
    int threads = 0;  // 0: take JSQLAB_THREADS, else 1
    std::string format = "csv";
};

int effective_threads(const Options& opt) {
    if (opt.threads > 0) return opt.threads;
    if (const char* env = std::getenv("JSQLAB_THREADS")) {
        int t = std::atoi(env);
        if (t > 0) return t;
    }
    return 1;
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return json::parse(in);  // parse errors carry line/byte diagnostics
}

std::string run_meta(const Options& opt, const std::string& hash) {
    std::ostringstream os;
    os << "jsqlab " << JSQLAB_VERSION << " spec_hash=" << hash << " seed=" << opt.seed
       << " horizon=" << fmt_double(opt.horizon) << " burn_in=" << fmt_double(opt.burn_in)
       << " reps=" << opt.reps << " threads=" << effective_threads(opt);
    return os.str();
}

void write_file(const Options& opt, const std::string& name, const std::string& body) {
    if (opt.out_dir.empty()) return;
    fs::create_directories(opt.out_dir);
    std::ofstream out(fs::path(opt.out_dir) / name, std::ios::binary);
    out << body;
}

// result rows rendered as CSV (default) or JSONL per --format
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void row(std::vector<std::string> values) { rows.push_back(std::move(values)); }
};

std::string render_table(const Table& t, const Options& opt, const std::string& meta) {
    std::ostringstream os;
    if (opt.format == "jsonl") {
        os << "{\"meta\":" << json(meta).dump() << "}\n";
        for (auto& r : t.rows) {
            os << "{";
            for (std::size_t c = 0; c < t.columns.size(); ++c)
                os << (c ? "," : "") << json(t.columns[c]).dump() << ":" << json(r[c]).dump();
            os << "}\n";
        }
        return os.str();
    }
    os << "# " << meta << "\n";
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
    os << "\n";
    for (auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
        os << "\n";
    }
    return os.str();
}

void write_table(const Options& opt, const std::string& basename, const Table& t,
                 const std::string& meta) {
    write_file(opt, basename + (opt.format == "jsonl" ? ".jsonl" : ".csv"),
               render_table(t, opt, meta));
}

std::string event_to_jsonl(const EventRecord& rec) {
    std::ostringstream os;
    os << "{\"seq\":" << rec.seq << ",\"t\":" << fmt_double(rec.t) << ",\"kind\":\""
       << (rec.kind == EventKind::Arrival ? "arrival" : "departure")
       << "\",\"k_or_job\":" << rec.stream_or_job << ",\"queue\":" << rec.queue + 1;
    if (rec.kind == EventKind::Arrival) {
        os << ",\"sel\":[";
        for (std::size_t i = 0; i < rec.selection.size(); ++i)
            os << (i ? "," : "") << rec.selection[i] + 1;
        os << "]";
    }
    os << ",\"z\":[";
    for (std::size_t i = 0; i < rec.z.size(); ++i) os << (i ? "," : "") << rec.z[i];
    os << "]}\n";
    return os.str();
}

int cmd_validate(const Options& opt, const json& cfg) {
    NetworkSpec spec = network_from_json(cfg);
    std::string hash = spec_hash(spec);
    auto ti = traffic_intensity(spec);
    bool subcritical = ti.rho < 1.0 - 1e-12;
    auto bound = check_arrival_bound(spec, 1.0);

    Table t;
    t.columns = {"key", "value"};
    t.row({"rho", fmt_double(ti.rho)});
    t.row({"mode", "rho" + std::to_string(ti.mode)});
    t.row({"subcritical", subcritical ? "1" : "0"});
    t.row({"arrival_bound_supported", bound.supported ? "1" : "0"});
    t.row({"arrival_bound_gamma", std::to_string(bound.gamma)});
    t.row({"arrival_bound_h1", fmt_double(bound.supported ? bound.h(1.0) : 0.0)});

    std::printf("spec_hash %s\n", hash.c_str());
    std::printf("traffic intensity rho%d = %.12g (%s)\n", ti.mode, ti.rho,
                ti.closed_form ? "symmetric closed form" : "subset enumeration");
    std::printf("subcritical: %s\n", subcritical ? "yes" : "no");
    std::printf("arrival bound: %s (Gamma=%d, h(1)=%.6g)%s\n",
                bound.supported ? "supported" : "unsupported", bound.gamma,
                bound.supported ? bound.h(1.0) : 0.0,
                bound.note.empty() ? "" : ("; " + bound.note).c_str());
    if (subcritical) {
        auto table = solve_routing(spec);
        double max_excess = 0;
        for (double r : table.residual) max_excess = std::max(max_excess, -r);
        t.row({"routing_max_excess", fmt_double(max_excess)});
        t.row({"routing_potential", fmt_double(table.v_terminal)});
        std::printf("routing: feasible, max per-queue excess %.3g, potential %.6g\n", max_excess,
                    table.v_terminal);
    } else {
        std::printf("routing: skipped, not subcritical\n");
    }
    write_table(opt, "validate", t, run_meta(opt, hash));
    return subcritical ? 0 : 1;
}

int cmd_simulate(const Options& opt, const json& cfg) {
    NetworkSpec spec = network_from_json(cfg);
    std::string hash = spec_hash(spec);

    // norm traces need the Lyapunov parameters, which exist only for
    // subcritical networks
    std::optional<LyapunovParams> params;
    try {
        params.emplace(build_params(spec));
    } catch (const std::exception&) {
        params.reset();
    }
    Table trace;
    trace.columns = {"time", "L", "R", "A", "total"};
    for (int n = 0; n < spec.N; ++n) trace.columns.push_back("L_q" + std::to_string(n + 1));
    for (int n = 0; n < spec.N; ++n) trace.columns.push_back("R_q" + std::to_string(n + 1));

    std::ostringstream events;
    RunHooks hooks;
    hooks.on_event = [&](SimState&, const EventRecord& rec) {
        if (!opt.out_dir.empty()) events << event_to_jsonl(rec);
    };
    if (params && !opt.out_dir.empty()) {
        hooks.grid_dt = opt.horizon / 256.0;
        hooks.on_grid = [&](SimState& st, double time) {
            auto nb = norm(snapshot(st, spec), *params);
            std::vector<std::string> row{fmt_double(time), fmt_double(nb.L), fmt_double(nb.R),
                                         fmt_double(nb.A), fmt_double(nb.total)};
            for (double v : nb.per_queue_L) row.push_back(fmt_double(v));
            for (double v : nb.per_queue_R) row.push_back(fmt_double(v));
            trace.row(std::move(row));
        };
    }
    RunConfig rc;
    rc.horizon = opt.horizon;
    rc.seed = opt.seed;
    rc.record_z = true;
    auto res = run(spec, rc, hooks);

    Table metrics;
    metrics.columns = {"queue", "mean_z", "mean_workload"};
    for (int n = 0; n < spec.N; ++n)
        metrics.row({std::to_string(n + 1), fmt_double(res.metrics.mean_z[n]),
                     fmt_double(res.metrics.mean_workload[n])});
    metrics.row({"total", "", fmt_double(res.metrics.mean_total_workload)});

    write_file(opt, "events.jsonl", events.str());
    write_table(opt, "metrics", metrics, run_meta(opt, hash));
    if (params && !opt.out_dir.empty()) write_table(opt, "norm_trace", trace, run_meta(opt, hash));
    std::printf("simulated %llu events to t=%.6g (%llu arrivals, %llu departures)\n",
                (unsigned long long)res.metrics.events, opt.horizon,
                (unsigned long long)res.metrics.arrivals,
                (unsigned long long)res.metrics.departures);
    return 0;
}

int cmd_tails(const Options& opt, const json& cfg) {
    NetworkSpec spec = network_from_json(cfg);
    std::string hash = spec_hash(spec);
    TailConfig tc;
    tc.horizon = opt.horizon;
    tc.burn_in = opt.burn_in;
    tc.seed = opt.seed;
    if (cfg.contains("z_levels")) tc.z_levels = cfg.at("z_levels").get<std::vector<int>>();
    if (cfg.contains("workload_levels"))
        tc.workload_levels = cfg.at("workload_levels").get<std::vector<double>>();
    if (cfg.contains("age_levels"))
        tc.age_levels = cfg.at("age_levels").get<std::vector<double>>();
    if (cfg.contains("s_levels")) tc.s_levels = cfg.at("s_levels").get<std::vector<double>>();
    if (cfg.contains("queue")) tc.queue = cfg.at("queue").get<int>() - 1;
    auto est = estimate_tail(spec, tc);

    Table t;
    t.columns = {"kind", "level", "estimate", "ci_half"};
    for (std::size_t l = 0; l < est.z_levels.size(); ++l)
        t.row({"z", std::to_string(est.z_levels[l]), fmt_double(est.z_tail[l].value),
               fmt_double(est.z_tail[l].ci_half)});
    for (std::size_t l = 0; l < est.workload_levels.size(); ++l)
        t.row({"workload", fmt_double(est.workload_levels[l]),
               fmt_double(est.workload_tail[l].value), fmt_double(est.workload_tail[l].ci_half)});
    for (std::size_t l = 0; l < est.age_levels.size(); ++l)
        t.row({"age", fmt_double(est.age_levels[l]), fmt_double(est.age_tail[l].value),
               fmt_double(est.age_tail[l].ci_half)});
    for (std::size_t l = 0; l < est.s_levels.size(); ++l)
        t.row({"s", fmt_double(est.s_levels[l]), fmt_double(est.s_tail[l].value),
               fmt_double(est.s_tail[l].ci_half)});
    write_table(opt, "tails", t, run_meta(opt, hash));
    for (std::size_t l = 0; l < est.z_levels.size(); ++l)
        std::printf("P(Z > %d) = %.5f +- %.5f\n", est.z_levels[l], est.z_tail[l].value,
                    est.z_tail[l].ci_half);
    return 0;
}

int cmd_drift_audit(const Options& opt, const json& cfg) {
    NetworkSpec spec = network_from_json(cfg);
    std::string hash = spec_hash(spec);
    auto params = build_params(spec);
    DriftAuditConfig dc;
    dc.seed = opt.seed;
    dc.horizon = opt.horizon;
    dc.growth_reps = opt.reps;
    if (cfg.contains("mc_budget")) dc.mc_budget = cfg.at("mc_budget").get<long>();
    auto rep = drift_audit(spec, params, dc);

    Table t;
    t.columns = {"key", "value"};
    t.row({"flow_checked", std::to_string(rep.flow_checked)});
    t.row({"flow_violations", std::to_string(rep.flow_violations.size())});
    t.row({"jump_checked", std::to_string(rep.jump_checked)});
    t.row({"jump_violations", std::to_string(rep.jump_violations.size())});
    t.row({"jump_exact", rep.jump_exact ? "1" : "0"});
    t.row({"growth_rate", fmt_double(rep.growth_rate.value)});
    t.row({"growth_upper_95", fmt_double(rep.growth_upper)});
    t.row({"c2", fmt_double(rep.c2)});
    write_table(opt, "drift_audit", t, run_meta(opt, hash));

    // violating states, if any, go to a separate artifact
    if (!rep.flow_violations.empty() || !rep.jump_violations.empty()) {
        Table v;
        v.columns = {"what", "t", "margin", "jobs", "s"};
        auto add = [&](const DriftViolation& dv) {
            std::ostringstream s;
            for (std::size_t k = 0; k < dv.state.s.size(); ++k)
                s << (k ? " " : "") << fmt_double(dv.state.s[k]);
            v.row({dv.what, fmt_double(dv.t), fmt_double(dv.margin),
                   std::to_string(dv.state.jobs.size()), s.str()});
        };
        for (auto& dv : rep.flow_violations) add(dv);
        for (auto& dv : rep.jump_violations) add(dv);
        write_table(opt, "drift_violations", v, run_meta(opt, hash));
    }
    std::printf("flow: %ld checked, %zu violations\n", rep.flow_checked,
                rep.flow_violations.size());
    std::printf("jumps: %ld checked, %zu violations (%s)\n", rep.jump_checked,
                rep.jump_violations.size(), rep.jump_exact ? "exact" : "monte carlo");
    std::printf("growth over [0,%g]: %.4f (95%% upper %.4f) vs C2=%.4f\n", dc.growth_t,
                rep.growth_rate.value, rep.growth_upper, rep.c2);
    return rep.ok() ? 0 : 1;
}

int cmd_routing(const Options& opt, const json& cfg) {
    NetworkSpec spec = network_from_json(cfg);
    std::string hash = spec_hash(spec);
    auto table = solve_routing(spec);
    Table t;
    t.columns = {"k", "A", "n", "q"};
    std::vector<RoutingFlow> flows = table.flows;
    if (flows.empty() && table.uniform_symmetric) {
        // synthesize uniform rows on demand
        for (int k = 0; k < spec.K; ++k)
            for (auto& [s, p] : enumerate_selection_sets(spec.selection[k], k, spec.N))
                if (p > 0) {
                    RoutingFlow f;
                    f.k = k;
                    f.set = s;
                    f.q.assign(s.size(), 1.0 / s.size());
                    flows.push_back(std::move(f));
                }
    }
    for (auto& f : flows)
        for (std::size_t i = 0; i < f.set.size(); ++i)
            t.row({std::to_string(f.k + 1), std::to_string(set_to_mask(f.set)),
                   std::to_string(f.set[i] + 1), fmt_double(f.q[i])});
    write_table(opt, "routing", t, run_meta(opt, hash));

    Table loads;
    loads.columns = {"queue", "load", "residual"};
    for (int n = 0; n < spec.N; ++n)
        loads.row({std::to_string(n + 1), fmt_double(table.load[n]),
                   fmt_double(table.residual[n])});
    write_table(opt, "routing_loads", loads, run_meta(opt, hash));
    double max_excess = 0;
    for (double r : table.residual) max_excess = std::max(max_excess, -r);
    std::printf("rho%d = %.10g, max excess %.3g, potential %.6g, %s\n", table.mode, table.rho,
                max_excess, table.v_terminal,
                table.uniform_symmetric ? "uniform (symmetric)" : "solved");
    return 0;
}

int cmd_section7(const Options& opt, const json& cfg) {
    LargeWorkloadParams p = large_workload_params_from_json(cfg);
    try {
        auto net = build_large_workload_member(p);
        std::string hash = net.spec ? spec_hash(*net.spec) : Sha256::of(to_json(p).dump());
        Table t;
        t.columns = {"key", "value"};
        t.row({"rho", fmt_double(net.report.rho)});
        t.row({"rho_bound", fmt_double(net.report.rho_bound)});
        t.row({"rho_ok", net.report.rho_ok ? "1" : "0"});
        t.row({"eps_bound", fmt_double(net.report.eps_bound)});
        t.row({"eps_ok", net.report.eps_ok ? "1" : "0"});
        t.row({"delta", fmt_double(net.report.delta)});
        t.row({"k_eps", fmt_double(net.report.k_eps)});
        t.row({"simulatable", net.report.simulatable ? "1" : "0"});
        t.row({"materializable", net.report.materializable ? "1" : "0"});
        for (std::size_t i = 0; i < net.report.log_h.size(); ++i)
            t.row({"log_h" + std::to_string(i), fmt_double(net.report.log_h[i])});
        write_table(opt, "section7", t, run_meta(opt, hash));
        std::printf("rho = %.6f (bound %.6f, %s), epsilon bound %.3g (%s), K_eps = %.6g\n",
                    net.report.rho, net.report.rho_bound, net.report.rho_ok ? "ok" : "violated",
                    net.report.eps_bound, net.report.eps_ok ? "ok" : "violated",
                    net.report.k_eps);
        if (!net.report.simulatable)
            std::printf("strict family member: validation only, event rates are not "
                        "desk-simulable\n");
        if (!opt.out_dir.empty() && net.spec) {
            std::ofstream spec_out(fs::path(opt.out_dir) / "section7_network.json");
            spec_out << to_json(*net.spec).dump(2) << "\n";
        }
        return net.report.violations.empty() ? 0 : 1;
    } catch (const StrictViolation& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}

int cmd_compare(const Options& opt, const json& cfg) {
    auto parse_side = [&](const json& side) -> NetworkSpec {
        if (side.contains("section7")) {
            auto net = build_large_workload_member(large_workload_params_from_json(side));
            if (!net.spec)
                throw std::invalid_argument("section7 member is not desk-materializable");
            NetworkSpec spec = *net.spec;
            if (side.contains("discipline"))
                spec.discipline = discipline_from_name(side.at("discipline").get<std::string>());
            if (side.contains("assignment"))
                spec.assignment = assignment_from_name(side.at("assignment").get<std::string>());
            return spec;
        }
        return network_from_json(side);
    };
    NetworkSpec a = parse_side(cfg.at("a"));
    NetworkSpec b = parse_side(cfg.at("b"));
    CompareConfig cc;
    cc.horizon = opt.horizon;
    cc.burn_in = opt.burn_in;
    cc.reps = opt.reps;
    cc.seed = opt.seed;
    cc.threads = effective_threads(opt);
    cc.stationarity_guard = cfg.value("guard", true);
    auto cmp = workload_comparison(a, b, cc);

    Table t;
    t.columns = {"key", "value"};
    t.row({"mean_a", fmt_double(cmp.mean_a.value)});
    t.row({"mean_b", fmt_double(cmp.mean_b.value)});
    t.row({"weighted_a", fmt_double(cmp.weighted_a.value)});
    t.row({"weighted_b", fmt_double(cmp.weighted_b.value)});
    t.row({"ratio", fmt_double(cmp.ratio)});
    t.row({"ratio_lower_95", fmt_double(cmp.ratio_lower_95)});
    t.row({"ratio_upper_95", fmt_double(cmp.ratio_upper_95)});
    write_table(opt, "compare", t, run_meta(opt, Sha256::of(spec_hash(a) + spec_hash(b))));
    std::printf("workload a=%.6g b=%.6g ratio=%.6g [%.6g, %.6g]\n", cmp.mean_a.value,
                cmp.mean_b.value, cmp.ratio, cmp.ratio_lower_95, cmp.ratio_upper_95);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"jsqlab: join-the-shortest-queue network simulation and analysis"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--config", opt.config_path, "config file (JSON)")->required();
    app.add_option("--seed", opt.seed, "master seed");
    app.add_option("--horizon", opt.horizon, "simulation horizon (time units)");
    app.add_option("--burn-in", opt.burn_in, "burn-in (time units; default 20% of horizon)");
    app.add_option("--reps", opt.reps, "replications");
    app.add_option("--out", opt.out_dir, "output directory");
    app.add_option("--threads", opt.threads, "worker threads (env JSQLAB_THREADS as fallback)");
    app.add_option("--format", opt.format, "csv|jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));

    auto* validate = app.add_subcommand("validate", "traffic intensity and condition checks");
    auto* simulate = app.add_subcommand("simulate", "event log and metrics");
    auto* tails = app.add_subcommand("tails", "equilibrium tail estimation");
    auto* drift = app.add_subcommand("drift-audit", "drift inequality audit");
    auto* routing = app.add_subcommand("routing", "routing distribution solver");
    auto* section7 = app.add_subcommand("section7", "large-workload family validation");
    auto* compare = app.add_subcommand("compare", "stationary workload comparison");
    for (auto* sc : {validate, simulate, tails, drift, routing, section7, compare})
        sc->fallthrough();

    CLI11_PARSE(app, argc, argv);

    json cfg;
    try {
        cfg = load_config(opt.config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
    try {
        if (validate->parsed()) return cmd_validate(opt, cfg);
        if (simulate->parsed()) return cmd_simulate(opt, cfg);
        if (tails->parsed()) return cmd_tails(opt, cfg);
        if (drift->parsed()) return cmd_drift_audit(opt, cfg);
        if (routing->parsed()) return cmd_routing(opt, cfg);
        if (section7->parsed()) return cmd_section7(opt, cfg);
        if (compare->parsed()) return cmd_compare(opt, cfg);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

// Command line front end: analyze | qlim | powermodes | simulate | sweep.
// Data goes to stdout or --out; progress notes go to stderr.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "joulesim/config.hpp"
#include "joulesim/csv.hpp"
#include "joulesim/experiments.hpp"

namespace {

using namespace joulesim;

constexpr const char* kCsvSchema = "joulesim csv v1";

struct OutFile {
    std::ofstream file;
    std::ostream* stream = &std::cout;

    void open(const std::string& path) {
        if (path.empty()) return;
        file.open(path, std::ios::binary | std::ios::trunc);
        if (!file) throw config_error("cannot open output file '" + path + "'");
        stream = &file;
    }
};

std::vector<Strategy> resolve_strategies(const std::vector<std::string>& names,
                                         const DeviceProfile& profile) {
    std::vector<Strategy> out;
    for (const auto& n : names) out.push_back(resolve_strategy(n, profile));
    return out;
}

std::vector<std::string> strategy_names_from(const json& experiments,
                                             const char* section,
                                             std::vector<std::string> fallback) {
    if (experiments.contains(section) &&
        experiments.at(section).contains("strategies")) {
        std::vector<std::string> names;
        for (const auto& s : experiments.at(section).at("strategies"))
            names.push_back(s.get<std::string>());
        return names;
    }
    return fallback;
}

SchedulingPolicy parse_policy(const std::string& name) {
    std::string k = normalize_mode_name(name);
    if (k == "uniform") return SchedulingPolicy::uniform;
    if (k == "long-term" || k == "long_term" || k == "longterm")
        return SchedulingPolicy::long_term;
    if (k == "adaptive") return SchedulingPolicy::adaptive;
    throw config_error("unknown policy '" + name + "'");
}

long long e_lim_units(const DeviceProfile& profile, double fraction) {
    return static_cast<long long>(
        std::floor(fraction * static_cast<double>(profile.e_max)));
}

void dump_chain(const SemiMarkovChain& chain, const std::string& prefix) {
    {
        std::ofstream out(prefix + "_states.csv", std::ios::binary);
        if (!out)
            throw config_error("cannot open '" + prefix + "_states.csv'");
        CsvWriter csv(out);
        csv.comment(kCsvSchema);
        csv.row({"index", "q", "e", "gamma", "dwell", "mode"});
        for (int i = 0; i < chain.num_states(); ++i) {
            NodeState s = chain.state_of(i);
            csv.row({CsvWriter::num(i), CsvWriter::num(s.q),
                     CsvWriter::num(s.e), CsvWriter::num(s.gamma),
                     CsvWriter::num(chain.dwell(i)),
                     CsvWriter::num(chain.mode_of(i))});
        }
    }
    {
        std::ofstream out(prefix + "_matrix.csv", std::ios::binary);
        if (!out)
            throw config_error("cannot open '" + prefix + "_matrix.csv'");
        CsvWriter csv(out);
        csv.comment(kCsvSchema);
        csv.row({"row_state", "col_state", "prob"});
        for (int i = 0; i < chain.num_states(); ++i)
            for (const auto& [j, p] : chain.row(i))
                csv.row({CsvWriter::num(i), CsvWriter::num(j),
                         CsvWriter::num(p)});
    }
}

int cmd_analyze(const AppConfig& cfg, const std::string& profile_name,
                const std::string& mode, double q, double e_lim_fraction,
                const std::string& out_path, const std::string& dump_prefix) {
    const DeviceProfile& profile = cfg.profile(profile_name);
    Strategy strategy = resolve_strategy(mode, profile);
    long long e_lim = e_lim_units(profile, e_lim_fraction);

    std::cerr << "analyze: profile=" << profile.name << " mode=" << strategy.name
              << " q=" << q << "\n";
    AnalyzeResult r = analyze_chain(profile, strategy, q, e_lim);
    if (!dump_prefix.empty()) {
        SemiMarkovChain chain =
            SemiMarkovChain::build(profile, q, strategy.policy);
        dump_chain(chain, dump_prefix);
    }

    OutFile out;
    out.open(out_path);
    CsvWriter csv(*out.stream);
    csv.comment(kCsvSchema);
    csv.row({"profile", "mode", "q", "states", "reachable", "e_bar_units",
             "e_bar_time_weighted_units", "e_bar_fraction", "xi", "kappa_bar",
             "residual"});
    csv.row({r.profile, r.mode, CsvWriter::num(r.q), CsvWriter::num(r.states),
             CsvWriter::num(r.reachable), CsvWriter::num(r.e_bar_units),
             CsvWriter::num(r.e_bar_units_time_weighted),
             CsvWriter::num(r.e_bar_units_time_weighted /
                            static_cast<double>(profile.e_max)),
             CsvWriter::num(r.xi),
             r.kappa_bar ? CsvWriter::num(*r.kappa_bar) : std::string{},
             CsvWriter::num(r.residual)});
    return 0;
}

int cmd_qlim(const AppConfig& cfg, const std::string& profile_name,
             const std::vector<std::string>& mode_names, double xi_lim,
             double e_lim_fraction, const std::string& out_path) {
    const DeviceProfile& profile = cfg.profile(profile_name);
    std::vector<std::string> names = mode_names;
    if (names.empty())
        names = strategy_names_from(cfg.experiments, "qlim",
                                    {"15w", "30w", "60w", "dynamic"});
    std::vector<Strategy> strategies = resolve_strategies(names, profile);
    long long e_lim = e_lim_units(profile, e_lim_fraction);

    std::cerr << "qlim: profile=" << profile.name << " xi_lim=" << xi_lim
              << " e_lim=" << e_lim << " units\n";
    auto rows = qlim_table(profile, strategies, xi_lim, e_lim);

    OutFile out;
    out.open(out_path);
    CsvWriter csv(*out.stream);
    csv.comment(kCsvSchema);
    csv.row({"device", "policy", "q_lim_energy", "kappa_bar", "q_lim",
             "binding"});
    for (const auto& row : rows) {
        if (row.plan) {
            csv.row({row.profile, row.mode, CsvWriter::num(row.plan->q_lim_energy),
                     CsvWriter::num(row.plan->kappa_bar),
                     CsvWriter::num(row.plan->q_lim),
                     to_string(row.plan->binding)});
        } else {
            csv.row({row.profile, row.mode, "", "", "", "infeasible"});
        }
    }
    return 0;
}

int cmd_powermodes(const AppConfig& cfg, const std::string& profile_name,
                   long long horizon, int reps, double p, double e0_fraction,
                   std::uint64_t seed, const std::string& out_path) {
    const DeviceProfile& profile = cfg.profile(profile_name);
    std::vector<std::string> names = strategy_names_from(
        cfg.experiments, "powermodes", {"15w", "30w", "60w", "dynamic"});
    std::vector<Strategy> strategies = resolve_strategies(names, profile);

    std::cerr << "powermodes: profile=" << profile.name << " T=" << horizon
              << " reps=" << reps << " p=" << p << " e0=" << e0_fraction
              << "\n";
    auto rows = powermodes_table(profile, strategies, horizon, reps, p, seed,
                                 e0_fraction);

    OutFile out;
    out.open(out_path);
    CsvWriter csv(*out.stream);
    csv.comment(kCsvSchema);
    csv.row({"mode", "jobs_completed_mean", "jobs_completed_std",
             "battery_pct_mean", "battery_pct_std", "downtime_fraction_mean"});
    for (const auto& row : rows) {
        csv.row({row.mode, CsvWriter::num(row.agg.completed_mean),
                 CsvWriter::num(row.agg.completed_std),
                 CsvWriter::num(row.agg.battery_mean * 100.0),
                 CsvWriter::num(row.agg.battery_std * 100.0),
                 CsvWriter::num(row.agg.downtime_mean)});
    }
    return 0;
}

SimConfig base_sim_config(const AppConfig& cfg) {
    SimConfig sim;
    sim.topology = cfg.build_topology();
    sim.delta_seconds = cfg.delta_seconds;
    if (cfg.experiments.contains("network")) {
        const json& nj = cfg.experiments.at("network");
        sim.p = nj.value("p", sim.p);
        sim.horizon = nj.value("horizon", sim.horizon);
        sim.replications = nj.value("replications", sim.replications);
        sim.xi_lim = nj.value("xi_lim", sim.xi_lim);
        sim.e_lim_fraction = nj.value("e_lim_fraction", sim.e_lim_fraction);
        sim.e0_fraction = nj.value("e0_fraction", sim.e0_fraction);
    }
    return sim;
}

int cmd_simulate(const AppConfig& cfg, const std::string& policy,
                 const std::string& mode, int reps, std::uint64_t seed,
                 long long horizon, double p, std::optional<double> alpha,
                 const std::string& out_path, const std::string& dump_path) {
    SimConfig sim = base_sim_config(cfg);
    sim.policy = parse_policy(policy);
    if (!mode.empty()) {
        if (sim.topology.layers.empty())
            throw config_error("simulate: config has no topology");
        Strategy s =
            resolve_strategy(mode, sim.topology.layers.front().front());
        sim.mode_policy = s.policy;
    }
    if (reps > 0) sim.replications = reps;
    if (horizon > 0) sim.horizon = horizon;
    if (p >= 0.0) sim.p = p;
    sim.seed = seed;
    sim.alpha_override = alpha;

    std::cerr << "simulate: policy=" << to_string(sim.policy)
              << " p=" << sim.p << " T=" << sim.horizon
              << " reps=" << sim.replications << " seed=" << sim.seed << "\n";
    SimMetrics metrics = run(sim);

    OutFile out;
    out.open(out_path);
    CsvWriter csv(*out.stream);
    csv.comment(kCsvSchema);
    csv.row({"policy", "p", "horizon", "replications", "seed", "arrived_mean",
             "completed_mean", "dropped_mean", "throughput_mean",
             "throughput_std", "downtime_mean", "downtime_std", "battery_mean",
             "battery_std"});
    csv.row({to_string(sim.policy), CsvWriter::num(sim.p),
             CsvWriter::num(sim.horizon), CsvWriter::num(sim.replications),
             std::to_string(sim.seed),
             CsvWriter::num(metrics.mean([](const RepMetrics& r) {
                 return static_cast<double>(r.arrived);
             })),
             CsvWriter::num(metrics.completed_mean()),
             CsvWriter::num(metrics.dropped_mean()),
             CsvWriter::num(metrics.throughput_mean()),
             CsvWriter::num(metrics.stddev(
                 [](const RepMetrics& r) { return r.throughput(); })),
             CsvWriter::num(metrics.downtime_mean()),
             CsvWriter::num(metrics.stddev(
                 [](const RepMetrics& r) { return r.downtime_fraction; })),
             CsvWriter::num(metrics.battery_mean()),
             CsvWriter::num(metrics.stddev([](const RepMetrics& r) {
                 return r.mean_battery_fraction;
             }))});

    if (!dump_path.empty()) {
        std::ofstream dump(dump_path, std::ios::binary | std::ios::trunc);
        if (!dump)
            throw config_error("cannot open dump file '" + dump_path + "'");
        CsvWriter rep_csv(dump);
        rep_csv.comment(kCsvSchema);
        rep_csv.row({"replication", "arrived", "completed", "dropped",
                     "inflight_end", "downtime_fraction", "battery_fraction"});
        for (std::size_t i = 0; i < metrics.reps.size(); ++i) {
            const RepMetrics& r = metrics.reps[i];
            rep_csv.row({CsvWriter::num(static_cast<long long>(i)),
                         CsvWriter::num(r.arrived), CsvWriter::num(r.completed),
                         CsvWriter::num(r.dropped),
                         CsvWriter::num(r.inflight_end),
                         CsvWriter::num(r.downtime_fraction),
                         CsvWriter::num(r.mean_battery_fraction)});
        }
    }
    return 0;
}

int cmd_sweep(const AppConfig& cfg, const std::string& axis_name,
              const std::vector<double>& grid_flag,
              const std::vector<std::string>& policy_names, int reps,
              std::uint64_t seed, long long horizon, double p,
              const std::string& out_path) {
    SimConfig sim = base_sim_config(cfg);
    if (reps > 0) sim.replications = reps;
    if (horizon > 0) sim.horizon = horizon;
    if (p >= 0.0) sim.p = p;
    sim.seed = seed;

    SweepAxis axis;
    std::string key = normalize_mode_name(axis_name);
    if (key == "energy")
        axis = SweepAxis::energy_mean;
    else if (key == "jobs" || key == "p")
        axis = SweepAxis::job_p;
    else
        throw config_error("sweep: unknown axis '" + axis_name +
                           "' (expected energy|jobs)");

    std::vector<double> grid = grid_flag;
    if (grid.empty() && cfg.experiments.contains("network")) {
        const json& nj = cfg.experiments.at("network");
        const char* grid_key = axis == SweepAxis::energy_mean
                                   ? "mean_arrival_grid_joules"
                                   : "p_grid";
        if (nj.contains(grid_key))
            for (const auto& v : nj.at(grid_key)) grid.push_back(v.get<double>());
    }
    if (grid.empty())
        throw config_error("sweep: no grid given (flag --grid or config)");

    std::vector<SchedulingPolicy> policies;
    if (policy_names.empty()) {
        policies = {SchedulingPolicy::uniform, SchedulingPolicy::long_term,
                    SchedulingPolicy::adaptive};
    } else {
        for (const auto& n : policy_names) policies.push_back(parse_policy(n));
    }

    std::cerr << "sweep: axis=" << to_string(axis) << " points=" << grid.size()
              << " reps=" << sim.replications << " seed=" << sim.seed << "\n";
    auto rows = sweep(sim, axis, grid, policies);

    OutFile out;
    out.open(out_path);
    CsvWriter csv(*out.stream);
    csv.comment(kCsvSchema);
    csv.row({"axis", "value", "policy", "arrived_mean", "completed_mean",
             "dropped_mean", "throughput_mean", "throughput_std",
             "downtime_mean", "downtime_std", "battery_mean", "battery_std"});
    for (const auto& row : rows) {
        csv.row({to_string(axis), CsvWriter::num(row.axis_value),
                 to_string(row.policy),
                 CsvWriter::num(row.metrics.mean([](const RepMetrics& r) {
                     return static_cast<double>(r.arrived);
                 })),
                 CsvWriter::num(row.metrics.completed_mean()),
                 CsvWriter::num(row.metrics.dropped_mean()),
                 CsvWriter::num(row.metrics.throughput_mean()),
                 CsvWriter::num(row.metrics.stddev(
                     [](const RepMetrics& r) { return r.throughput(); })),
                 CsvWriter::num(row.metrics.downtime_mean()),
                 CsvWriter::num(row.metrics.stddev(
                     [](const RepMetrics& r) { return r.downtime_fraction; })),
                 CsvWriter::num(row.metrics.battery_mean()),
                 CsvWriter::num(row.metrics.stddev([](const RepMetrics& r) {
                     return r.mean_battery_fraction;
                 }))});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy-harvesting edge inference: chain analysis and "
                 "network simulation"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "configuration file (JSON)")
        ->required();

    // analyze
    auto* analyze = app.add_subcommand("analyze", "chain metrics for one rate");
    std::string an_profile, an_mode = "dynamic", an_out, an_dump;
    double an_q = 0.3, an_elim = 0.10;
    analyze->add_option("--profile", an_profile, "profile name");
    analyze->add_option("--mode", an_mode, "15w|30w|60w|dynamic|fixed:<id>");
    analyze->add_option("--q", an_q, "job input rate")->check(CLI::Range(0.0, 1.0));
    analyze->add_option("--e-lim-fraction", an_elim, "risk threshold fraction");
    analyze->add_option("--out", an_out, "output CSV path (default stdout)");
    analyze->add_option("--dump-chain", an_dump,
                        "write <prefix>_states.csv and <prefix>_matrix.csv");

    // qlim
    auto* qlim = app.add_subcommand("qlim", "maximum tolerable input rates");
    std::string ql_profile, ql_out;
    std::vector<std::string> ql_modes;
    double ql_xi = 0.01, ql_elim = 0.10;
    qlim->add_option("--profile", ql_profile, "profile name");
    qlim->add_option("--mode", ql_modes, "strategies (repeatable)");
    qlim->add_option("--xi-lim", ql_xi, "risk cap")->check(CLI::Range(0.0, 1.0));
    qlim->add_option("--e-lim-fraction", ql_elim, "risk threshold fraction");
    qlim->add_option("--out", ql_out, "output CSV path (default stdout)");

    // powermodes
    auto* pm = app.add_subcommand("powermodes",
                                  "single-device strategy comparison");
    std::string pm_profile, pm_out;
    long long pm_T = 0;
    int pm_reps = 0;
    double pm_p = -1.0;
    double pm_e0 = -2.0;
    std::uint64_t pm_seed = 1;
    pm->add_option("--profile", pm_profile, "profile name");
    pm->add_option("--horizon", pm_T, "slots per run");
    pm->add_option("--reps", pm_reps, "replications");
    pm->add_option("--p", pm_p, "job arrival probability");
    pm->add_option("--e0-fraction", pm_e0, "initial charge fraction");
    pm->add_option("--seed", pm_seed, "master seed");
    pm->add_option("--out", pm_out, "output CSV path (default stdout)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "layered network simulation");
    std::string sm_policy = "uniform", sm_mode, sm_out, sm_dump;
    int sm_reps = 0;
    std::uint64_t sm_seed = 1;
    long long sm_T = 0;
    double sm_p = -1.0;
    double sm_alpha = -1.0;
    sim->add_option("--policy", sm_policy, "uniform|long-term|adaptive");
    sim->add_option("--mode", sm_mode, "power strategy (default dynamic)");
    sim->add_option("--reps", sm_reps, "replications");
    sim->add_option("--seed", sm_seed, "master seed");
    sim->add_option("--horizon", sm_T, "slots per replication");
    sim->add_option("--p", sm_p, "system job arrival probability");
    sim->add_option("--alpha", sm_alpha, "adaptive damping override");
    sim->add_option("--out", sm_out, "output CSV path (default stdout)");
    sim->add_option("--dump-reps", sm_dump, "per-replication CSV dump path");

    // sweep
    auto* sw = app.add_subcommand("sweep", "grid sweeps over arrivals or rate");
    std::string sw_axis = "energy", sw_out;
    std::vector<double> sw_grid;
    std::vector<std::string> sw_policies;
    int sw_reps = 0;
    std::uint64_t sw_seed = 1;
    long long sw_T = 0;
    double sw_p = -1.0;
    sw->add_option("--axis", sw_axis, "energy|jobs");
    sw->add_option("--grid", sw_grid, "grid values (repeatable)");
    sw->add_option("--policy", sw_policies, "policies (repeatable; default all)");
    sw->add_option("--reps", sw_reps, "replications");
    sw->add_option("--seed", sw_seed, "master seed");
    sw->add_option("--horizon", sw_T, "slots per replication");
    sw->add_option("--p", sw_p, "system job arrival probability");
    sw->add_option("--out", sw_out, "output CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        joulesim::AppConfig cfg = joulesim::load_config(config_path);
        std::string default_profile = cfg.default_profile_name();
        if (*analyze) {
            return cmd_analyze(cfg,
                               an_profile.empty() ? default_profile : an_profile,
                               an_mode, an_q, an_elim, an_out, an_dump);
        }
        if (*qlim) {
            return cmd_qlim(cfg,
                            ql_profile.empty() ? default_profile : ql_profile,
                            ql_modes, ql_xi, ql_elim, ql_out);
        }
        if (*pm) {
            const json& ex = cfg.experiments.contains("powermodes")
                                 ? cfg.experiments.at("powermodes")
                                 : json::object();
            long long T = pm_T > 0 ? pm_T : ex.value("horizon", 100);
            int reps = pm_reps > 0 ? pm_reps : ex.value("replications", 200);
            double p = pm_p >= 0.0 ? pm_p : ex.value("p", 1.0);
            double e0 = pm_e0 >= -1.0 ? pm_e0 : ex.value("e0_fraction", -1.0);
            return cmd_powermodes(
                cfg, pm_profile.empty() ? default_profile : pm_profile, T, reps,
                p, e0, pm_seed, pm_out);
        }
        if (*sim) {
            std::optional<double> alpha;
            if (sm_alpha >= 0.0) alpha = sm_alpha;
            return cmd_simulate(cfg, sm_policy, sm_mode, sm_reps, sm_seed, sm_T,
                                sm_p, alpha, sm_out, sm_dump);
        }
        if (*sw) {
            return cmd_sweep(cfg, sw_axis, sw_grid, sw_policies, sw_reps,
                             sw_seed, sw_T, sw_p, sw_out);
        }
        return 2;
    } catch (const joulesim::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 3;
    } catch (const joulesim::numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

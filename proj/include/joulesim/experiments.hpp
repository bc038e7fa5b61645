#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "joulesim/chain.hpp"
#include "joulesim/config.hpp"
#include "joulesim/device_sim.hpp"
#include "joulesim/network_sim.hpp"
#include "joulesim/rateplan.hpp"
#include "joulesim/stationary.hpp"

namespace joulesim {

/// A power strategy as named on the command line: a fixed mode picked by
/// its watts label, or the battery-driven lookup.
struct Strategy {
    std::string name;  // e.g. "15w", "dynamic"
    ModePolicy policy;
};

inline std::string normalize_mode_name(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == ' ' || c == '\t') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

/// Resolve "dynamic", a watts label ("15w", "30 W"), or "fixed:<id>".
inline Strategy resolve_strategy(const std::string& name,
                                 const DeviceProfile& profile) {
    std::string key = normalize_mode_name(name);
    if (key == "dynamic") return {key, ModePolicy::lookup()};
    if (key.rfind("fixed:", 0) == 0) {
        int id = std::stoi(key.substr(6));
        if (!profile.has_mode(id))
            throw config_error("unknown fixed mode id " + std::to_string(id) +
                               " for profile '" + profile.name + "'");
        return {key, ModePolicy::fixed(id)};
    }
    for (const auto& m : profile.modes) {
        if (normalize_mode_name(m.watts_label) == key)
            return {key, ModePolicy::fixed(m.id)};
    }
    throw config_error("unknown mode '" + name + "' for profile '" +
                       profile.name + "'");
}

// ---------------------------------------------------------------------------
// analyze: chain metrics for one (profile, strategy, q).
// ---------------------------------------------------------------------------

struct AnalyzeResult {
    std::string profile;
    std::string mode;
    double q = 0.0;
    int states = 0;
    int reachable = 0;
    double e_bar_units = 0.0;          // occupancy-weighted form
    double e_bar_units_time_weighted = 0.0;
    double xi = 0.0;
    std::optional<double> kappa_bar;
    double residual = 0.0;
};

inline AnalyzeResult analyze_chain(const DeviceProfile& profile,
                                   const Strategy& strategy, double q,
                                   long long e_lim,
                                   const StationaryOptions& solve = {}) {
    SemiMarkovChain chain = SemiMarkovChain::build(profile, q, strategy.policy);
    StationaryDist dist = stationary_distribution(chain, solve);
    AnalyzeResult r;
    r.profile = profile.name;
    r.mode = strategy.name;
    r.q = q;
    r.states = chain.num_states();
    r.reachable = static_cast<int>(dist.reachable.size());
    r.e_bar_units = avg_energy(dist, chain, false);
    r.e_bar_units_time_weighted = avg_energy(dist, chain, true);
    r.xi = downtime_risk(dist, chain, e_lim);
    try {
        r.kappa_bar = expected_kappa(dist, chain);
    } catch (const numerical_error&) {
        r.kappa_bar = std::nullopt;
    }
    r.residual = stationary_residual(dist, chain);
    return r;
}

// ---------------------------------------------------------------------------
// qlim: rate plans per strategy.
// ---------------------------------------------------------------------------

struct QlimRow {
    std::string profile;
    std::string mode;
    std::optional<RatePlan> plan; // nullopt == infeasible at xi_lim
};

inline std::vector<QlimRow> qlim_table(const DeviceProfile& profile,
                                       const std::vector<Strategy>& strategies,
                                       double xi_lim, long long e_lim,
                                       const RatePlanOptions& opts = {}) {
    std::vector<QlimRow> rows;
    for (const auto& s : strategies) {
        QlimRow row;
        row.profile = profile.name;
        row.mode = s.name;
        row.plan = find_q_lim(profile, s.policy, xi_lim, e_lim, opts);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// risk curve: xi(q) per strategy over a grid.
// ---------------------------------------------------------------------------

struct RiskPoint {
    std::string mode;
    double q = 0.0;
    double xi = 0.0;
};

inline std::vector<RiskPoint> risk_curve(const DeviceProfile& profile,
                                         const std::vector<Strategy>& strategies,
                                         const std::vector<double>& q_grid,
                                         long long e_lim,
                                         const StationaryOptions& solve = {}) {
    std::vector<RiskPoint> points;
    for (const auto& s : strategies) {
        for (double q : q_grid) {
            SemiMarkovChain chain =
                SemiMarkovChain::build(profile, q, s.policy);
            StationaryDist dist = stationary_distribution(chain, solve);
            points.push_back({s.name, q, downtime_risk(dist, chain, e_lim)});
        }
    }
    return points;
}

// ---------------------------------------------------------------------------
// powermodes: replicated single-device runs per strategy.
// ---------------------------------------------------------------------------

struct PowermodesRow {
    std::string mode;
    DeviceSimAggregate agg;
};

inline std::vector<PowermodesRow> powermodes_table(
    const DeviceProfile& profile, const std::vector<Strategy>& strategies,
    long long horizon, int replications, double p, std::uint64_t seed,
    double e0_fraction = -1.0) {
    std::vector<PowermodesRow> rows;
    for (const auto& s : strategies) {
        DeviceSimConfig cfg;
        cfg.profile = profile;
        cfg.policy = s.policy;
        cfg.p = p;
        cfg.horizon = horizon;
        cfg.seed = seed;
        if (e0_fraction >= 0.0)
            cfg.e0 = static_cast<long long>(std::llround(
                e0_fraction * static_cast<double>(profile.e_max)));
        rows.push_back({s.name, run_device_sim_reps(cfg, replications)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// sweep: network metrics across a grid of arrival means or job rates.
// ---------------------------------------------------------------------------

enum class SweepAxis { energy_mean, job_p };

inline const char* to_string(SweepAxis a) {
    return a == SweepAxis::energy_mean ? "mean_arrival_joules" : "job_p";
}

struct SweepRow {
    double axis_value = 0.0;
    SchedulingPolicy policy = SchedulingPolicy::uniform;
    SimMetrics metrics;
};

/// Scale every device's arrival bounds so the network-wide mean arrival
/// equals `target_mean_joules`, preserving the relative spread between
/// devices.
inline Topology scale_topology_arrivals(const Topology& topo,
                                        double target_mean_joules) {
    double total = 0.0;
    int count = 0;
    for (const auto& layer : topo.layers) {
        for (const auto& d : layer) {
            if (d.arrival_lo_joules < 0.0)
                throw config_error(
                    "sweep: device '" + d.name +
                    "' lacks physical arrival bounds for rescaling");
            total += 0.5 * (d.arrival_lo_joules + d.arrival_hi_joules);
            count += 1;
        }
    }
    double mean = total / static_cast<double>(count);
    if (mean <= 0.0)
        throw config_error("sweep: current mean arrival is zero, cannot scale");
    double s = target_mean_joules / mean;
    Topology out = topo;
    for (auto& layer : out.layers) {
        for (auto& d : layer) {
            d.arrival_lo_joules *= s;
            d.arrival_hi_joules *= s;
            d.arrival = uniform_arrival_mdf(d.arrival_lo_joules,
                                            d.arrival_hi_joules, d.unit_joules);
        }
    }
    return out;
}

inline std::vector<SweepRow> sweep(const SimConfig& base, SweepAxis axis,
                                   const std::vector<double>& grid,
                                   const std::vector<SchedulingPolicy>& policies,
                                   const RatePlanOptions& plan_opts = {}) {
    if (grid.empty()) throw config_error("sweep: empty grid");
    std::vector<SweepRow> rows;
    for (double value : grid) {
        SimConfig cfg = base;
        if (axis == SweepAxis::energy_mean)
            cfg.topology = scale_topology_arrivals(base.topology, value);
        else
            cfg.p = value;

        // Rate plans depend on the grid point, not on the policy; compute
        // once and share across the policy runs.
        std::optional<std::vector<std::vector<double>>> rates;
        for (SchedulingPolicy pol : policies) {
            SimConfig run_cfg = cfg;
            run_cfg.policy = pol;
            if (pol != SchedulingPolicy::uniform && !rates)
                rates = plan_layer_rates(run_cfg, plan_opts);
            SimMetrics metrics =
                run(run_cfg, rates ? &*rates : nullptr, plan_opts);
            rows.push_back({value, pol, std::move(metrics)});
        }
    }
    return rows;
}

} // namespace joulesim

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "joulesim/chain.hpp"
#include "joulesim/profile.hpp"
#include "joulesim/rng.hpp"

namespace joulesim {

/// Slot-level simulation of one device under Bernoulli job arrivals, with
/// the same stage semantics as the embedded chain: one job in service, at
/// most one follow-up accepted while a stage runs, jobs held (not served)
/// during power saving, hysteresis on entry/exit. Stage costs are spread
/// over the stage's slots (largest remainder first) so slot totals equal
/// the per-job cost exactly.
struct DeviceSimConfig {
    DeviceProfile profile;
    ModePolicy policy;
    double p = 1.0;            // per-slot job arrival probability
    long long horizon = 100;   // slots
    long long e0 = -1;         // initial units; -1 means full battery
    std::uint64_t seed = 1;
    long long low_mark = -1;   // threshold for the low-battery slot counter;
                               // -1 means the profile's e_th
    bool record_occupancy = false;
};

struct DeviceSimResult {
    long long completed = 0;
    long long accepted = 0;
    long long rejected_saving = 0; // arrivals during power saving
    long long dropped_full = 0;    // arrivals beyond the one queued follow-up
    double mean_battery_fraction = 0.0;
    double downtime_fraction = 0.0; // fraction of slots with gamma == 0
    double low_fraction = 0.0;      // fraction of slots with E <= low_mark
    /// Slot-weighted frequency of the stage governing each slot, indexed per
    /// SemiMarkovChain state indexing; sums to 1 when recorded.
    std::vector<double> occupancy;
};

inline std::vector<long long> spread_cost(long long ce, int kappa) {
    std::vector<long long> out(static_cast<std::size_t>(kappa), ce / kappa);
    long long rem = ce % kappa;
    for (long long i = 0; i < rem; ++i) out[static_cast<std::size_t>(i)] += 1;
    return out;
}

inline DeviceSimResult run_device_sim(const DeviceSimConfig& cfg,
                                      std::uint64_t replication = 0) {
    const DeviceProfile& prof = cfg.profile;
    prof.validate();
    const long long e_max = prof.e_max;
    const long long low_mark = cfg.low_mark >= 0 ? cfg.low_mark : prof.e_th;

    RandomStream arrivals(cfg.seed, replication, 0);
    RandomStream energy(cfg.seed, replication, 1);

    long long e = cfg.e0 >= 0 ? cfg.e0 : e_max;
    int gamma = (e >= prof.e_th) ? 1 : 0;
    bool in_service = false;
    bool pending = false;
    int remaining = 0;
    int stage_slot = 0;
    std::vector<long long> spread;
    // Busy-stage ledger: the battery settles once per stage with the full
    // stage inflow against the full job cost, exactly as the boundary
    // update rule does; the per-slot value below is the clamped view of
    // the running balance.
    long long stage_start_e = 0;
    long long stage_inflow = 0;
    long long stage_spent = 0;
    long long stage_cost = 0;

    DeviceSimResult res;
    if (cfg.record_occupancy)
        res.occupancy.assign(static_cast<std::size_t>(4 * (e_max + 1)), 0.0);

    const long long slot_max = prof.arrival.max_units();
    auto draw_inflow = [&]() -> long long {
        double u = energy.next_double();
        double acc = 0.0;
        for (long long k = 0; k <= slot_max; ++k) {
            acc += prof.arrival.at(k);
            if (u < acc) return k;
        }
        return slot_max;
    };

    auto record_stage = [&](int q, long long e_start, int g, int dwell) {
        if (!cfg.record_occupancy) return;
        std::size_t idx = static_cast<std::size_t>(
            (static_cast<long long>(q) * 2 + g) * (e_max + 1) + e_start);
        res.occupancy[idx] += static_cast<double>(dwell);
    };

    auto start_stage = [&](long long e_boundary) {
        int mode_id = cfg.policy.mode_for(e_boundary, prof);
        const PowerModeSpec& m = prof.mode(mode_id);
        in_service = true;
        pending = false;
        remaining = m.kappa;
        stage_slot = 0;
        spread = spread_cost(m.ce_units, m.kappa);
        stage_start_e = e_boundary;
        stage_inflow = 0;
        stage_spent = 0;
        stage_cost = m.ce_units;
        record_stage(1, e_boundary, 1, m.kappa);
    };

    double battery_sum = 0.0;
    long long saving_slots = 0;
    long long low_slots = 0;

    for (long long t = 0; t < cfg.horizon; ++t) {
        // Slot-long stages (idle or power saving) start here.
        if (!in_service) record_stage(pending ? 1 : 0, e, gamma, 1);

        // Job arrival for this slot.
        if (cfg.p > 0.0 && arrivals.bernoulli(cfg.p)) {
            if (gamma == 0) {
                res.rejected_saving++;
            } else if (pending) {
                res.dropped_full++;
            } else {
                pending = true; // idle: service begins next slot;
                res.accepted++; // busy: queued behind the running stage
            }
        }

        // Energy flow and stage progress.
        long long inflow = draw_inflow();
        if (in_service) {
            stage_inflow += inflow;
            stage_spent += spread[static_cast<std::size_t>(stage_slot)];
            ++stage_slot;
            e = energy_update(stage_start_e, stage_inflow, stage_spent, e_max);
        } else {
            e = energy_update(e, inflow, 0, e_max);
        }

        // Stage boundary at the end of the slot.
        if (in_service) {
            if (--remaining == 0) {
                in_service = false;
                res.completed++;
                e = energy_update(stage_start_e, stage_inflow, stage_cost,
                                  e_max);
                gamma = (e < prof.e_th) ? 0 : 1;
                if (gamma == 1 && pending) start_stage(e);
            }
        } else if (gamma == 0) {
            if (e > prof.e_th_prime) {
                gamma = 1;
                if (pending) start_stage(e);
            }
        } else if (pending) {
            start_stage(e);
        }

        battery_sum += static_cast<double>(e) / static_cast<double>(e_max);
        if (gamma == 0) ++saving_slots;
        if (e <= low_mark) ++low_slots;
    }

    double slots = static_cast<double>(cfg.horizon);
    res.mean_battery_fraction = battery_sum / slots;
    res.downtime_fraction = static_cast<double>(saving_slots) / slots;
    res.low_fraction = static_cast<double>(low_slots) / slots;
    if (cfg.record_occupancy) {
        double total = 0.0;
        for (double v : res.occupancy) total += v;
        if (total > 0.0)
            for (double& v : res.occupancy) v /= total;
    }
    return res;
}

/// Replication means for the counters and fractions used by experiments.
struct DeviceSimAggregate {
    double completed_mean = 0.0, completed_std = 0.0;
    double battery_mean = 0.0, battery_std = 0.0;
    double downtime_mean = 0.0;
    double low_mean = 0.0;
};

inline DeviceSimAggregate run_device_sim_reps(const DeviceSimConfig& cfg,
                                              int replications) {
    DeviceSimAggregate agg;
    std::vector<double> completed, battery;
    completed.reserve(static_cast<std::size_t>(replications));
    battery.reserve(static_cast<std::size_t>(replications));
    double downtime = 0.0, low = 0.0;
    for (int r = 0; r < replications; ++r) {
        DeviceSimResult res =
            run_device_sim(cfg, static_cast<std::uint64_t>(r));
        completed.push_back(static_cast<double>(res.completed));
        battery.push_back(res.mean_battery_fraction);
        downtime += res.downtime_fraction;
        low += res.low_fraction;
    }
    auto mean_std = [](const std::vector<double>& xs, double& mean,
                       double& sd) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double v = 0.0;
        for (double x : xs) v += (x - m) * (x - m);
        sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1))
                           : 0.0;
        mean = m;
    };
    mean_std(completed, agg.completed_mean, agg.completed_std);
    mean_std(battery, agg.battery_mean, agg.battery_std);
    agg.downtime_mean = downtime / static_cast<double>(replications);
    agg.low_mean = low / static_cast<double>(replications);
    return agg;
}

} // namespace joulesim

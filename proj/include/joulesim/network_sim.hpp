#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "joulesim/device_sim.hpp"
#include "joulesim/profile.hpp"
#include "joulesim/rateplan.hpp"
#include "joulesim/rng.hpp"

namespace joulesim {

/// Ordered layers of devices; a job traverses every layer once to complete.
struct Topology {
    std::vector<std::vector<DeviceProfile>> layers;

    int device_count() const {
        int n = 0;
        for (const auto& l : layers) n += static_cast<int>(l.size());
        return n;
    }

    void validate() const {
        if (layers.empty())
            throw config_error("topology: at least one layer required");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].empty())
                throw config_error("topology: layer " + std::to_string(i) +
                                   " has no devices");
            for (const auto& d : layers[i]) d.validate();
        }
    }
};

enum class SchedulingPolicy { uniform, long_term, adaptive };

inline const char* to_string(SchedulingPolicy p) {
    switch (p) {
        case SchedulingPolicy::uniform: return "uniform";
        case SchedulingPolicy::long_term: return "long-term";
        case SchedulingPolicy::adaptive: return "adaptive";
    }
    return "?";
}

struct SimConfig {
    Topology topology;
    double p = 0.3;                 // system job arrival probability per slot
    long long horizon = 100;        // slots
    double delta_seconds = 100.0;   // slot length label; not used in math
    SchedulingPolicy policy = SchedulingPolicy::uniform;
    ModePolicy mode_policy = ModePolicy::lookup();
    int replications = 1;
    std::uint64_t seed = 1;
    std::optional<double> alpha_override;
    double xi_lim = 0.01;           // risk cap used when planning rates
    double e_lim_fraction = 0.10;   // battery fraction for the risk threshold
    double e0_fraction = -1.0;      // initial charge fraction; negative = full

    void validate() const {
        topology.validate();
        if (p < 0.0 || p > 1.0)
            throw config_error("sim: p outside [0,1]");
        if (horizon < 1) throw config_error("sim: horizon must be >= 1");
        if (replications < 1)
            throw config_error("sim: replications must be >= 1");
        if (xi_lim <= 0.0 || xi_lim >= 1.0)
            throw config_error("sim: xi_lim outside (0,1)");
        if (e_lim_fraction < 0.0 || e_lim_fraction > 1.0)
            throw config_error("sim: e_lim_fraction outside [0,1]");
        if (e0_fraction > 1.0)
            throw config_error("sim: e0_fraction exceeds 1");
    }
};

struct RepMetrics {
    long long arrived = 0;
    long long completed = 0;
    long long dropped = 0;
    long long inflight_end = 0;
    double downtime_fraction = 0.0;
    double mean_battery_fraction = 0.0;
    std::vector<long long> device_completed; // stage completions, layer-major

    double throughput() const {
        return arrived > 0
                   ? static_cast<double>(completed) / static_cast<double>(arrived)
                   : 0.0;
    }
};

struct SimMetrics {
    std::vector<RepMetrics> reps;

    template <class Get>
    double mean(Get get) const {
        double m = 0.0;
        for (const auto& r : reps) m += get(r);
        return m / static_cast<double>(reps.size());
    }

    template <class Get>
    double stddev(Get get) const {
        if (reps.size() < 2) return 0.0;
        double m = mean(get);
        double v = 0.0;
        for (const auto& r : reps) {
            double d = get(r) - m;
            v += d * d;
        }
        return std::sqrt(v / static_cast<double>(reps.size() - 1));
    }

    double downtime_mean() const {
        return mean([](const RepMetrics& r) { return r.downtime_fraction; });
    }
    double throughput_mean() const {
        return mean([](const RepMetrics& r) { return r.throughput(); });
    }
    double battery_mean() const {
        return mean([](const RepMetrics& r) { return r.mean_battery_fraction; });
    }
    double completed_mean() const {
        return mean([](const RepMetrics& r) {
            return static_cast<double>(r.completed);
        });
    }
    double dropped_mean() const {
        return mean([](const RepMetrics& r) {
            return static_cast<double>(r.dropped);
        });
    }
};

/// Per-device tolerable rates used by the long-term and adaptive policies.
/// Infeasible devices fall back to the probe floor so weight vectors stay
/// well formed. Devices sharing a profile are planned once.
inline std::vector<std::vector<double>> plan_layer_rates(
    const SimConfig& cfg, const RatePlanOptions& opts = {}) {
    std::vector<std::pair<const DeviceProfile*, double>> planned;
    auto rate_for = [&](const DeviceProfile& prof) {
        for (const auto& [p, rate] : planned)
            if (*p == prof) return rate;
        long long e_lim = static_cast<long long>(
            std::floor(cfg.e_lim_fraction * static_cast<double>(prof.e_max)));
        auto plan = find_q_lim(prof, cfg.mode_policy, cfg.xi_lim, e_lim, opts);
        double rate = plan ? plan->q_lim : opts.q_floor;
        planned.emplace_back(&prof, rate);
        return rate;
    };
    std::vector<std::vector<double>> rates;
    rates.reserve(cfg.topology.layers.size());
    for (const auto& layer : cfg.topology.layers) {
        std::vector<double> qs;
        qs.reserve(layer.size());
        for (const auto& prof : layer) qs.push_back(rate_for(prof));
        rates.push_back(std::move(qs));
    }
    return rates;
}

namespace detail {

struct DevRuntime {
    long long e = 0;
    int gamma = 1;
    bool busy = false;
    int remaining = 0;
    int stage_slot = 0;
    int mode = 0; // latched while busy, 0 in power saving
    std::vector<long long> spread;
    // Stage ledger: the battery settles against the full job cost at the
    // stage boundary; mid-stage values are the clamped running balance.
    long long stage_start_e = 0;
    long long stage_inflow = 0;
    long long stage_spent = 0;
    long long stage_cost = 0;
};

} // namespace detail

/// One replication of the layered simulation. Jobs arrive system-wide with
/// probability p per slot, are dispatched hop by hop (a layer's device is
/// chosen only when the previous layer finishes), and are dropped when the
/// target layer has no active idle device. Handoff is immediate: a job
/// finishing layer l in slot t occupies its layer l+1 device from slot t+1.
inline RepMetrics run_replication(
    const SimConfig& cfg, const std::vector<std::vector<double>>& layer_rates,
    std::uint64_t rep) {
    const int n_layers = static_cast<int>(cfg.topology.layers.size());
    std::vector<std::vector<detail::DevRuntime>> dev(
        static_cast<std::size_t>(n_layers));
    std::vector<std::vector<RandomStream>> energy;
    RandomStream system_stream(cfg.seed, rep, 0);

    int dev_counter = 1;
    for (int l = 0; l < n_layers; ++l) {
        const auto& layer = cfg.topology.layers[static_cast<std::size_t>(l)];
        energy.emplace_back();
        for (std::size_t d = 0; d < layer.size(); ++d) {
            detail::DevRuntime rt;
            rt.e = cfg.e0_fraction >= 0.0
                       ? std::min(layer[d].e_max,
                                  static_cast<long long>(std::llround(
                                      cfg.e0_fraction *
                                      static_cast<double>(layer[d].e_max))))
                       : layer[d].e_max;
            rt.gamma = (rt.e >= layer[d].e_th) ? 1 : 0;
            dev[static_cast<std::size_t>(l)].push_back(rt);
            energy.back().emplace_back(cfg.seed, rep,
                                       static_cast<std::uint64_t>(dev_counter++));
        }
    }

    RepMetrics m;
    std::vector<int> forward_now, forward_next; // jobs entering layer l this slot
    double battery_sum = 0.0;
    long long saving_device_slots = 0;
    const int n_devices = cfg.topology.device_count();
    m.device_completed.assign(static_cast<std::size_t>(n_devices), 0);
    std::vector<int> device_base(static_cast<std::size_t>(n_layers), 0);
    for (int l = 1; l < n_layers; ++l)
        device_base[static_cast<std::size_t>(l)] =
            device_base[static_cast<std::size_t>(l - 1)] +
            static_cast<int>(cfg.topology.layers[static_cast<std::size_t>(l - 1)]
                                 .size());

    auto assign = [&](int layer, int device) {
        const DeviceProfile& prof =
            cfg.topology.layers[static_cast<std::size_t>(layer)]
                               [static_cast<std::size_t>(device)];
        detail::DevRuntime& rt =
            dev[static_cast<std::size_t>(layer)][static_cast<std::size_t>(device)];
        int mode_id = cfg.mode_policy.mode_for(rt.e, prof);
        const PowerModeSpec& spec = prof.mode(mode_id);
        rt.busy = true;
        rt.mode = spec.id;
        rt.remaining = spec.kappa;
        rt.stage_slot = 0;
        rt.spread = spread_cost(spec.ce_units, spec.kappa);
        rt.stage_start_e = rt.e;
        rt.stage_inflow = 0;
        rt.stage_spent = 0;
        rt.stage_cost = spec.ce_units;
    };

    // Dispatch one job into `layer`; returns false on drop.
    auto dispatch = [&](int layer) -> bool {
        const auto& profs = cfg.topology.layers[static_cast<std::size_t>(layer)];
        auto& rts = dev[static_cast<std::size_t>(layer)];
        const std::size_t n = profs.size();

        std::vector<double> base;
        switch (cfg.policy) {
            case SchedulingPolicy::uniform:
                base.assign(n, 1.0 / static_cast<double>(n));
                break;
            case SchedulingPolicy::long_term:
                base = long_term_weights(
                           layer, layer_rates[static_cast<std::size_t>(layer)])
                           .weights;
                break;
            case SchedulingPolicy::adaptive: {
                std::vector<int> modes(n, 0);
                for (std::size_t d = 0; d < n; ++d) {
                    const detail::DevRuntime& rt = rts[d];
                    if (rt.gamma == 0)
                        modes[d] = 0;
                    else if (rt.busy)
                        modes[d] = rt.mode;
                    else
                        modes[d] = cfg.mode_policy.mode_for(rt.e, profs[d]);
                }
                double alpha = cfg.alpha_override ? *cfg.alpha_override
                                                  : default_alpha(modes);
                base = adaptive_weights(
                           layer, layer_rates[static_cast<std::size_t>(layer)],
                           modes, alpha)
                           .weights;
                break;
            }
        }

        double total = 0.0;
        for (std::size_t d = 0; d < n; ++d) {
            const detail::DevRuntime& rt = rts[d];
            bool eligible = rt.gamma == 1 && !rt.busy;
            if (!eligible) base[d] = 0.0;
            total += base[d];
        }
        if (total <= 0.0) return false;
        double u = system_stream.next_double() * total;
        double acc = 0.0;
        std::size_t chosen = n;
        for (std::size_t d = 0; d < n; ++d) {
            acc += base[d];
            if (u < acc) {
                chosen = d;
                break;
            }
        }
        if (chosen == n) { // numerical edge of the cumulative walk
            for (std::size_t d = n; d-- > 0;) {
                if (base[d] > 0.0) {
                    chosen = d;
                    break;
                }
            }
        }
        assign(layer, static_cast<int>(chosen));
        return true;
    };

    for (long long t = 0; t < cfg.horizon; ++t) {
        // Jobs finishing the previous slot enter their next layer now.
        forward_now.swap(forward_next);
        forward_next.clear();
        for (int layer : forward_now) {
            if (!dispatch(layer)) m.dropped++;
        }

        // System arrival.
        if (cfg.p > 0.0 && system_stream.bernoulli(cfg.p)) {
            m.arrived++;
            if (!dispatch(0)) m.dropped++;
        }

        // Energy flow, stage progress, hysteresis.
        for (int l = 0; l < n_layers; ++l) {
            const auto& profs = cfg.topology.layers[static_cast<std::size_t>(l)];
            for (std::size_t d = 0; d < profs.size(); ++d) {
                const DeviceProfile& prof = profs[d];
                detail::DevRuntime& rt = dev[static_cast<std::size_t>(l)][d];

                double u = energy[static_cast<std::size_t>(l)][d].next_double();
                double acc = 0.0;
                long long inflow = prof.arrival.max_units();
                for (long long k = 0; k <= prof.arrival.max_units(); ++k) {
                    acc += prof.arrival.at(k);
                    if (u < acc) {
                        inflow = k;
                        break;
                    }
                }

                if (rt.busy) {
                    rt.stage_inflow += inflow;
                    rt.stage_spent +=
                        rt.spread[static_cast<std::size_t>(rt.stage_slot)];
                    rt.stage_slot++;
                    rt.e = energy_update(rt.stage_start_e, rt.stage_inflow,
                                         rt.stage_spent, prof.e_max);
                } else {
                    rt.e = energy_update(rt.e, inflow, 0, prof.e_max);
                }

                if (rt.busy) {
                    if (--rt.remaining == 0) {
                        rt.busy = false;
                        rt.mode = 0;
                        rt.e = energy_update(rt.stage_start_e, rt.stage_inflow,
                                             rt.stage_cost, prof.e_max);
                        rt.gamma = (rt.e < prof.e_th) ? 0 : 1;
                        m.device_completed[static_cast<std::size_t>(
                            device_base[static_cast<std::size_t>(l)] +
                            static_cast<int>(d))]++;
                        if (l + 1 < n_layers)
                            forward_next.push_back(l + 1);
                        else
                            m.completed++;
                    }
                } else if (rt.gamma == 0) {
                    if (rt.e > prof.e_th_prime) rt.gamma = 1;
                }

                battery_sum += static_cast<double>(rt.e) /
                               static_cast<double>(prof.e_max);
                if (rt.gamma == 0) ++saving_device_slots;
            }
        }
    }

    long long busy_devices = 0;
    for (const auto& layer : dev)
        for (const auto& rt : layer) busy_devices += rt.busy ? 1 : 0;
    m.inflight_end = busy_devices + static_cast<long long>(forward_next.size());

    double device_slots =
        static_cast<double>(n_devices) * static_cast<double>(cfg.horizon);
    m.mean_battery_fraction = battery_sum / device_slots;
    m.downtime_fraction =
        static_cast<double>(saving_device_slots) / device_slots;

    if (m.arrived != m.completed + m.dropped + m.inflight_end)
        throw numerical_error("replication: job conservation violated");
    return m;
}

/// Run all replications. Results depend only on (config, seed).
inline SimMetrics run(const SimConfig& cfg,
                      const std::vector<std::vector<double>>* layer_rates_in =
                          nullptr,
                      const RatePlanOptions& plan_opts = {}) {
    cfg.validate();
    std::vector<std::vector<double>> layer_rates;
    if (cfg.policy != SchedulingPolicy::uniform) {
        layer_rates = layer_rates_in ? *layer_rates_in
                                     : plan_layer_rates(cfg, plan_opts);
    } else {
        layer_rates.resize(cfg.topology.layers.size());
        for (std::size_t l = 0; l < cfg.topology.layers.size(); ++l)
            layer_rates[l].assign(cfg.topology.layers[l].size(), 1.0);
    }
    SimMetrics out;
    out.reps.reserve(static_cast<std::size_t>(cfg.replications));
    for (int r = 0; r < cfg.replications; ++r)
        out.reps.push_back(
            run_replication(cfg, layer_rates, static_cast<std::uint64_t>(r)));
    return out;
}

} // namespace joulesim

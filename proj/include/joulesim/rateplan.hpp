#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "joulesim/brent.hpp"
#include "joulesim/chain.hpp"
#include "joulesim/stationary.hpp"

namespace joulesim {

enum class RateBinding { energy, time };

inline const char* to_string(RateBinding b) {
    return b == RateBinding::energy ? "energy" : "time";
}

/// Maximum tolerable per-device input rate and what limits it: the risk cap
/// on the battery, or the processing delay 1/kappa_bar.
struct RatePlan {
    double q_lim_energy = 0.0;
    double kappa_bar = 0.0;
    double q_lim = 0.0;
    RateBinding binding = RateBinding::energy;
};

struct RatePlanOptions {
    double q_floor = 1e-4;     // below this the device counts as infeasible
    double root_tol = 1e-6;    // bracket width on q
    StationaryOptions solve;
};

/// Evaluates the downtime risk (and busy-slot expectation) as a function of
/// the input rate, caching solved chains keyed by q rounded to 1e-6. Safe
/// for concurrent readers; insertions are serialized.
class RiskEvaluator {
public:
    RiskEvaluator(DeviceProfile profile, ModePolicy policy, long long e_lim,
                  StationaryOptions solve = {})
        : profile_(std::move(profile)),
          policy_(policy),
          e_lim_(e_lim),
          solve_(solve) {}

    double risk(double q) const { return entry(q).risk; }

    /// Expected slots per job at rate q; empty when no busy state carries
    /// stationary mass (q == 0).
    std::optional<double> kappa_bar(double q) const { return entry(q).kappa; }

    const DeviceProfile& profile() const { return profile_; }
    long long e_lim() const { return e_lim_; }

private:
    struct Entry {
        double risk = 0.0;
        std::optional<double> kappa;
    };

    const Entry& entry(double q) const {
        long long key = std::llround(q * 1e6);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        SemiMarkovChain chain = SemiMarkovChain::build(profile_, q, policy_);
        StationaryDist dist = stationary_distribution(chain, solve_);
        Entry e;
        e.risk = downtime_risk(dist, chain, e_lim_);
        try {
            e.kappa = expected_kappa(dist, chain);
        } catch (const numerical_error&) {
            e.kappa = std::nullopt;
        }
        std::lock_guard<std::mutex> lock(mutex_);
        return cache_.emplace(key, e).first->second;
    }

    DeviceProfile profile_;
    ModePolicy policy_;
    long long e_lim_;
    StationaryOptions solve_;
    mutable std::map<long long, Entry> cache_;
    mutable std::mutex mutex_;
};

/// Maximum input rate keeping the stationary downtime risk at or below
/// xi_lim, combined with the processing-rate bound 1/kappa_bar. Returns
/// nullopt when even the smallest probed rate violates the risk cap.
inline std::optional<RatePlan> find_q_lim(const RiskEvaluator& eval,
                                          double xi_lim,
                                          const RatePlanOptions& opts = {}) {
    if (!(xi_lim > 0.0 && xi_lim < 1.0))
        throw std::domain_error("find_q_lim: xi_lim outside (0,1)");

    double q_energy;
    double risk_at_one = eval.risk(1.0);
    if (risk_at_one <= xi_lim) {
        q_energy = 1.0; // risk never binds
    } else {
        if (eval.risk(opts.q_floor) > xi_lim) return std::nullopt;
        q_energy = brent_root(
            [&](double q) { return eval.risk(q) - xi_lim; }, opts.q_floor, 1.0,
            opts.root_tol);
    }

    auto kappa = eval.kappa_bar(q_energy);
    if (!kappa)
        throw numerical_error(
            "find_q_lim: expected kappa undefined at q_lim_energy");

    RatePlan plan;
    plan.q_lim_energy = q_energy;
    plan.kappa_bar = *kappa;
    double time_bound = 1.0 / *kappa;
    if (q_energy <= time_bound) {
        plan.q_lim = q_energy;
        plan.binding = RateBinding::energy;
    } else {
        plan.q_lim = time_bound;
        plan.binding = RateBinding::time;
    }
    return plan;
}

inline std::optional<RatePlan> find_q_lim(const DeviceProfile& profile,
                                          ModePolicy policy, double xi_lim,
                                          long long e_lim,
                                          const RatePlanOptions& opts = {}) {
    RiskEvaluator eval(profile, policy, e_lim, opts.solve);
    return find_q_lim(eval, xi_lim, opts);
}

// ---------------------------------------------------------------------------
// Scheduling weight rules. Weights are per-layer probability vectors; an
// empty vector is the explicit "no device available" marker.
// ---------------------------------------------------------------------------

struct ScheduleWeights {
    int layer_id = 0;
    std::vector<double> weights; // empty == no device available

    bool has_devices() const { return !weights.empty(); }
};

/// Equal probability over the available devices.
inline ScheduleWeights uniform_weights(int layer_id,
                                       const std::vector<bool>& available) {
    int count = 0;
    for (bool a : available) count += a ? 1 : 0;
    ScheduleWeights w;
    w.layer_id = layer_id;
    if (count == 0) return w;
    w.weights.assign(available.size(), 0.0);
    double share = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < available.size(); ++i)
        if (available[i]) w.weights[i] = share;
    return w;
}

/// Static weights proportional to each device's tolerable input rate.
inline ScheduleWeights long_term_weights(int layer_id,
                                         const std::vector<double>& q_lims) {
    ScheduleWeights w;
    w.layer_id = layer_id;
    if (q_lims.empty()) return w;
    double total = 0.0;
    for (double q : q_lims) {
        if (q < 0.0)
            throw std::domain_error("long_term_weights: negative rate");
        total += q;
    }
    if (total <= 0.0)
        throw numerical_error("long_term_weights: all rates are zero");
    w.weights.reserve(q_lims.size());
    for (double q : q_lims) w.weights.push_back(q / total);
    return w;
}

/// Long-term weights with mass shifted away from devices currently stuck in
/// the lowest active power mode: each such device keeps the fraction
/// z = alpha / N of its weight before renormalization.
inline ScheduleWeights adaptive_weights(int layer_id,
                                        const std::vector<double>& q_lims,
                                        const std::vector<int>& modes,
                                        double alpha) {
    if (modes.size() != q_lims.size())
        throw std::domain_error("adaptive_weights: modes/q_lims size mismatch");
    double n = static_cast<double>(q_lims.size());
    if (alpha < 0.0 || alpha > n)
        throw std::domain_error("adaptive_weights: alpha outside [0, N]");
    ScheduleWeights w = long_term_weights(layer_id, q_lims);
    if (!w.has_devices()) return w;
    double z = alpha / n;
    double total = 0.0;
    for (std::size_t i = 0; i < w.weights.size(); ++i) {
        if (modes[i] == 1) w.weights[i] *= z;
        total += w.weights[i];
    }
    if (total <= 0.0)
        throw numerical_error("adaptive_weights: degenerate weight vector");
    for (double& x : w.weights) x /= total;
    return w;
}

/// Default alpha: the number of devices currently in the lowest active mode.
inline double default_alpha(const std::vector<int>& modes) {
    double a = 0.0;
    for (int m : modes) a += (m == 1) ? 1.0 : 0.0;
    return a;
}

} // namespace joulesim

#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "joulesim/energy.hpp"
#include "joulesim/profile.hpp"

namespace joulesim {

/// State of one device at a stage boundary: queue occupancy, battery units,
/// and whether the device is active (gamma=1) or in power saving (gamma=0).
struct NodeState {
    int q = 0;
    long long e = 0;
    int gamma = 1;

    bool operator==(const NodeState& other) const {
        return q == other.q && e == other.e && gamma == other.gamma;
    }
};

/// Embedded chain over (Q, E, gamma) with per-state dwell times.
///
/// Transitions are built case by case from the stage semantics:
///  - idle active states (Q=0, gamma=1) dwell one slot, consume nothing, and
///    split on whether a job arrived during that slot;
///  - power-saving states dwell one slot, consume nothing, ignore arrivals,
///    and leave power saving only once the battery exceeds e_th_prime;
///  - busy states (Q=1, gamma=1) dwell kappa slots at the stage's power
///    mode, collect the kappa-fold convolved inflow, pay the mode's full
///    job cost, and drop to power saving when the resulting level falls
///    below e_th.
/// Battery clamping mass piles up at 0 and e_max, mirroring the update rule.
class SemiMarkovChain {
public:
    using Row = std::vector<std::pair<int, double>>;

    static SemiMarkovChain build(const DeviceProfile& profile, double q_input,
                                 ModePolicy policy) {
        if (q_input < 0.0 || q_input > 1.0)
            throw std::domain_error("build_chain: q_input outside [0,1]");
        profile.validate();
        if (!policy.dynamic && !profile.has_mode(policy.fixed_id))
            throw config_error("build_chain: fixed mode id " +
                               std::to_string(policy.fixed_id) +
                               " not in profile '" + profile.name + "'");

        SemiMarkovChain chain;
        chain.profile_ = profile;
        chain.q_input_ = q_input;
        chain.policy_ = policy;
        const long long e_max = profile.e_max;
        const int n = chain.num_states();
        chain.rows_.resize(n);
        chain.dwell_.assign(n, 1);
        chain.mode_.assign(n, 0);

        // Per-mode stage inflow distributions, convolved once.
        std::vector<int> mode_ids;
        for (const auto& m : profile.modes) mode_ids.push_back(m.id);
        std::vector<EnergyMdf> stage_inflow;
        for (const auto& m : profile.modes)
            stage_inflow.push_back(convolve_mdf(profile.arrival, m.kappa));
        auto stage_inflow_for = [&](int id) -> const EnergyMdf& {
            for (std::size_t i = 0; i < mode_ids.size(); ++i)
                if (mode_ids[i] == id) return stage_inflow[i];
            throw config_error("build_chain: missing stage inflow for mode");
        };

        const EnergyMdf& slot_inflow = profile.arrival;
        std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
        std::vector<int> touched;
        touched.reserve(64);
        auto add = [&](const NodeState& to, double w) {
            int j = index_of_impl(to, e_max);
            if (acc[static_cast<std::size_t>(j)] == 0.0) touched.push_back(j);
            acc[static_cast<std::size_t>(j)] += w;
        };

        for (int q = 0; q <= 1; ++q) {
            for (int gamma = 0; gamma <= 1; ++gamma) {
                for (long long e = 0; e <= e_max; ++e) {
                    const NodeState s{q, e, gamma};
                    const int idx = index_of_impl(s, e_max);
                    Row& row = chain.rows_[idx];

                    if (gamma == 0) {
                        // Power saving: one slot, inflow only, job (if any)
                        // is held; reactivate strictly above e_th_prime.
                        for (long long u = 0; u <= slot_inflow.max_units(); ++u) {
                            double w = slot_inflow.at(u);
                            if (w == 0.0) continue;
                            long long e2 = energy_update(e, u, 0, e_max);
                            int g2 = (e2 > profile.e_th_prime) ? 1 : 0;
                            add({q, e2, g2}, w);
                        }
                    } else if (q == 0) {
                        // Idle active: one slot, no consumption; a job may
                        // arrive with the single-slot probability.
                        double p_m = q_input;
                        for (long long u = 0; u <= slot_inflow.max_units(); ++u) {
                            double w = slot_inflow.at(u);
                            if (w == 0.0) continue;
                            long long e2 = energy_update(e, u, 0, e_max);
                            if (p_m < 1.0) add({0, e2, 1}, w * (1.0 - p_m));
                            if (p_m > 0.0) add({1, e2, 1}, w * p_m);
                        }
                    } else {
                        // Busy: the stage runs at the mode chosen at this
                        // boundary, lasts kappa slots and pays the full cost.
                        const int mode_id = policy.mode_for(e, profile);
                        const PowerModeSpec& m = profile.mode(mode_id);
                        chain.dwell_[idx] = m.kappa;
                        chain.mode_[idx] = m.id;
                        const EnergyMdf& inflow = stage_inflow_for(mode_id);
                        double p_m = stage_arrival_prob(q_input, m.kappa);
                        for (long long u = 0; u <= inflow.max_units(); ++u) {
                            double w = inflow.at(u);
                            if (w == 0.0) continue;
                            long long e2 = energy_update(e, u, m.ce_units, e_max);
                            int g2 = (e2 < profile.e_th) ? 0 : 1;
                            if (p_m < 1.0) add({0, e2, g2}, w * (1.0 - p_m));
                            if (p_m > 0.0) add({1, e2, g2}, w * p_m);
                        }
                    }

                    std::sort(touched.begin(), touched.end());
                    row.reserve(touched.size());
                    for (int j : touched) {
                        row.emplace_back(j, acc[static_cast<std::size_t>(j)]);
                        acc[static_cast<std::size_t>(j)] = 0.0;
                    }
                    touched.clear();
                }
            }
        }
        return chain;
    }

    int num_states() const {
        return static_cast<int>(4 * (profile_.e_max + 1));
    }

    int index_of(const NodeState& s) const {
        return index_of_impl(s, profile_.e_max);
    }

    NodeState state_of(int idx) const {
        const long long span = profile_.e_max + 1;
        long long e = idx % span;
        int block = static_cast<int>(idx / span);
        return NodeState{block / 2, e, block % 2};
    }

    const Row& row(int idx) const { return rows_[static_cast<std::size_t>(idx)]; }
    int dwell(int idx) const { return dwell_[static_cast<std::size_t>(idx)]; }
    int mode_of(int idx) const { return mode_[static_cast<std::size_t>(idx)]; }

    const DeviceProfile& profile() const { return profile_; }
    double q_input() const { return q_input_; }
    const ModePolicy& policy() const { return policy_; }

private:
    static int index_of_impl(const NodeState& s, long long e_max) {
        return static_cast<int>((static_cast<long long>(s.q) * 2 + s.gamma) *
                                    (e_max + 1) +
                                s.e);
    }

    DeviceProfile profile_;
    double q_input_ = 0.0;
    ModePolicy policy_;
    std::vector<Row> rows_;
    std::vector<int> dwell_;
    std::vector<int> mode_;
};

/// States reachable from `start` along positive-probability edges. The
/// returned set is closed under transitions by construction. Default start
/// is the freshly charged idle device.
inline std::vector<int> reachable_closed_class(const SemiMarkovChain& chain,
                                               const NodeState& start) {
    std::vector<char> seen(static_cast<std::size_t>(chain.num_states()), 0);
    std::vector<int> stack{chain.index_of(start)};
    seen[static_cast<std::size_t>(stack.front())] = 1;
    std::vector<int> out;
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        out.push_back(s);
        for (const auto& [t, p] : chain.row(s)) {
            if (p > 0.0 && !seen[static_cast<std::size_t>(t)]) {
                seen[static_cast<std::size_t>(t)] = 1;
                stack.push_back(t);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<int> reachable_closed_class(const SemiMarkovChain& chain) {
    return reachable_closed_class(chain,
                                  NodeState{0, chain.profile().e_max, 1});
}

} // namespace joulesim

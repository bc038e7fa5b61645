#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "joulesim/energy.hpp"
#include "joulesim/errors.hpp"

namespace joulesim {

/// One operating point of a device: how many slots a job takes and how many
/// energy units it costs. Mode id 0 is reserved for power saving.
struct PowerModeSpec {
    int id = 1;
    std::string watts_label;
    int kappa = 1;           // slots per job
    long long ce_units = 0;  // energy units per job

    bool operator==(const PowerModeSpec& other) const {
        return id == other.id && watts_label == other.watts_label &&
               kappa == other.kappa && ce_units == other.ce_units;
    }
};

/// Static description of one device: its power modes, battery size, the
/// power-saving hysteresis thresholds and the battery-fraction table used
/// to pick a mode when running with the dynamic strategy.
struct DeviceProfile {
    std::string name;
    std::vector<PowerModeSpec> modes;
    long long e_max = 0;        // battery capacity, units
    long long e_th = 0;         // power-saving entry threshold, units
    long long e_th_prime = 0;   // power-saving exit threshold, units
    std::vector<std::pair<double, int>> pm_lookup; // (battery fraction, mode id)
    double unit_joules = 1.0;
    EnergyMdf arrival;          // per-slot inflow distribution
    // Physical bounds the arrival was quantized from; kept for reporting and
    // for rescaling sweeps. Negative when the profile was built in units.
    double arrival_lo_joules = -1.0;
    double arrival_hi_joules = -1.0;

    bool operator==(const DeviceProfile& other) const {
        return name == other.name && modes == other.modes &&
               e_max == other.e_max && e_th == other.e_th &&
               e_th_prime == other.e_th_prime &&
               pm_lookup == other.pm_lookup &&
               unit_joules == other.unit_joules && arrival == other.arrival &&
               arrival_lo_joules == other.arrival_lo_joules &&
               arrival_hi_joules == other.arrival_hi_joules;
    }

    const PowerModeSpec& mode(int id) const {
        for (const auto& m : modes)
            if (m.id == id) return m;
        throw config_error("profile '" + name + "': unknown mode id " +
                           std::to_string(id));
    }

    bool has_mode(int id) const {
        return std::any_of(modes.begin(), modes.end(),
                           [&](const PowerModeSpec& m) { return m.id == id; });
    }

    int lowest_active_mode_id() const {
        if (modes.empty()) throw config_error("profile '" + name + "': no modes");
        int best = modes.front().id;
        for (const auto& m : modes) best = std::min(best, m.id);
        return best;
    }

    void validate() const {
        if (modes.empty())
            throw config_error("profile '" + name + "': modes must be non-empty");
        for (const auto& m : modes) {
            if (m.id < 1)
                throw config_error("profile '" + name + "': mode id must be >= 1");
            if (m.kappa < 1)
                throw config_error("profile '" + name + "': mode " +
                                   std::to_string(m.id) + " kappa must be >= 1");
            if (m.ce_units < 0)
                throw config_error("profile '" + name + "': mode " +
                                   std::to_string(m.id) + " ce_units negative");
            if (m.ce_units > e_max)
                throw config_error("profile '" + name + "': mode " +
                                   std::to_string(m.id) + " ce_units exceeds e_max");
        }
        if (e_max < 1)
            throw config_error("profile '" + name + "': e_max must be >= 1");
        if (!(e_th < e_th_prime))
            throw config_error("profile '" + name + "': e_th must be < e_th_prime");
        if (!(e_th_prime <= e_max))
            throw config_error("profile '" + name + "': e_th_prime must be <= e_max");
        if (!(unit_joules > 0.0))
            throw config_error("profile '" + name + "': unit_joules must be positive");
        double prev = -1.0;
        for (const auto& [frac, id] : pm_lookup) {
            if (frac < 0.0 || frac > 1.0)
                throw config_error("profile '" + name +
                                   "': pm_lookup threshold outside [0,1]");
            if (frac <= prev)
                throw config_error("profile '" + name +
                                   "': pm_lookup thresholds must be strictly increasing");
            prev = frac;
            if (!has_mode(id))
                throw config_error("profile '" + name +
                                   "': pm_lookup references unknown mode id " +
                                   std::to_string(id));
        }
    }
};

/// Mode chosen for a given battery level: the highest lookup threshold not
/// exceeding e/e_max wins; below the first threshold the lowest active mode
/// is used.
inline int power_mode_lookup(long long e, const DeviceProfile& profile) {
    if (profile.pm_lookup.empty())
        throw config_error("profile '" + profile.name + "': empty pm_lookup table");
    double frac = static_cast<double>(e) / static_cast<double>(profile.e_max);
    int chosen = profile.lowest_active_mode_id();
    for (const auto& [threshold, id] : profile.pm_lookup) {
        if (frac >= threshold)
            chosen = id;
        else
            break;
    }
    return chosen;
}

/// Which power mode a busy stage runs at: a fixed mode id, or table lookup
/// from the battery level at the stage boundary.
struct ModePolicy {
    bool dynamic = true;
    int fixed_id = 1;

    static ModePolicy fixed(int id) { return ModePolicy{false, id}; }
    static ModePolicy lookup() { return ModePolicy{true, 1}; }

    int mode_for(long long e, const DeviceProfile& profile) const {
        return dynamic ? power_mode_lookup(e, profile) : fixed_id;
    }

    bool operator==(const ModePolicy& other) const {
        return dynamic == other.dynamic &&
               (dynamic || fixed_id == other.fixed_id);
    }
};

} // namespace joulesim

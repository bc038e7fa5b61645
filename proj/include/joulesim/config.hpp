#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "joulesim/errors.hpp"
#include "joulesim/network_sim.hpp"
#include "joulesim/profile.hpp"

namespace joulesim {

using json = nlohmann::json;

/// Uniform arrival bounds in physical units. `mean_joules` plus
/// `half_width_fraction` is the shorthand form; bounds win if both given.
struct ArrivalBounds {
    double lo_joules = 0.0;
    double hi_joules = 0.0;

    bool operator==(const ArrivalBounds& other) const {
        return lo_joules == other.lo_joules && hi_joules == other.hi_joules;
    }
};

/// Parsed configuration document: named device profiles, the layered
/// topology (profile references with optional per-device arrival bounds),
/// and the raw experiments section consumed by the CLI subcommands.
struct AppConfig {
    double unit_joules = 100.0;
    double delta_seconds = 100.0;
    std::vector<std::pair<std::string, DeviceProfile>> profiles;
    std::vector<std::vector<std::pair<std::string, std::optional<ArrivalBounds>>>>
        topology_spec;
    json experiments = json::object();

    const DeviceProfile& profile(const std::string& name) const {
        for (const auto& [n, p] : profiles)
            if (n == name) return p;
        throw config_error("config: unknown profile '" + name + "'");
    }

    bool has_profile(const std::string& name) const {
        for (const auto& [n, p] : profiles)
            if (n == name) return true;
        return false;
    }

    const std::string& default_profile_name() const {
        if (profiles.empty()) throw config_error("config: no profiles defined");
        return profiles.front().first;
    }

    Topology build_topology() const {
        Topology topo;
        for (const auto& layer : topology_spec) {
            std::vector<DeviceProfile> devices;
            for (const auto& [name, bounds] : layer) {
                DeviceProfile p = profile(name);
                if (bounds) {
                    p.arrival = uniform_arrival_mdf(bounds->lo_joules,
                                                    bounds->hi_joules,
                                                    p.unit_joules);
                    p.arrival_lo_joules = bounds->lo_joules;
                    p.arrival_hi_joules = bounds->hi_joules;
                }
                devices.push_back(std::move(p));
            }
            topo.layers.push_back(std::move(devices));
        }
        return topo;
    }

    bool operator==(const AppConfig& other) const {
        return unit_joules == other.unit_joules &&
               delta_seconds == other.delta_seconds &&
               profiles == other.profiles &&
               topology_spec == other.topology_spec &&
               experiments == other.experiments;
    }
};

namespace detail {

inline double require_number(const json& j, const std::string& path) {
    if (!j.is_number())
        throw config_error("config: field '" + path + "' must be a number");
    return j.get<double>();
}

inline ArrivalBounds parse_arrival(const json& j, const std::string& path) {
    if (!j.is_object())
        throw config_error("config: field '" + path + "' must be an object");
    ArrivalBounds b;
    if (j.contains("lo_joules") || j.contains("hi_joules")) {
        if (!j.contains("lo_joules") || !j.contains("hi_joules"))
            throw config_error("config: '" + path +
                               "' needs both lo_joules and hi_joules");
        b.lo_joules = require_number(j.at("lo_joules"), path + ".lo_joules");
        b.hi_joules = require_number(j.at("hi_joules"), path + ".hi_joules");
    } else if (j.contains("mean_joules")) {
        double mean = require_number(j.at("mean_joules"), path + ".mean_joules");
        double frac = 0.5;
        if (j.contains("half_width_fraction"))
            frac = require_number(j.at("half_width_fraction"),
                                  path + ".half_width_fraction");
        if (frac < 0.0 || frac > 1.0)
            throw config_error("config: '" + path +
                               ".half_width_fraction' outside [0,1]");
        b.lo_joules = mean * (1.0 - frac);
        b.hi_joules = mean * (1.0 + frac);
    } else {
        throw config_error("config: '" + path +
                           "' needs lo/hi_joules or mean_joules");
    }
    if (b.hi_joules < b.lo_joules)
        throw config_error("config: '" + path + "' has hi_joules < lo_joules");
    return b;
}

inline DeviceProfile parse_profile(const std::string& name, const json& j,
                                   double unit_joules, double delta_seconds) {
    const std::string path = "profiles." + name;
    DeviceProfile p;
    p.name = name;
    p.unit_joules = unit_joules;

    if (j.contains("e_max_units"))
        p.e_max = j.at("e_max_units").get<long long>();
    else if (j.contains("battery_joules"))
        p.e_max = quantize_energy(
            require_number(j.at("battery_joules"), path + ".battery_joules"),
            unit_joules);
    else
        throw config_error("config: '" + path +
                           "' needs battery_joules or e_max_units");

    auto threshold_units = [&](const char* frac_key, const char* unit_key,
                               const char* what) -> long long {
        if (j.contains(unit_key)) return j.at(unit_key).get<long long>();
        if (j.contains(frac_key)) {
            double f = require_number(j.at(frac_key),
                                      path + "." + std::string(frac_key));
            return round_half_even(f * static_cast<double>(p.e_max));
        }
        throw config_error("config: '" + path + "' missing " + what);
    };
    p.e_th = threshold_units("e_th_fraction", "e_th_units", "e_th");
    p.e_th_prime =
        threshold_units("e_th_prime_fraction", "e_th_prime_units", "e_th_prime");

    if (!j.contains("modes") || !j.at("modes").is_array())
        throw config_error("config: '" + path + ".modes' must be an array");
    for (const auto& mj : j.at("modes")) {
        PowerModeSpec m;
        m.id = mj.at("id").get<int>();
        m.watts_label = mj.value("label", std::string{});
        if (mj.contains("kappa"))
            m.kappa = mj.at("kappa").get<int>();
        else if (mj.contains("time_seconds"))
            m.kappa = static_cast<int>(round_half_even(
                require_number(mj.at("time_seconds"),
                               path + ".modes.time_seconds") /
                delta_seconds));
        else
            throw config_error("config: '" + path +
                               ".modes' entry needs kappa or time_seconds");
        if (m.kappa < 1)
            throw config_error("config: '" + path + ".modes' mode " +
                               std::to_string(m.id) +
                               " rounds to zero slots per job");
        if (mj.contains("ce_units"))
            m.ce_units = mj.at("ce_units").get<long long>();
        else if (mj.contains("energy_joules"))
            m.ce_units = quantize_energy(
                require_number(mj.at("energy_joules"),
                               path + ".modes.energy_joules"),
                unit_joules);
        else
            throw config_error("config: '" + path +
                               ".modes' entry needs ce_units or energy_joules");
        p.modes.push_back(std::move(m));
    }

    if (j.contains("pm_lookup")) {
        for (const auto& lj : j.at("pm_lookup"))
            p.pm_lookup.emplace_back(
                require_number(lj.at("battery_fraction"),
                               path + ".pm_lookup.battery_fraction"),
                lj.at("mode").get<int>());
    }

    if (!j.contains("arrival"))
        throw config_error("config: '" + path + "' missing arrival");
    ArrivalBounds b = parse_arrival(j.at("arrival"), path + ".arrival");
    p.arrival = uniform_arrival_mdf(b.lo_joules, b.hi_joules, unit_joules);
    p.arrival_lo_joules = b.lo_joules;
    p.arrival_hi_joules = b.hi_joules;

    p.validate();
    return p;
}

} // namespace detail

inline AppConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw config_error("config: document must be an object");
    AppConfig cfg;
    if (doc.contains("unit_joules"))
        cfg.unit_joules = detail::require_number(doc.at("unit_joules"),
                                                 "unit_joules");
    if (cfg.unit_joules <= 0.0)
        throw config_error("config: 'unit_joules' must be positive");
    if (doc.contains("delta_seconds"))
        cfg.delta_seconds = detail::require_number(doc.at("delta_seconds"),
                                                   "delta_seconds");
    if (cfg.delta_seconds <= 0.0)
        throw config_error("config: 'delta_seconds' must be positive");

    if (!doc.contains("profiles") || !doc.at("profiles").is_object() ||
        doc.at("profiles").empty())
        throw config_error("config: 'profiles' must be a non-empty object");
    for (const auto& [name, pj] : doc.at("profiles").items())
        cfg.profiles.emplace_back(
            name, detail::parse_profile(name, pj, cfg.unit_joules,
                                        cfg.delta_seconds));

    if (doc.contains("topology")) {
        const json& tj = doc.at("topology");
        if (!tj.contains("layers") || !tj.at("layers").is_array())
            throw config_error("config: 'topology.layers' must be an array");
        for (const auto& layer : tj.at("layers")) {
            std::vector<std::pair<std::string, std::optional<ArrivalBounds>>> row;
            if (!layer.is_array() || layer.empty())
                throw config_error(
                    "config: 'topology.layers' entries must be non-empty arrays");
            for (const auto& dj : layer) {
                std::string pname = dj.at("profile").get<std::string>();
                if (!cfg.has_profile(pname))
                    throw config_error(
                        "config: 'topology' references unknown profile '" +
                        pname + "'");
                std::optional<ArrivalBounds> bounds;
                if (dj.contains("arrival"))
                    bounds = detail::parse_arrival(dj.at("arrival"),
                                                   "topology.arrival");
                row.emplace_back(pname, bounds);
            }
            cfg.topology_spec.push_back(std::move(row));
        }
    }

    if (doc.contains("experiments")) {
        if (!doc.at("experiments").is_object())
            throw config_error("config: 'experiments' must be an object");
        cfg.experiments = doc.at("experiments");
    }
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw config_error("config: parse failure in '" + path +
                           "': " + e.what());
    }
    return parse_config(doc);
}

/// Canonical serialization of a parsed config: unit-valued fields only, so
/// parse(to_json(parse(x))) == parse(x).
inline json to_json(const AppConfig& cfg) {
    json doc;
    doc["unit_joules"] = cfg.unit_joules;
    doc["delta_seconds"] = cfg.delta_seconds;
    json profs = json::object();
    for (const auto& [name, p] : cfg.profiles) {
        json pj;
        pj["e_max_units"] = p.e_max;
        pj["e_th_units"] = p.e_th;
        pj["e_th_prime_units"] = p.e_th_prime;
        json modes = json::array();
        for (const auto& m : p.modes)
            modes.push_back({{"id", m.id},
                             {"label", m.watts_label},
                             {"kappa", m.kappa},
                             {"ce_units", m.ce_units}});
        pj["modes"] = modes;
        json lookup = json::array();
        for (const auto& [frac, id] : p.pm_lookup)
            lookup.push_back({{"battery_fraction", frac}, {"mode", id}});
        pj["pm_lookup"] = lookup;
        pj["arrival"] = {{"lo_joules", p.arrival_lo_joules},
                         {"hi_joules", p.arrival_hi_joules}};
        profs[name] = pj;
    }
    doc["profiles"] = profs;
    if (!cfg.topology_spec.empty()) {
        json layers = json::array();
        for (const auto& layer : cfg.topology_spec) {
            json lj = json::array();
            for (const auto& [name, bounds] : layer) {
                json dj;
                dj["profile"] = name;
                if (bounds)
                    dj["arrival"] = {{"lo_joules", bounds->lo_joules},
                                     {"hi_joules", bounds->hi_joules}};
                lj.push_back(dj);
            }
            layers.push_back(lj);
        }
        doc["topology"] = {{"layers", layers}};
    }
    doc["experiments"] = cfg.experiments;
    return doc;
}

} // namespace joulesim

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "joulesim/errors.hpp"

namespace joulesim {

/// Round to nearest integer, ties to even. Input must be non-negative.
inline long long round_half_even(double x) {
    double f = std::floor(x);
    double frac = x - f;
    long long n = static_cast<long long>(f);
    if (frac > 0.5) return n + 1;
    if (frac < 0.5) return n;
    return (n % 2 == 0) ? n : n + 1;
}

/// Discrete mass function of harvested energy per slot (or per stage after
/// self-convolution). Index i is the probability of exactly i energy units;
/// the support always starts at index 0 even when leading entries are zero.
class EnergyMdf {
public:
    EnergyMdf() : probs_{1.0} {}

    explicit EnergyMdf(std::vector<double> probs) : probs_(std::move(probs)) {
        validate();
    }

    static EnergyMdf point_mass(long long units) {
        if (units < 0) throw std::domain_error("point_mass: negative units");
        std::vector<double> p(static_cast<std::size_t>(units) + 1, 0.0);
        p.back() = 1.0;
        return EnergyMdf(std::move(p));
    }

    const std::vector<double>& probs() const { return probs_; }

    long long max_units() const {
        return static_cast<long long>(probs_.size()) - 1;
    }

    double at(long long units) const {
        if (units < 0 || units > max_units()) return 0.0;
        return probs_[static_cast<std::size_t>(units)];
    }

    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < probs_.size(); ++i)
            m += static_cast<double>(i) * probs_[i];
        return m;
    }

    double variance() const {
        double m = mean();
        double v = 0.0;
        for (std::size_t i = 0; i < probs_.size(); ++i) {
            double d = static_cast<double>(i) - m;
            v += d * d * probs_[i];
        }
        return v;
    }

    bool operator==(const EnergyMdf& other) const {
        return probs_ == other.probs_;
    }

private:
    void validate() const {
        if (probs_.empty())
            throw std::domain_error("EnergyMdf: empty probability vector");
        double sum = 0.0;
        for (double p : probs_) {
            if (p < 0.0 || !std::isfinite(p))
                throw std::domain_error("EnergyMdf: negative or non-finite entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::domain_error("EnergyMdf: probabilities do not sum to 1");
    }

    std::vector<double> probs_;
};

/// Convert a physical amount of energy to integer units (nearest-even).
inline long long quantize_energy(double joules, double unit_joules) {
    if (!(joules >= 0.0))
        throw std::domain_error("quantize_energy: negative energy");
    if (!(unit_joules > 0.0))
        throw std::domain_error("quantize_energy: unit must be positive");
    return round_half_even(joules / unit_joules);
}

/// Discrete uniform arrival distribution over quantized bounds.
inline EnergyMdf uniform_arrival_mdf(double lo_joules, double hi_joules,
                                     double unit_joules) {
    if (hi_joules < lo_joules)
        throw std::domain_error("uniform_arrival_mdf: hi < lo");
    long long lo = quantize_energy(lo_joules, unit_joules);
    long long hi = quantize_energy(hi_joules, unit_joules);
    std::vector<double> p(static_cast<std::size_t>(hi) + 1, 0.0);
    double w = 1.0 / static_cast<double>(hi - lo + 1);
    for (long long u = lo; u <= hi; ++u) p[static_cast<std::size_t>(u)] = w;
    return EnergyMdf(std::move(p));
}

/// kappa-fold self-convolution: distribution of total inflow over a stage
/// of kappa slots with independent per-slot arrivals.
inline EnergyMdf convolve_mdf(const EnergyMdf& f, int kappa) {
    if (kappa < 1) throw std::domain_error("convolve_mdf: kappa must be >= 1");
    if (kappa == 1) return f;
    const std::vector<double>& base = f.probs();
    std::vector<double> acc = base;
    for (int k = 1; k < kappa; ++k) {
        std::vector<double> next(acc.size() + base.size() - 1, 0.0);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            if (acc[i] == 0.0) continue;
            for (std::size_t j = 0; j < base.size(); ++j)
                next[i + j] += acc[i] * base[j];
        }
        acc = std::move(next);
    }
    // Renormalize accumulated rounding; the correction is O(n * eps).
    double sum = std::accumulate(acc.begin(), acc.end(), 0.0);
    for (double& p : acc) p /= sum;
    return EnergyMdf(std::move(acc));
}

/// One battery update step: add inflow, subtract consumption, clamp to
/// [0, e_max].
inline long long energy_update(long long e, long long delta_ie, long long ce,
                               long long e_max) {
    long long next = e + delta_ie - ce;
    if (next > e_max) return e_max;
    if (next < 0) return 0;
    return next;
}

/// Probability that at least one job arrives during a stage of kappa slots,
/// given per-slot arrival probability p.
inline double stage_arrival_prob(double p, int kappa) {
    if (p < 0.0 || p > 1.0)
        throw std::domain_error("stage_arrival_prob: p outside [0,1]");
    if (kappa < 1) throw std::domain_error("stage_arrival_prob: kappa < 1");
    return 1.0 - std::pow(1.0 - p, static_cast<double>(kappa));
}

} // namespace joulesim

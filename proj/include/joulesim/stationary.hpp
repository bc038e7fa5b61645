#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "joulesim/chain.hpp"
#include "joulesim/errors.hpp"

namespace joulesim {

/// Stationary distribution of the embedded chain. `pi` is indexed by the
/// full state space with zeros outside the recurrent class; `reachable` is
/// the closed class the solve was restricted to.
struct StationaryDist {
    std::vector<double> pi;
    std::vector<int> reachable;
};

enum class StationaryMethod { automatic, direct, power_iteration };

struct StationaryOptions {
    StationaryMethod method = StationaryMethod::automatic;
    double residual_tol = 1e-10;
    // Direct elimination is O(n^3); above this size fall back to iteration.
    int direct_limit = 20000;
    double power_tol = 1e-12;
    long long power_max_iters = 1000000;
};

namespace detail {

/// Bottom strongly connected components of the restricted transition graph
/// (iterative Tarjan). Returns component id per local index plus the set of
/// component ids with no outgoing edge.
struct SccResult {
    std::vector<int> comp;
    int count = 0;
    std::vector<int> bottom_comps;
};

inline SccResult strongly_connected_components(
    const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    SccResult res;
    res.comp.assign(n, -1);
    std::vector<int> index(n, -1), low(n, 0), on_stack(n, 0);
    std::vector<int> stack;
    int next_index = 0;

    struct Frame {
        int v;
        std::size_t child;
    };
    std::vector<Frame> call;
    for (int root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        call.push_back({root, 0});
        while (!call.empty()) {
            Frame& f = call.back();
            int v = f.v;
            if (f.child == 0) {
                index[v] = low[v] = next_index++;
                stack.push_back(v);
                on_stack[v] = 1;
            }
            bool descended = false;
            while (f.child < adj[v].size()) {
                int w = adj[v][f.child++];
                if (index[w] == -1) {
                    call.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[w]) low[v] = std::min(low[v], index[w]);
            }
            if (descended) continue;
            if (low[v] == index[v]) {
                int c = res.count++;
                for (;;) {
                    int w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    res.comp[w] = c;
                    if (w == v) break;
                }
            }
            call.pop_back();
            if (!call.empty()) {
                int parent = call.back().v;
                low[parent] = std::min(low[parent], low[v]);
            }
        }
    }

    std::vector<char> has_exit(static_cast<std::size_t>(res.count), 0);
    for (int v = 0; v < n; ++v)
        for (int w : adj[v])
            if (res.comp[v] != res.comp[w]) has_exit[res.comp[v]] = 1;
    for (int c = 0; c < res.count; ++c)
        if (!has_exit[c]) res.bottom_comps.push_back(c);
    return res;
}

/// Grassmann-Taksar-Heyman elimination: direct stationary solve using only
/// additions, multiplications and divisions of non-negative quantities, so
/// small stationary masses keep full relative accuracy. Input rows are the
/// transition probabilities of an irreducible chain in local indexing.
inline std::vector<double> gth_solve(std::vector<std::vector<double>> P) {
    const int n = static_cast<int>(P.size());
    if (n == 1) return {1.0};
    for (int k = n - 1; k >= 1; --k) {
        auto& rowk = P[static_cast<std::size_t>(k)];
        double sk = 0.0;
        for (int j = 0; j < k; ++j) sk += rowk[static_cast<std::size_t>(j)];
        if (!(sk > 0.0))
            throw numerical_error(
                "stationary solve: elimination found an absorbing sub-block "
                "(chain not irreducible)");
        const double inv = 1.0 / sk;
        for (int i = 0; i < k; ++i) {
            auto& rowi = P[static_cast<std::size_t>(i)];
            const double f = rowi[static_cast<std::size_t>(k)] * inv;
            if (f == 0.0) continue;
            rowi[static_cast<std::size_t>(k)] = f;
            const double* src = rowk.data();
            double* dst = rowi.data();
            for (int j = 0; j < k; ++j) dst[j] += f * src[j];
        }
    }
    std::vector<double> pi(static_cast<std::size_t>(n), 0.0);
    pi[0] = 1.0;
    for (int k = 1; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i)
            acc += pi[static_cast<std::size_t>(i)] *
                   P[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        pi[static_cast<std::size_t>(k)] = acc;
    }
    double total = 0.0;
    for (double v : pi) total += v;
    for (double& v : pi) v /= total;
    return pi;
}

} // namespace detail

/// Residual ||pi P - pi||_inf over the reachable class.
inline double stationary_residual(const StationaryDist& dist,
                                  const SemiMarkovChain& chain) {
    std::vector<double> flow(static_cast<std::size_t>(chain.num_states()), 0.0);
    for (int g : dist.reachable) {
        double w = dist.pi[static_cast<std::size_t>(g)];
        if (w == 0.0) continue;
        for (const auto& [t, p] : chain.row(g))
            flow[static_cast<std::size_t>(t)] += w * p;
    }
    double residual = 0.0;
    for (int g : dist.reachable)
        residual = std::max(residual,
                            std::abs(flow[static_cast<std::size_t>(g)] -
                                     dist.pi[static_cast<std::size_t>(g)]));
    return residual;
}

/// Solve pi = pi * P restricted to the closed class reachable from the
/// fully charged idle state. Transient states inside the reachable set get
/// probability zero; more than one terminal class is an error.
inline StationaryDist stationary_distribution(
    const SemiMarkovChain& chain, const StationaryOptions& opts = {}) {
    StationaryDist dist;
    dist.reachable = reachable_closed_class(chain);
    const int m = static_cast<int>(dist.reachable.size());
    std::vector<int> local(static_cast<std::size_t>(chain.num_states()), -1);
    for (int i = 0; i < m; ++i)
        local[static_cast<std::size_t>(dist.reachable[i])] = i;

    std::vector<std::vector<int>> adj(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        for (const auto& [t, p] : chain.row(dist.reachable[i])) {
            if (p > 0.0) adj[static_cast<std::size_t>(i)].push_back(
                local[static_cast<std::size_t>(t)]);
        }
    }

    detail::SccResult scc = detail::strongly_connected_components(adj);
    if (scc.bottom_comps.size() != 1)
        throw numerical_error(
            "stationary solve: multiple closed classes (" +
            std::to_string(scc.bottom_comps.size()) + ") in reachable set");
    const int bottom = scc.bottom_comps.front();

    std::vector<int> rec_local;
    for (int i = 0; i < m; ++i)
        if (scc.comp[static_cast<std::size_t>(i)] == bottom)
            rec_local.push_back(i);
    const int r = static_cast<int>(rec_local.size());
    std::vector<int> rec_of(static_cast<std::size_t>(m), -1);
    for (int i = 0; i < r; ++i)
        rec_of[static_cast<std::size_t>(rec_local[i])] = i;

    bool use_direct = opts.method == StationaryMethod::direct ||
                      (opts.method == StationaryMethod::automatic &&
                       r <= opts.direct_limit);

    std::vector<double> pi_rec;
    if (use_direct) {
        std::vector<std::vector<double>> P(
            static_cast<std::size_t>(r),
            std::vector<double>(static_cast<std::size_t>(r), 0.0));
        for (int i = 0; i < r; ++i) {
            int global = dist.reachable[rec_local[i]];
            for (const auto& [t, p] : chain.row(global)) {
                int lr = rec_of[static_cast<std::size_t>(
                    local[static_cast<std::size_t>(t)])];
                // Recurrent class is closed: every successor stays inside.
                P[static_cast<std::size_t>(i)][static_cast<std::size_t>(lr)] += p;
            }
        }
        pi_rec = detail::gth_solve(std::move(P));
    } else {
        // Power iteration on the sparse rows of the recurrent class.
        std::vector<std::vector<std::pair<int, double>>> rows(
            static_cast<std::size_t>(r));
        for (int i = 0; i < r; ++i) {
            int global = dist.reachable[rec_local[i]];
            for (const auto& [t, p] : chain.row(global))
                rows[static_cast<std::size_t>(i)].emplace_back(
                    rec_of[static_cast<std::size_t>(
                        local[static_cast<std::size_t>(t)])],
                    p);
        }
        std::vector<double> cur(static_cast<std::size_t>(r),
                                1.0 / static_cast<double>(r));
        std::vector<double> next(static_cast<std::size_t>(r), 0.0);
        double diff = 1.0;
        long long it = 0;
        while (diff > opts.power_tol) {
            if (++it > opts.power_max_iters)
                throw numerical_error(
                    "stationary solve: power iteration did not converge "
                    "(residual " +
                    std::to_string(diff) + ")");
            std::fill(next.begin(), next.end(), 0.0);
            for (int i = 0; i < r; ++i) {
                double w = cur[static_cast<std::size_t>(i)];
                if (w == 0.0) continue;
                for (const auto& [j, p] : rows[static_cast<std::size_t>(i)])
                    next[static_cast<std::size_t>(j)] += w * p;
            }
            diff = 0.0;
            for (int i = 0; i < r; ++i)
                diff = std::max(diff, std::abs(next[static_cast<std::size_t>(i)] -
                                               cur[static_cast<std::size_t>(i)]));
            cur.swap(next);
        }
        double total = 0.0;
        for (double v : cur) total += v;
        for (double& v : cur) v /= total;
        pi_rec = std::move(cur);
    }

    dist.pi.assign(static_cast<std::size_t>(chain.num_states()), 0.0);
    for (int i = 0; i < r; ++i)
        dist.pi[static_cast<std::size_t>(dist.reachable[rec_local[i]])] =
            pi_rec[static_cast<std::size_t>(i)];

    double residual = stationary_residual(dist, chain);
    if (residual > opts.residual_tol)
        throw numerical_error("stationary solve: residual " +
                              std::to_string(residual) + " exceeds tolerance");
    return dist;
}

/// Average battery level per slot. The default follows the embedded-chain
/// ratio with plain occupation weights in the numerator; `time_weighted`
/// weighs each state's energy by its dwell time as a semi-Markov time
/// average would.
inline double avg_energy(const StationaryDist& dist,
                         const SemiMarkovChain& chain,
                         bool time_weighted = false) {
    double num = 0.0, den = 0.0;
    for (int g : dist.reachable) {
        double w = dist.pi[static_cast<std::size_t>(g)];
        if (w == 0.0) continue;
        double t = static_cast<double>(chain.dwell(g));
        num += w * static_cast<double>(chain.state_of(g).e) *
               (time_weighted ? t : 1.0);
        den += w * t;
    }
    return num / den;
}

/// Long-run fraction of time the battery sits at or below e_lim.
inline double downtime_risk(const StationaryDist& dist,
                            const SemiMarkovChain& chain, long long e_lim) {
    double num = 0.0, den = 0.0;
    for (int g : dist.reachable) {
        double w = dist.pi[static_cast<std::size_t>(g)];
        if (w == 0.0) continue;
        double t = static_cast<double>(chain.dwell(g));
        den += w * t;
        if (chain.state_of(g).e <= e_lim) num += w * t;
    }
    double risk = num / den;
    if (risk < 0.0) return 0.0;
    if (risk > 1.0) return 1.0;
    return risk;
}

/// Expected processing slots per job, averaged over busy states.
inline double expected_kappa(const StationaryDist& dist,
                             const SemiMarkovChain& chain) {
    double num = 0.0, den = 0.0;
    int shared_kappa = -1;
    bool uniform_kappa = true;
    for (int g : dist.reachable) {
        NodeState s = chain.state_of(g);
        if (s.q != 1 || s.gamma != 1) continue;
        double w = dist.pi[static_cast<std::size_t>(g)];
        if (w == 0.0) continue;
        int k = chain.dwell(g);
        if (shared_kappa == -1)
            shared_kappa = k;
        else if (shared_kappa != k)
            uniform_kappa = false;
        num += w * static_cast<double>(k);
        den += w;
    }
    if (den <= 0.0)
        throw numerical_error(
            "expected_kappa: no stationary mass on busy states");
    if (uniform_kappa) return static_cast<double>(shared_kappa);
    return num / den;
}

} // namespace joulesim

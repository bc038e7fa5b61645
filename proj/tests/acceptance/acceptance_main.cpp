// End-to-end acceptance suite. Runs each contract check against the shipped
// default configuration and prints one PASS/FAIL line per check. The exit
// code is the number of failed checks.
//
// Usage: acceptance_runner <config.json> <path-to-cli-binary>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "joulesim/config.hpp"
#include "joulesim/experiments.hpp"

using namespace joulesim;

namespace {

struct Reporter {
    int failures = 0;
    std::string first_failure;

    void check(bool ok, const std::string& what) {
        if (ok) return;
        ++failures;
        if (first_failure.empty()) first_failure = what;
    }
};

struct Criterion {
    std::string name;
    std::function<void(Reporter&)> run;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance_runner <config.json> <cli-binary>\n";
        return 99;
    }
    const std::string config_path = argv[1];
    const std::string cli_path = argv[2];
    const std::string tmp_dir = argc > 3 ? argv[3] : ".";

    AppConfig cfg = load_config(config_path);
    const DeviceProfile& orin = cfg.profile("orin");
    const DeviceProfile& rich = cfg.profile("orin_rich");
    std::vector<Strategy> strategies = {
        resolve_strategy("15w", orin), resolve_strategy("30w", orin),
        resolve_strategy("60w", orin), resolve_strategy("dynamic", orin)};
    const long long e_lim = orin.e_th;

    // Shared state between checks that reuse each other's solves.
    std::vector<std::vector<double>> curve(strategies.size());
    double max_residual = 0.0;
    double worst_row_gap = 0.0;

    std::vector<Criterion> criteria;

    // 1. With plentiful harvesting the planner must return the exact
    //    processing-rate bounds for the fixed 15 W and 30 W strategies.
    criteria.push_back({"rate-limit-exactness", [&](Reporter& r) {
        auto p15 = find_q_lim(rich, ModePolicy::fixed(1), 0.01, rich.e_th);
        auto p30 = find_q_lim(rich, ModePolicy::fixed(2), 0.01, rich.e_th);
        r.check(bool(p15), "15 W plan missing");
        r.check(bool(p30), "30 W plan missing");
        if (p15) {
            r.check(std::abs(p15->q_lim - 1.0 / 3.0) <= 1e-9,
                    "15 W q_lim != 1/3 (" + fmt(p15->q_lim) + ")");
            r.check(p15->binding == RateBinding::time, "15 W binding not time");
        }
        if (p30) {
            r.check(std::abs(p30->q_lim - 0.5) <= 1e-9,
                    "30 W q_lim != 1/2 (" + fmt(p30->q_lim) + ")");
            r.check(p30->binding == RateBinding::time, "30 W binding not time");
        }
    }});

    // 2. Stationary downtime risk grows with the input rate for every
    //    strategy, and the fixed strategies order 15 W <= 30 W <= 60 W
    //    pointwise.
    criteria.push_back({"risk-curve-shape", [&](Reporter& r) {
        std::vector<double> grid;
        for (const auto& v :
             cfg.experiments.at("risk_curve").at("q_grid"))
            grid.push_back(v.get<double>());
        for (std::size_t s = 0; s < strategies.size(); ++s) {
            for (double q : grid) {
                SemiMarkovChain chain =
                    SemiMarkovChain::build(orin, q, strategies[s].policy);
                StationaryDist dist = stationary_distribution(chain);
                curve[s].push_back(downtime_risk(dist, chain, e_lim));
                max_residual =
                    std::max(max_residual, stationary_residual(dist, chain));
                for (int i = 0; i < chain.num_states(); ++i) {
                    double sum = 0.0;
                    for (const auto& [t, w] : chain.row(i)) sum += w;
                    worst_row_gap =
                        std::max(worst_row_gap, std::abs(sum - 1.0));
                }
            }
            for (std::size_t i = 1; i < curve[s].size(); ++i)
                r.check(curve[s][i] >= curve[s][i - 1] - 1e-15,
                        strategies[s].name + " risk not monotone at q=" +
                            fmt(grid[i]));
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            r.check(curve[0][i] <= curve[1][i] + 1e-15,
                    "xi(15W) > xi(30W) at q=" + fmt(grid[i]));
            r.check(curve[1][i] <= curve[2][i] + 1e-15,
                    "xi(30W) > xi(60W) at q=" + fmt(grid[i]));
        }
    }});

    // 3. The chain's stationary picture matches long simulated runs: the
    //    low-battery time share within max(20% rel, 5e-3 abs), and the
    //    state occupancies within 0.02 total variation.
    criteria.push_back({"analytic-sim-agreement", [&](Reporter& r) {
        for (const auto& s : strategies) {
            for (double q : {0.2, 0.5}) {
                SemiMarkovChain chain =
                    SemiMarkovChain::build(orin, q, s.policy);
                StationaryDist dist = stationary_distribution(chain);
                double analytic = downtime_risk(dist, chain, e_lim);

                DeviceSimConfig sim;
                sim.profile = orin;
                sim.policy = s.policy;
                sim.p = q;
                sim.horizon = 1000000;
                sim.seed = 20240817;
                sim.low_mark = e_lim;
                sim.record_occupancy = true;
                DeviceSimResult res = run_device_sim(sim);

                double tol = std::max(0.2 * analytic, 5e-3);
                r.check(std::abs(res.low_fraction - analytic) <= tol,
                        s.name + " q=" + fmt(q) + " risk mismatch: sim " +
                            fmt(res.low_fraction) + " vs " + fmt(analytic));

                double denom = 0.0;
                for (int g : dist.reachable)
                    denom += dist.pi[static_cast<std::size_t>(g)] *
                             static_cast<double>(chain.dwell(g));
                double tv = 0.0;
                for (int g = 0; g < chain.num_states(); ++g) {
                    double analytic_occ =
                        dist.pi[static_cast<std::size_t>(g)] *
                        static_cast<double>(chain.dwell(g)) / denom;
                    tv += std::abs(analytic_occ -
                                   res.occupancy[static_cast<std::size_t>(g)]);
                }
                r.check(0.5 * tv <= 2e-2, s.name + " q=" + fmt(q) +
                                              " occupancy TV " + fmt(0.5 * tv));
            }
        }
    }});

    // 4. Saturated single-device comparison: completed-job and battery
    //    orderings across the four strategies, and the dynamic strategy's
    //    battery lead of at least ten points over fixed 30 W.
    criteria.push_back({"strategy-orderings", [&](Reporter& r) {
        const json& ex = cfg.experiments.at("powermodes");
        auto rows = powermodes_table(
            orin, strategies, ex.value("horizon", 100),
            ex.value("replications", 1000), ex.value("p", 1.0), 1,
            ex.value("e0_fraction", -1.0));
        double J15 = rows[0].agg.completed_mean;
        double J30 = rows[1].agg.completed_mean;
        double J60 = rows[2].agg.completed_mean;
        double Jdy = rows[3].agg.completed_mean;
        double B15 = rows[0].agg.battery_mean * 100.0;
        double B30 = rows[1].agg.battery_mean * 100.0;
        double B60 = rows[2].agg.battery_mean * 100.0;
        double Bdy = rows[3].agg.battery_mean * 100.0;
        r.check(J15 < Jdy, "jobs: 15W (" + fmt(J15) + ") !< dynamic (" +
                               fmt(Jdy) + ")");
        r.check(Jdy < J60, "jobs: dynamic (" + fmt(Jdy) + ") !< 60W (" +
                               fmt(J60) + ")");
        r.check(J30 < J60,
                "jobs: 30W (" + fmt(J30) + ") !< 60W (" + fmt(J60) + ")");
        r.check(B60 < B30,
                "battery: 60W (" + fmt(B60) + ") !< 30W (" + fmt(B30) + ")");
        r.check(B30 < Bdy, "battery: 30W (" + fmt(B30) + ") !< dynamic (" +
                               fmt(Bdy) + ")");
        r.check(Bdy < B15, "battery: dynamic (" + fmt(Bdy) + ") !< 15W (" +
                               fmt(B15) + ")");
        r.check(Bdy - B30 >= 10.0,
                "battery: dynamic lead over 30W is " + fmt(Bdy - B30) +
                    " points (< 10)");
    }});

    // 5. Layered network at p=0.3 over the energy grid: informed policies
    //    dominate uniform on downtime everywhere; adaptive never trails
    //    long-term; long-term's throughput lead at the leanest point is at
    //    least five points.
    criteria.push_back({"scheduling-dominance", [&](Reporter& r) {
        SimConfig base;
        base.topology = cfg.build_topology();
        const json& nj = cfg.experiments.at("network");
        base.p = nj.value("p", 0.3);
        base.horizon = nj.value("horizon", 600);
        base.replications = nj.value("replications", 1000);
        base.e0_fraction = nj.value("e0_fraction", -1.0);
        base.xi_lim = nj.value("xi_lim", 0.01);
        base.e_lim_fraction = nj.value("e_lim_fraction", 0.10);
        base.seed = 7777;
        base.mode_policy = ModePolicy::lookup();
        std::vector<double> grid;
        for (const auto& v : nj.at("mean_arrival_grid_joules"))
            grid.push_back(v.get<double>());

        auto rows = sweep(base, SweepAxis::energy_mean, grid,
                          {SchedulingPolicy::uniform,
                           SchedulingPolicy::long_term,
                           SchedulingPolicy::adaptive});
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double du = rows[3 * i + 0].metrics.downtime_mean();
            double dl = rows[3 * i + 1].metrics.downtime_mean();
            double da = rows[3 * i + 2].metrics.downtime_mean();
            r.check(dl < du, "downtime long-term (" + fmt(dl) +
                                 ") !< uniform (" + fmt(du) + ") at " +
                                 fmt(grid[i]) + " J");
            r.check(da <= dl + 1e-12, "downtime adaptive (" + fmt(da) +
                                          ") > long-term (" + fmt(dl) +
                                          ") at " + fmt(grid[i]) + " J");
            // Conservation in every replication of every policy run.
            for (int k = 0; k < 3; ++k)
                for (const auto& rep : rows[3 * i + k].metrics.reps)
                    r.check(rep.arrived == rep.completed + rep.dropped +
                                               rep.inflight_end,
                            "conservation violated in a replication");
        }
        double thr_u = rows[0].metrics.throughput_mean();
        double thr_l = rows[1].metrics.throughput_mean();
        r.check(thr_l - thr_u >= 0.05,
                "throughput gap at leanest point is " + fmt(thr_l - thr_u) +
                    " (< 0.05): long-term " + fmt(thr_l) + " vs uniform " +
                    fmt(thr_u));
    }});

    // 6. Determinism: identical seeds give identical metrics in-process and
    //    byte-identical CSV from the command line; malformed configs are
    //    rejected with exit code 2.
    criteria.push_back({"conservation-determinism", [&](Reporter& r) {
        SimConfig sim;
        sim.topology = cfg.build_topology();
        sim.p = 0.4;
        sim.horizon = 120;
        sim.replications = 10;
        sim.seed = 99;
        sim.policy = SchedulingPolicy::uniform;
        SimMetrics a = run(sim);
        SimMetrics b = run(sim);
        for (std::size_t i = 0; i < a.reps.size(); ++i) {
            r.check(a.reps[i].arrived == b.reps[i].arrived &&
                        a.reps[i].completed == b.reps[i].completed &&
                        a.reps[i].dropped == b.reps[i].dropped &&
                        a.reps[i].downtime_fraction ==
                            b.reps[i].downtime_fraction &&
                        a.reps[i].mean_battery_fraction ==
                            b.reps[i].mean_battery_fraction,
                    "in-process rerun diverged at replication " +
                        std::to_string(i));
            r.check(a.reps[i].arrived == a.reps[i].completed +
                                             a.reps[i].dropped +
                                             a.reps[i].inflight_end,
                    "conservation violated");
        }

        auto run_cli = [&](const std::string& args, const std::string& out) {
            std::string cmd = cli_path + " --config " + config_path + " " +
                              args + " --out " + out + " 2>/dev/null";
            return std::system(cmd.c_str());
        };
        std::string o1 = tmp_dir + "/acc_sim_1.csv";
        std::string o2 = tmp_dir + "/acc_sim_2.csv";
        int rc1 = run_cli("simulate --policy uniform --reps 8 --horizon 80 "
                          "--p 0.5 --seed 42",
                          o1);
        int rc2 = run_cli("simulate --policy uniform --reps 8 --horizon 80 "
                          "--p 0.5 --seed 42",
                          o2);
        r.check(rc1 == 0 && rc2 == 0, "simulate runs failed");
        std::string f1 = read_file(o1), f2 = read_file(o2);
        r.check(!f1.empty() && f1 == f2, "simulate CSV not byte-identical");

        std::string q1 = tmp_dir + "/acc_qlim_1.csv";
        std::string q2 = tmp_dir + "/acc_qlim_2.csv";
        int rq1 = run_cli("qlim --profile orin_rich --mode 15w", q1);
        int rq2 = run_cli("qlim --profile orin_rich --mode 15w", q2);
        r.check(rq1 == 0 && rq2 == 0, "qlim runs failed");
        std::string g1 = read_file(q1), g2 = read_file(q2);
        r.check(!g1.empty() && g1 == g2, "qlim CSV not byte-identical");

        std::string bad_path = tmp_dir + "/acc_bad_config.json";
        {
            std::ofstream bad(bad_path, std::ios::binary | std::ios::trunc);
            bad << R"({"profiles": {"x": {"battery_joules": 1000.0,
                 "e_th_fraction": 0.5, "e_th_prime_fraction": 0.2,
                 "modes": [{"id": 1, "kappa": 1, "ce_units": 1}],
                 "arrival": {"mean_joules": 100.0}}}})";
        }
        std::string cmd = cli_path + " --config " + bad_path +
                          " analyze 2>/dev/null";
        int bad_rc = std::system(cmd.c_str());
        r.check(WIFEXITED(bad_rc) && WEXITSTATUS(bad_rc) == 2,
                "invalid config did not exit with code 2");
    }});

    // 7. Numerical kernels: stationary residuals, row stochasticity,
    //    convolution moment identities, and the root finder.
    criteria.push_back({"numerical-kernels", [&](Reporter& r) {
        r.check(max_residual <= 1e-10,
                "stationary residual " + fmt(max_residual));
        r.check(worst_row_gap <= 1e-10, "row sum gap " + fmt(worst_row_gap));
        for (int kappa : {2, 3}) {
            EnergyMdf g = convolve_mdf(orin.arrival, kappa);
            r.check(std::abs(g.mean() - kappa * orin.arrival.mean()) <= 1e-9,
                    "convolution mean identity");
            r.check(std::abs(g.variance() -
                             kappa * orin.arrival.variance()) <= 1e-9,
                    "convolution variance identity");
            double sum = 0.0;
            for (double v : g.probs()) sum += v;
            r.check(std::abs(sum - 1.0) <= 1e-12, "convolution normalization");
        }
        double root = brent_root([](double x) { return x * x - 2.0; }, 1.0,
                                 2.0, 1e-10);
        r.check(std::abs(root - std::sqrt(2.0)) <= 1e-10,
                "sqrt(2) root off by " + fmt(root - std::sqrt(2.0)));
    }});

    // 8. The adaptive reweighting reproduces the hand-computed trace.
    criteria.push_back({"adaptive-weight-algebra", [&](Reporter& r) {
        ScheduleWeights w =
            adaptive_weights(0, {0.2, 0.2, 0.2}, {1, 2, 3}, 1.0);
        r.check(std::abs(w.weights[0] - 1.0 / 7.0) <= 1e-12 &&
                    std::abs(w.weights[1] - 3.0 / 7.0) <= 1e-12 &&
                    std::abs(w.weights[2] - 3.0 / 7.0) <= 1e-12,
                "weights differ from (1/7, 3/7, 3/7)");
    }});

    int failed = 0;
    for (auto& c : criteria) {
        Reporter r;
        try {
            c.run(r);
        } catch (const std::exception& e) {
            r.check(false, std::string("exception: ") + e.what());
        }
        if (r.failures == 0) {
            std::printf("[PASS] %s\n", c.name.c_str());
        } else {
            std::printf("[FAIL] %s: %s (%d check(s) failed)\n", c.name.c_str(),
                        r.first_failure.c_str(), r.failures);
            ++failed;
        }
        std::fflush(stdout);
    }
    if (failed == 0) std::printf("acceptance: all %zu criteria passed\n",
                                 criteria.size());
    return failed;
}

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "esg/rng.hpp"
#include "esg/schemes.hpp"
#include "esg/stats.hpp"
#include "esg/system.hpp"

namespace esg {

struct SimulationConfig {
    TimeGrid grid;
    std::int64_t n_paths = 100000;
    std::uint64_t seed = 42;
    SchemeKind scheme = SchemeKind::Milstein2;
    bool antithetic = true;
    ModeFlags mode;
    double failure_rate_limit = 1e-3;
    int threads = 0;        // 0 = hardware concurrency
    int store_first = 0;    // keep full state paths for the first K paths
};

// Terminal values and path integrals of one simulated path.
struct PathResult {
    double D_T = 0.0, P_T = 0.0, S_T = 0.0, B_T = 0.0;
    double r_T = 0.0, theta_T = 0.0, chi_T = 0.0, gamma_T = 0.0;
    double int_D_dt = 0.0;     // trapezoid of D over [0, T]
    double int_chiD_dt = 0.0;  // trapezoid of chi D over [0, T]
    int truncations = 0;
    bool failed = false;
};

struct SimulationResult {
    std::vector<PathResult> paths;
    std::vector<std::vector<StateVector>> stored_paths;
    std::int64_t n_paths = 0;
    std::int64_t n_failed = 0;
    std::int64_t truncation_events = 0;
    bool antithetic = false;
    double elapsed_seconds = 0.0;
};

namespace detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// One path, fully keyed by (seed, path index): channel k < m carries the
// step's k-th Gaussian, channel m the Rademacher word for V. Antithetic
// members negate the Gaussians of their even-index base path; V signs are
// drawn under the true path index.
inline void run_path(const SystemCtx& ctx, const SimulationConfig& cfg,
                     const std::vector<CirBond::Terms>& bond_terms, const StateVector& s0,
                     std::uint64_t path, SystemTable& table, PathResult& out,
                     std::vector<StateVector>* store) {
    const int m = ctx.n_drivers;
    const double dt = cfg.grid.dt;
    const double sd = std::sqrt(dt);
    const std::uint64_t base = cfg.antithetic ? (path & ~std::uint64_t{1}) : path;
    const double sign = (cfg.antithetic && (path & 1)) ? -1.0 : 1.0;

    IncrementBundle inc;
    inc.m = m;

    StateVector s = s0;
    NeumaierSum int_D, int_chiD;
    double prev_D = s.D();
    double prev_chiD = s.chi() * s.D();
    int truncations = 0;
    out = PathResult{};
    if (store) {
        store->clear();
        store->push_back(s);
    }

    try {
        for (int i = 0; i < cfg.grid.n_steps; ++i) {
            for (int k = 0; k < m; ++k)
                inc.dW[k] = sign * sd * rng::normal(cfg.seed, base, static_cast<std::uint64_t>(i),
                                                    static_cast<std::uint64_t>(k));
            if (cfg.scheme == SchemeKind::Milstein2) {
                const std::uint64_t w = rng::word(cfg.seed, path, static_cast<std::uint64_t>(i),
                                                  static_cast<std::uint64_t>(m));
                int bit = 0;
                sample_V(inc, dt, [&](int, int) { return ((w >> bit++) & 1u) != 0; });
            }
            truncations += eval_system(ctx, bond_terms[i], s, table);
            switch (cfg.scheme) {
                case SchemeKind::Euler: s = euler_step(s, table, inc, dt); break;
                case SchemeKind::Milstein: s = milstein_step(s, table, inc, dt); break;
                case SchemeKind::Milstein2: s = milstein2_step(s, table, inc, dt); break;
            }
            int_D.add((prev_D + s.D()) * 0.5 * dt);
            int_chiD.add((prev_chiD + s.chi() * s.D()) * 0.5 * dt);
            prev_D = s.D();
            prev_chiD = s.chi() * s.D();
            if (store) store->push_back(s);
        }
        out.D_T = s.D();
        out.P_T = s.P();
        out.S_T = s.S();
        out.B_T = s.B();
        out.r_T = s.r();
        out.theta_T = s.theta();
        out.chi_T = s.chi();
        out.gamma_T = s.gamma();
        out.int_D_dt = int_D.value();
        out.int_chiD_dt = int_chiD.value();
        out.truncations = truncations;
        out.failed = false;
    } catch (const Error&) {
        out = PathResult{};
        out.failed = true;
        if (store) store->clear();
    }
}

}  // namespace detail

// Simulate n_paths paths of the five-factor system. Results are written to
// per-path slots and reduced sequentially, so output is identical for any
// worker count. With antithetic sampling an odd path count is rounded up.
inline SimulationResult simulate(const ModelParams& p, const SimulationConfig& cfg) {
    p.validate();
    if (cfg.n_paths <= 0) throw ConfigError("n_paths must be positive");
    if (cfg.grid.n_steps <= 0 || cfg.grid.dt <= 0.0) throw ConfigError("time grid must be non-empty");
    if (p.bond_maturity < cfg.grid.horizon() - 1e-12)
        throw ConfigError("bond_maturity must not precede the simulation horizon");

    const auto t_start = std::chrono::steady_clock::now();
    const SystemCtx ctx = SystemCtx::make(p, cfg.mode);

    std::int64_t n_paths = cfg.n_paths;
    if (cfg.antithetic && (n_paths & 1)) ++n_paths;

    std::vector<CirBond::Terms> bond_terms(cfg.grid.n_steps);
    for (int i = 0; i < cfg.grid.n_steps; ++i)
        bond_terms[i] = ctx.bond.terms(std::max(0.0, p.bond_maturity - cfg.grid.time(i)));

    const StateVector s0 = StateVector::initial(p);

    SimulationResult res;
    res.n_paths = n_paths;
    res.antithetic = cfg.antithetic;
    res.paths.resize(static_cast<std::size_t>(n_paths));
    const int store_first = std::min<std::int64_t>(cfg.store_first, n_paths);
    res.stored_paths.resize(static_cast<std::size_t>(store_first));

    const int n_threads = std::min<std::int64_t>(detail::resolve_threads(cfg.threads), n_paths);
    const std::int64_t unit = cfg.antithetic ? 2 : 1;
    const std::int64_t n_units = n_paths / unit;

    auto work = [&](std::int64_t unit_lo, std::int64_t unit_hi) {
        SystemTable table;
        for (std::int64_t u = unit_lo; u < unit_hi; ++u)
            for (std::int64_t sub = 0; sub < unit; ++sub) {
                const std::int64_t path = u * unit + sub;
                auto* store = path < store_first
                                  ? &res.stored_paths[static_cast<std::size_t>(path)]
                                  : nullptr;
                detail::run_path(ctx, cfg, bond_terms, s0, static_cast<std::uint64_t>(path), table,
                                 res.paths[static_cast<std::size_t>(path)], store);
            }
    };

    if (n_threads <= 1) {
        work(0, n_units);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        const std::int64_t chunk = (n_units + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const std::int64_t lo = std::min<std::int64_t>(w * chunk, n_units);
            const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n_units);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    for (const auto& pr : res.paths) {
        if (pr.failed) ++res.n_failed;
        res.truncation_events += pr.truncations;
    }
    res.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    if (static_cast<double>(res.n_failed) >
        cfg.failure_rate_limit * static_cast<double>(res.n_paths))
        throw FailureRateExceeded("path failure rate " + std::to_string(res.n_failed) + "/" +
                                  std::to_string(res.n_paths) + " exceeds limit");
    return res;
}

// Monte Carlo estimate of one deflated payoff over a simulation. The sample
// unit is the pair mean under antithetic sampling (a pair is dropped if
// either member failed) and the single path otherwise. Two Neumaier passes:
// mean, then centered variance.
struct McEstimate {
    double mean = 0.0;
    double variance = 0.0;  // of the sample unit
    std::int64_t n = 0;     // number of sample units

    double se() const { return n > 1 ? std::sqrt(variance / static_cast<double>(n)) : 0.0; }
};

template <typename F>
McEstimate collect(const SimulationResult& sim, F&& f) {
    const std::int64_t stride = sim.antithetic ? 2 : 1;
    const std::int64_t n_units = static_cast<std::int64_t>(sim.paths.size()) / stride;
    auto unit_value = [&](std::int64_t u, bool& ok) {
        const auto& p0 = sim.paths[static_cast<std::size_t>(u * stride)];
        if (stride == 1) {
            ok = !p0.failed;
            return ok ? f(p0) : 0.0;
        }
        const auto& p1 = sim.paths[static_cast<std::size_t>(u * stride + 1)];
        ok = !p0.failed && !p1.failed;
        return ok ? 0.5 * (f(p0) + f(p1)) : 0.0;
    };

    NeumaierSum sum;
    std::int64_t n = 0;
    for (std::int64_t u = 0; u < n_units; ++u) {
        bool ok = false;
        const double v = unit_value(u, ok);
        if (ok) {
            sum.add(v);
            ++n;
        }
    }
    if (n == 0) throw EmptyData("no surviving sample units");
    McEstimate est;
    est.n = n;
    est.mean = sum.value() / static_cast<double>(n);

    NeumaierSum ss;
    for (std::int64_t u = 0; u < n_units; ++u) {
        bool ok = false;
        const double v = unit_value(u, ok);
        if (ok) {
            const double d = v - est.mean;
            ss.add(d * d);
        }
    }
    est.variance = n > 1 ? ss.value() / static_cast<double>(n - 1) : 0.0;
    return est;
}

struct Interval {
    double center = 0.0, lo = 0.0, hi = 0.0;
};

struct ConfidenceIntervals {
    Interval adjusted;  // lognormal-adjusted interval
    Interval clt;       // plain CLT interval
};

// 95% intervals for the mean. The adjusted interval re-centers at
// mean + Var(mean)/2 and widens by the variance-of-variance term under a
// Student t quantile; the CLT interval is mean +- z se.
inline ConfidenceIntervals mean_confidence(const McEstimate& est, double level = 0.95) {
    ConfidenceIntervals ci;
    const double n = static_cast<double>(est.n);
    const double vh = est.variance / n;  // estimated variance of the mean
    const double p = 0.5 + 0.5 * level;

    ci.clt.center = est.mean;
    const double z = normal_quantile(p);
    const double half_clt = z * std::sqrt(vh);
    ci.clt.lo = est.mean - half_clt;
    ci.clt.hi = est.mean + half_clt;

    ci.adjusted.center = est.mean + 0.5 * vh;
    if (est.n > 1) {
        const double tq = student_t_quantile(p, est.n - 1);
        const double s2 = est.variance;
        const double half = tq * std::sqrt(s2 / n + s2 * s2 / (2.0 * (n - 1.0)));
        ci.adjusted.lo = ci.adjusted.center - half;
        ci.adjusted.hi = ci.adjusted.center + half;
    } else {
        ci.adjusted.lo = ci.adjusted.hi = ci.adjusted.center;
    }
    return ci;
}

struct PricingResult {
    double estimate = 0.0;
    double se = 0.0;
    ConfidenceIntervals ci;
    std::int64_t n = 0;
    double analytic = std::numeric_limits<double>::quiet_NaN();

    double diff() const { return estimate - analytic; }
    bool within(double k_se) const { return std::abs(diff()) <= k_se * se; }
};

namespace detail {

template <typename F>
PricingResult price_functional(const SimulationResult& sim, F&& f, double analytic) {
    const McEstimate est = collect(sim, std::forward<F>(f));
    PricingResult pr;
    pr.estimate = est.mean;
    pr.se = est.se();
    pr.ci = mean_confidence(est);
    pr.n = est.n;
    pr.analytic = analytic;
    return pr;
}

}  // namespace detail

// E[D_T] against P(0, T) and E[D_T P_T] against P(0, T_bond), both from the
// same simulation. The closed-form references apply in Simple mode, where D
// discounts at r alone.
struct ZcbPricing {
    PricingResult discount;   // E[D_T]
    PricingResult deflated;   // E[D_T P_T]
    SimulationResult sim;
};

inline ZcbPricing price_zcb(const ModelParams& p, const SimulationConfig& cfg) {
    ZcbPricing out;
    out.sim = simulate(p, cfg);
    const CirBond bond = p.bond();
    const double an_D = zcb_price(bond, 0.0, cfg.grid.horizon(), p.r0);
    const double an_DP = zcb_price(bond, 0.0, p.bond_maturity, p.r0);
    out.discount = detail::price_functional(out.sim, [](const PathResult& pr) { return pr.D_T; }, an_D);
    out.deflated = detail::price_functional(
        out.sim, [](const PathResult& pr) { return pr.D_T * pr.P_T; }, an_DP);
    return out;
}

// European put E[D_T (K - S_T)^+] plus the deflated-stock martingale check
// E[D_T S_T] = S_0.
struct PutPricing {
    PricingResult put;
    PricingResult deflated_stock;  // E[D_T S_T] vs S0
    SimulationResult sim;
};

inline PutPricing price_put(const ModelParams& p, const SimulationConfig& cfg, double strike,
                            double kim_reference = std::numeric_limits<double>::quiet_NaN()) {
    PutPricing out;
    out.sim = simulate(p, cfg);
    out.put = detail::price_functional(
        out.sim,
        [strike](const PathResult& pr) { return pr.D_T * std::max(strike - pr.S_T, 0.0); },
        kim_reference);
    out.deflated_stock = detail::price_functional(
        out.sim, [](const PathResult& pr) { return pr.D_T * pr.S_T; }, p.S0);
    return out;
}

// Defaultable coupon bond priced from the deflated payoff stream
//   c int D dt + D_T + (1 - loss) int chi D dt
// against the closed form, which applies with the composite deflator and a
// constant convenience yield.
struct CbPricing {
    PricingResult cb;
    SimulationResult sim;
};

inline CbPricing price_cb(const ModelParams& p, const SimulationConfig& cfg, double coupon,
                          double loss,
                          double analytic = std::numeric_limits<double>::quiet_NaN()) {
    CbPricing out;
    out.sim = simulate(p, cfg);
    out.cb = detail::price_functional(
        out.sim,
        [coupon, loss](const PathResult& pr) {
            return pr.D_T + coupon * pr.int_D_dt + (1.0 - loss) * pr.int_chiD_dt;
        },
        analytic);
    return out;
}

// Deflated terminal portfolio value, with the bond leg a defaultable coupon
// bond priced from its payoff stream.
struct PortfolioWeights {
    double w_S = 0.15;
    double w_P = 0.65;
    double w_CB = 0.20;
    double coupon = 0.05;
    double loss = 0.5;
};

inline double portfolio_value(const PathResult& pr, const PortfolioWeights& w) {
    const double cb = pr.D_T + w.coupon * pr.int_D_dt + (1.0 - w.loss) * pr.int_chiD_dt;
    return w.w_S * pr.D_T * pr.S_T + w.w_P * pr.D_T * pr.P_T + w.w_CB * cb;
}

// Plain and antithetic sampling of the portfolio value at a matched path
// budget, binned over shared Freedman-Diaconis edges, plus both estimates.
struct PortfolioComparison {
    Histogram histogram;  // series 0 = plain, series 1 = antithetic pair means
    McEstimate plain;
    McEstimate antithetic;
};

inline PortfolioComparison portfolio_histogram(const ModelParams& p, const SimulationConfig& cfg,
                                               const PortfolioWeights& w) {
    SimulationConfig plain_cfg = cfg;
    plain_cfg.antithetic = false;
    SimulationConfig anti_cfg = cfg;
    anti_cfg.antithetic = true;

    const SimulationResult plain = simulate(p, plain_cfg);
    const SimulationResult anti = simulate(p, anti_cfg);

    auto f = [&w](const PathResult& pr) { return portfolio_value(pr, w); };
    std::vector<double> plain_vals, anti_vals;
    plain_vals.reserve(plain.paths.size());
    for (const auto& pr : plain.paths)
        if (!pr.failed) plain_vals.push_back(f(pr));
    anti_vals.reserve(anti.paths.size() / 2);
    for (std::size_t u = 0; u + 1 < anti.paths.size(); u += 2) {
        const auto& p0 = anti.paths[u];
        const auto& p1 = anti.paths[u + 1];
        if (!p0.failed && !p1.failed) anti_vals.push_back(0.5 * (f(p0) + f(p1)));
    }

    PortfolioComparison out;
    out.plain = collect(plain, f);
    out.antithetic = collect(anti, f);
    out.histogram = freedman_diaconis_histogram({plain_vals, anti_vals});
    return out;
}

// Long-horizon moments of the (r, theta) subsystem against the closed-form
// square-root-process mean and variance for theta. Uses the reduced system;
// the full system's stock explodes over hundreds of years.
struct MomentCheck {
    double mc_mean = 0.0, mc_var = 0.0;
    double an_mean = 0.0, an_var = 0.0;
};

struct AsymptoticMoments {
    MomentCheck theta;
    double r_mc_mean = 0.0, r_mc_var = 0.0;
    std::int64_t n = 0;
    std::int64_t n_failed = 0;
};

inline double cir_mean(double a, double b, double x0, double t) {
    const double e = std::exp(-b * t);
    return x0 * e + (a / b) * (1.0 - e);
}

inline double cir_variance(double a, double b, double sigma, double x0, double t) {
    const double e = std::exp(-b * t);
    const double e2 = std::exp(-2.0 * b * t);
    return sigma * sigma * x0 * (e - e2) / b + a * sigma * sigma * (1.0 - 2.0 * e + e2) / (2.0 * b * b);
}

inline AsymptoticMoments asymptotic_moments(const ModelParams& p, double horizon, double dt,
                                            std::int64_t n_paths, SchemeKind scheme,
                                            std::uint64_t seed, int threads = 0) {
    if (n_paths <= 0) throw ConfigError("n_paths must be positive");
    RateThetaCtx ctx{p.a_r, p.b_r, p.sigma_r, p.a_theta, p.b_theta, p.sigma_theta};
    const int n_steps = static_cast<int>(std::llround(horizon / dt));
    if (n_steps <= 0) throw ConfigError("horizon shorter than one step");

    std::vector<double> r_T(static_cast<std::size_t>(n_paths));
    std::vector<double> th_T(static_cast<std::size_t>(n_paths));
    std::vector<char> failed(static_cast<std::size_t>(n_paths), 0);

    const double sd = std::sqrt(dt);
    auto work = [&](std::int64_t lo, std::int64_t hi) {
        SystemTable table;
        IncrementBundle inc;
        inc.m = 2;
        for (std::int64_t path = lo; path < hi; ++path) {
            double x[3] = {p.r0, p.theta0, 1.0};
            try {
                for (int i = 0; i < n_steps; ++i) {
                    inc.dW[0] = sd * rng::normal(seed, static_cast<std::uint64_t>(path),
                                                 static_cast<std::uint64_t>(i), 0);
                    inc.dW[1] = sd * rng::normal(seed, static_cast<std::uint64_t>(path),
                                                 static_cast<std::uint64_t>(i), 1);
                    if (scheme == SchemeKind::Milstein2) {
                        const std::uint64_t wbits =
                            rng::word(seed, static_cast<std::uint64_t>(path),
                                      static_cast<std::uint64_t>(i), 2);
                        int bit = 0;
                        sample_V(inc, dt, [&](int, int) { return ((wbits >> bit++) & 1u) != 0; });
                    }
                    eval_rate_theta(ctx, dt * i, x, table);
                    double xn[3] = {};
                    switch (scheme) {
                        case SchemeKind::Euler: step_euler(table, x, inc, dt, xn); break;
                        case SchemeKind::Milstein: step_milstein(table, x, inc, dt, xn); break;
                        case SchemeKind::Milstein2: step_milstein2(table, x, inc, dt, xn); break;
                    }
                    x[0] = xn[0];
                    x[1] = xn[1];
                    x[2] = xn[2];
                }
                r_T[static_cast<std::size_t>(path)] = x[0];
                th_T[static_cast<std::size_t>(path)] = x[1];
            } catch (const Error&) {
                failed[static_cast<std::size_t>(path)] = 1;
            }
        }
    };

    const int n_threads = std::min<std::int64_t>(detail::resolve_threads(threads), n_paths);
    if (n_threads <= 1) {
        work(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        const std::int64_t chunk = (n_paths + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const std::int64_t lo = std::min<std::int64_t>(w * chunk, n_paths);
            const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n_paths);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<double> r_ok, th_ok;
    r_ok.reserve(r_T.size());
    th_ok.reserve(th_T.size());
    std::int64_t n_failed = 0;
    for (std::size_t i = 0; i < r_T.size(); ++i) {
        if (failed[i]) {
            ++n_failed;
            continue;
        }
        r_ok.push_back(r_T[i]);
        th_ok.push_back(th_T[i]);
    }
    if (r_ok.empty()) throw EmptyData("all asymptotic paths failed");

    const SampleStats rs = sample_stats(r_ok);
    const SampleStats ts = sample_stats(th_ok);
    AsymptoticMoments out;
    out.theta.mc_mean = ts.mean;
    out.theta.mc_var = ts.variance;
    out.theta.an_mean = cir_mean(p.a_theta, p.b_theta, p.theta0, horizon);
    out.theta.an_var = cir_variance(p.a_theta, p.b_theta, p.sigma_theta, p.theta0, horizon);
    out.r_mc_mean = rs.mean;
    out.r_mc_var = rs.variance;
    out.n = static_cast<std::int64_t>(r_ok.size());
    out.n_failed = n_failed;
    return out;
}

}  // namespace esg

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "esg/engine.hpp"

namespace esg {

// Weak-order study on the scalar discount bond: r is a square-root process
// with theta pinned at zero, so E[D_T] = E[exp(-int r)] has the closed CIR
// form. Antithetic pairs remove most of the sampling noise, leaving the
// scheme bias visible on a dt ladder.
struct WeakOrderConfig {
    double a_r = 0.12, b_r = 0.6, sigma_r = 0.06, r0 = 0.04;
    double T = 1.0;
    std::vector<double> dts = {0.04, 0.02, 0.01};
    std::int64_t n_paths = 200000;
    std::uint64_t seed = 20260813;
    bool antithetic = true;
    int threads = 0;
};

struct WeakOrderPoint {
    double dt = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double analytic = 0.0;
    double abs_error = 0.0;
};

struct WeakOrderStudy {
    SchemeKind scheme = SchemeKind::Euler;
    std::vector<WeakOrderPoint> points;
    double slope = 0.0;
};

inline double fit_log_slope(const std::vector<WeakOrderPoint>& pts) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (const auto& p : pts) {
        if (!(p.abs_error > 0.0)) continue;
        const double x = std::log(p.dt), y = std::log(p.abs_error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) throw EmptyData("not enough usable points for a slope fit");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace detail {

inline WeakOrderPoint weak_order_point(const WeakOrderConfig& cfg, SchemeKind scheme, double dt,
                                       double analytic) {
    RateThetaCtx ctx{cfg.a_r, cfg.b_r, cfg.sigma_r, 0.0, 1.0, 0.0};
    const int n_steps = static_cast<int>(std::llround(cfg.T / dt));
    std::int64_t n_paths = cfg.n_paths;
    if (cfg.antithetic && (n_paths & 1)) ++n_paths;

    std::vector<double> D_T(static_cast<std::size_t>(n_paths));
    std::vector<char> failed(static_cast<std::size_t>(n_paths), 0);
    const double sd = std::sqrt(dt);

    auto work = [&](std::int64_t lo, std::int64_t hi) {
        SystemTable table;
        IncrementBundle inc;
        inc.m = 2;
        for (std::int64_t path = lo; path < hi; ++path) {
            const std::uint64_t base =
                cfg.antithetic ? (static_cast<std::uint64_t>(path) & ~std::uint64_t{1})
                               : static_cast<std::uint64_t>(path);
            const double sign = (cfg.antithetic && (path & 1)) ? -1.0 : 1.0;
            double x[3] = {cfg.r0, 0.0, 1.0};
            try {
                for (int i = 0; i < n_steps; ++i) {
                    inc.dW[0] = sign * sd * rng::normal(cfg.seed, base, static_cast<std::uint64_t>(i), 0);
                    inc.dW[1] = sign * sd * rng::normal(cfg.seed, base, static_cast<std::uint64_t>(i), 1);
                    if (scheme == SchemeKind::Milstein2) {
                        const std::uint64_t wbits =
                            rng::word(cfg.seed, static_cast<std::uint64_t>(path),
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
                D_T[static_cast<std::size_t>(path)] = x[2];
            } catch (const Error&) {
                failed[static_cast<std::size_t>(path)] = 1;
            }
        }
    };

    const int n_threads = std::min<std::int64_t>(detail::resolve_threads(cfg.threads), n_paths);
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

    std::vector<double> units;
    if (cfg.antithetic) {
        units.reserve(static_cast<std::size_t>(n_paths / 2));
        for (std::int64_t u = 0; u + 1 < n_paths; u += 2)
            if (!failed[static_cast<std::size_t>(u)] && !failed[static_cast<std::size_t>(u + 1)])
                units.push_back(0.5 * (D_T[static_cast<std::size_t>(u)] +
                                       D_T[static_cast<std::size_t>(u + 1)]));
    } else {
        units.reserve(static_cast<std::size_t>(n_paths));
        for (std::int64_t u = 0; u < n_paths; ++u)
            if (!failed[static_cast<std::size_t>(u)]) units.push_back(D_T[static_cast<std::size_t>(u)]);
    }
    if (units.empty()) throw EmptyData("all weak-order paths failed");

    const SampleStats st = sample_stats(units);
    WeakOrderPoint pt;
    pt.dt = dt;
    pt.estimate = st.mean;
    pt.se = st.se();
    pt.analytic = analytic;
    pt.abs_error = std::abs(st.mean - analytic);
    return pt;
}

}  // namespace detail

inline WeakOrderStudy weak_order_study(const WeakOrderConfig& cfg, SchemeKind scheme) {
    const CirBond bond{cfg.a_r, cfg.b_r, cfg.sigma_r};
    const double analytic = zcb_price(bond, 0.0, cfg.T, cfg.r0);
    WeakOrderStudy out;
    out.scheme = scheme;
    for (const double dt : cfg.dts)
        out.points.push_back(detail::weak_order_point(cfg, scheme, dt, analytic));
    out.slope = fit_log_slope(out.points);
    return out;
}

}  // namespace esg

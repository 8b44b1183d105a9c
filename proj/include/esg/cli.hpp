#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "esg/config.hpp"
#include "esg/weak_order.hpp"

namespace esg {
namespace cli {

struct CliOptions {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::int64_t max_paths = 0;  // 0 = no cap
    int threads = -1;            // -1 = not given on the command line
    bool dump_loadings = false;
    bool kim = false;
    std::string instrument = "zcb";  // converge: zcb | cb
    double calibrate_target = std::numeric_limits<double>::quiet_NaN();
    double horizon = 500.0;  // asymptotics
    double asy_dt = 0.05;
    std::int64_t asy_paths = 10000;
    std::int64_t ladder_start = 2500;  // converge
};

namespace detail {

using esg::detail::fmt_g17;

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline int env_threads() {
    const char* v = std::getenv("ESG_THREADS");
    if (!v || !*v) return 0;
    try {
        return std::max(0, std::stoi(v));
    } catch (const std::exception&) {
        throw ConfigError("ESG_THREADS must be a non-negative integer");
    }
}

struct LoadedRun {
    RunConfig cfg;
    int threads = 0;
};

inline LoadedRun load_run(const CliOptions& o) {
    if (o.config_path.empty()) throw ConfigError("--config is required");
    LoadedRun lr;
    lr.cfg = parse_config_file(o.config_path);
    if (o.max_paths > 0) lr.cfg.n_paths = std::min(lr.cfg.n_paths, o.max_paths);
    if (o.threads >= 0)
        lr.cfg.threads = o.threads;
    else if (lr.cfg.threads == 0)
        lr.cfg.threads = env_threads();
    lr.cfg.validate();
    lr.threads = lr.cfg.threads;
    return lr;
}

inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const RunConfig& cfg, const std::vector<std::string>& files,
                           const SimulationResult* sim) {
    std::ostringstream m;
    m << "command = " << command << "\n";
    for (const auto& f : files) m << "output = " << f << "\n";
    if (sim) {
        m << "n_paths = " << sim->n_paths << "\n";
        m << "n_failed = " << sim->n_failed << "\n";
        m << "truncation_events = " << sim->truncation_events << "\n";
        m << "elapsed_seconds = " << fmt_g17(sim->elapsed_seconds) << "\n";
    }
    m << "threads = " << cfg.threads << "\n";
    m << "\n[config]\n" << write_config(cfg);
    atomic_write(out_dir / "run_manifest.txt", m.str());
}

inline std::string pricing_row(const std::string& name, const PricingResult& pr) {
    std::ostringstream s;
    s << name << ',' << fmt_g17(pr.estimate) << ',' << fmt_g17(pr.se) << ','
      << fmt_g17(pr.ci.adjusted.center) << ',' << fmt_g17(pr.ci.adjusted.lo) << ','
      << fmt_g17(pr.ci.adjusted.hi) << ',' << fmt_g17(pr.ci.clt.lo) << ','
      << fmt_g17(pr.ci.clt.hi) << ',' << pr.n << ',' << fmt_g17(pr.analytic) << ','
      << fmt_g17(pr.estimate - pr.analytic) << '\n';
    return s.str();
}

inline const char* pricing_header() {
    return "quantity,estimate,se,ci_center,ci_lo,ci_hi,clt_lo,clt_hi,n,analytic,diff\n";
}

inline void print_pricing(std::ostream& out, const std::string& name, const PricingResult& pr) {
    out << name << ": " << pr.estimate << " (se " << pr.se << ", ci [" << pr.ci.adjusted.lo
        << ", " << pr.ci.adjusted.hi << "]";
    if (std::isfinite(pr.analytic))
        out << ", analytic " << pr.analytic << ", diff " << pr.estimate - pr.analytic;
    out << ")\n";
}

inline LongstaffInputs longstaff_from(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    return LongstaffInputs::make(p.bond(), p.r0, p.chi0, p.gamma0, p.sigma_chi, p.f, p.eta_const,
                                 p.corr.rho_rChi, p.theta0, cfg.coupon, cfg.loss, cfg.T);
}

}  // namespace detail

inline int run_validate(const CliOptions& o, std::ostream& out) {
    auto lr = detail::load_run(o);
    const RunConfig& cfg = lr.cfg;
    const ModelParams& p = cfg.params;

    out << "config ok: " << o.config_path << "\n";
    out << "grid: T = " << cfg.T << ", dt = " << cfg.dt << ", steps = " << cfg.grid().n_steps
        << ", n_paths = " << cfg.n_paths << "\n";
    out << "modes: short_rate = "
        << (cfg.mode.short_rate == ShortRateMode::Composite ? "composite" : "simple")
        << ", stock = "
        << (cfg.mode.stock == StockMode::MartingaleConsistent ? "martingale" : "free")
        << ", eta = " << (cfg.mode.eta == EtaMode::Constant ? "constant" : "regularity") << "\n";

    const auto rep = feller_check(p, cfg.mode);
    for (const auto& e : {rep.r, rep.theta, rep.chi})
        out << "feller " << e.process << ": 2a = " << e.lhs << (e.holds ? " >= " : " <  ")
            << e.rhs << " = sigma^2" << (e.state_dependent ? " (at t = 0)" : "") << "\n";

    const StateVector s0 = StateVector::initial(p);
    const auto d = regularity_drifts(s0, p, cfg.mode);
    out << "drifts at t=0: mu_S = " << d.mu_S << ", e = " << d.e << ", eta = " << d.eta
        << (d.eta_is_regularity ? " (regularity)" : " (constant)") << "\n";
    if (p.chi0 > 0.0 && cfg.mode.stock != StockMode::MartingaleConsistent) {
        try {
            const auto K = residual_K_terms(s0, p, cfg.mode);
            out << "K residuals at t=0: Psi = " << K.K_Psi << ", Gamma = " << K.K_Gamma
                << ", I = " << K.K_I << "\n";
        } catch (const Error& e) {
            out << "K residuals at t=0: not evaluable (" << e.what() << ")\n";
        }
    }

    if (o.dump_loadings) {
        const LoadingMatrix L = cfg.mode.stock == StockMode::MartingaleConsistent
                                    ? reduced_loadings(p.corr)
                                    : recursive_loadings(p.corr);
        out << "loading matrix (" << L.rows << "x" << L.cols << "):\n";
        for (int i = 0; i < L.rows; ++i) {
            for (int j = 0; j < L.cols; ++j) out << (j ? " " : "  ") << detail::fmt_g17(L(i, j));
            out << "\n";
        }
    }
    return 0;
}

inline int run_simulate(const CliOptions& o, std::ostream& out) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    SimulationConfig sc = cfg.sim_config();
    if (sc.store_first == 0)
        sc.store_first = static_cast<int>(std::min<std::int64_t>(10, cfg.n_paths));

    const SimulationResult sim = simulate(cfg.params, sc);
    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);

    std::ostringstream paths;
    paths << "path,step,t,r,theta,B,P,S,chi,gamma,D\n";
    for (std::size_t pidx = 0; pidx < sim.stored_paths.size(); ++pidx) {
        const auto& sp = sim.stored_paths[pidx];
        for (std::size_t i = 0; i < sp.size(); ++i) {
            const StateVector& s = sp[i];
            paths << pidx << ',' << i << ',' << detail::fmt_g17(s.t);
            for (double v : {s.r(), s.theta(), s.B(), s.P(), s.S(), s.chi(), s.gamma(), s.D()})
                paths << ',' << detail::fmt_g17(v);
            paths << '\n';
        }
    }
    detail::atomic_write(dir / "paths.csv", paths.str());

    std::ostringstream term;
    term << "path,D_T,P_T,S_T,B_T,r_T,theta_T,chi_T,gamma_T,int_D_dt,int_chiD_dt,failed\n";
    for (std::size_t i = 0; i < sim.paths.size(); ++i) {
        const PathResult& pr = sim.paths[i];
        term << i;
        for (double v : {pr.D_T, pr.P_T, pr.S_T, pr.B_T, pr.r_T, pr.theta_T, pr.chi_T,
                         pr.gamma_T, pr.int_D_dt, pr.int_chiD_dt})
            term << ',' << detail::fmt_g17(v);
        term << ',' << (pr.failed ? 1 : 0) << '\n';
    }
    detail::atomic_write(dir / "terminals.csv", term.str());
    detail::write_manifest(dir, "simulate", cfg, {"paths.csv", "terminals.csv"}, &sim);

    out << "simulated " << sim.n_paths << " paths, " << sim.n_failed << " failed, "
        << sim.truncation_events << " sqrt truncations, " << sim.elapsed_seconds << " s\n";
    out << "wrote " << (dir / "paths.csv").string() << ", " << (dir / "terminals.csv").string()
        << "\n";
    return 0;
}

inline int run_price_zcb(const CliOptions& o, std::ostream& out, std::ostream& err) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    ZcbPricing zp = price_zcb(cfg.params, cfg.sim_config());
    if (cfg.mode.short_rate != ShortRateMode::Simple) {
        err << "note: closed-form references assume simple mode; reporting estimates only\n";
        zp.discount.analytic = std::numeric_limits<double>::quiet_NaN();
        zp.deflated.analytic = std::numeric_limits<double>::quiet_NaN();
    }

    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    std::string csv = detail::pricing_header();
    csv += detail::pricing_row("E_D", zp.discount);
    csv += detail::pricing_row("E_DP", zp.deflated);
    detail::atomic_write(dir / "zcb.csv", csv);
    detail::write_manifest(dir, "price-zcb", cfg, {"zcb.csv"}, &zp.sim);

    detail::print_pricing(out, "E[D_T]", zp.discount);
    detail::print_pricing(out, "E[D_T P_T]", zp.deflated);
    out << "wrote " << (dir / "zcb.csv").string() << "\n";
    return 0;
}

inline int run_price_put(const CliOptions& o, std::ostream& out, std::ostream& err) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    double kim_ref = std::numeric_limits<double>::quiet_NaN();
    if (o.kim) {
        try {
            KimInputs ki{cfg.params.S0, cfg.strike,          cfg.T, cfg.params.sigma_S,
                         cfg.params.corr.rho_rS, cfg.params.r0, cfg.params.bond()};
            kim_ref = kim_put(ki);
        } catch (const Error& e) {
            err << "note: Kim reference unavailable (" << e.what() << ")\n";
        }
    }
    PutPricing pp = price_put(cfg.params, cfg.sim_config(), cfg.strike, kim_ref);

    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    std::string csv = detail::pricing_header();
    csv += detail::pricing_row("put", pp.put);
    csv += detail::pricing_row("E_DS", pp.deflated_stock);
    detail::atomic_write(dir / "put.csv", csv);
    detail::write_manifest(dir, "price-put", cfg, {"put.csv"}, &pp.sim);

    detail::print_pricing(out, "put(K=" + std::to_string(cfg.strike) + ")", pp.put);
    detail::print_pricing(out, "E[D_T S_T]", pp.deflated_stock);
    out << "wrote " << (dir / "put.csv").string() << "\n";
    return 0;
}

inline int run_price_cb(const CliOptions& o, std::ostream& out, std::ostream& err) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    if (cfg.mode.short_rate != ShortRateMode::Composite)
        throw ConfigError("price-cb requires short_rate_mode = composite");

    double analytic = std::numeric_limits<double>::quiet_NaN();
    const bool have_analytic = cfg.mode.eta == EtaMode::Constant;
    if (have_analytic)
        analytic = longstaff_cb(detail::longstaff_from(cfg), cfg.dt);
    else
        err << "note: closed form requires eta_mode = constant; reporting estimate only\n";

    CbPricing cp = price_cb(cfg.params, cfg.sim_config(), cfg.coupon, cfg.loss, analytic);

    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    std::string csv = detail::pricing_header();
    csv += detail::pricing_row("cb", cp.cb);
    detail::atomic_write(dir / "cb.csv", csv);

    std::vector<std::string> files = {"cb.csv"};
    if (std::isfinite(o.calibrate_target)) {
        if (!have_analytic)
            throw ConfigError("--calibrate-target requires eta_mode = constant");
        std::ostringstream cal;
        cal << "loss,coupon\n";
        for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            LongstaffInputs in = detail::longstaff_from(cfg);
            in.loss = w;
            in.coupon = 0.0;
            const double cb0 = longstaff_cb(in, cfg.dt);
            in.coupon = 1.0;
            const double cb1 = longstaff_cb(in, cfg.dt);
            const double coupon = (o.calibrate_target - cb0) / (cb1 - cb0);
            cal << detail::fmt_g17(w) << ',' << detail::fmt_g17(coupon) << '\n';
        }
        detail::atomic_write(dir / "calibration.csv", cal.str());
        files.push_back("calibration.csv");
        out << "calibration written for target " << o.calibrate_target
            << " (price is linear in the coupon; one coupon per loss level)\n";
    }
    detail::write_manifest(dir, "price-cb", cfg, files, &cp.sim);

    detail::print_pricing(out, "cb(c=" + std::to_string(cfg.coupon) +
                                   ", loss=" + std::to_string(cfg.loss) + ")",
                          cp.cb);
    out << "wrote " << (dir / "cb.csv").string() << "\n";
    return 0;
}

inline int run_converge(const CliOptions& o, std::ostream& out, std::ostream& err) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    if (o.instrument != "zcb" && o.instrument != "cb")
        throw ConfigError("converge --instrument must be zcb or cb");
    if (o.instrument == "cb" && cfg.mode.short_rate != ShortRateMode::Composite)
        throw ConfigError("converge --instrument cb requires short_rate_mode = composite");
    if (o.ladder_start <= 0) throw ConfigError("ladder start must be positive");

    double cb_analytic = std::numeric_limits<double>::quiet_NaN();
    if (o.instrument == "cb") {
        if (cfg.mode.eta == EtaMode::Constant)
            cb_analytic = longstaff_cb(detail::longstaff_from(cfg), cfg.dt);
        else
            err << "note: closed form requires eta_mode = constant\n";
    }

    std::ostringstream csv;
    csv << "instrument,n_paths," << "estimate,se,analytic,abs_diff\n";
    for (std::int64_t n = o.ladder_start; n <= cfg.n_paths; n *= 2) {
        RunConfig step_cfg = cfg;
        step_cfg.n_paths = n;
        if (o.instrument == "zcb") {
            ZcbPricing zp = price_zcb(step_cfg.params, step_cfg.sim_config());
            csv << "zcb," << n << ',' << detail::fmt_g17(zp.discount.estimate) << ','
                << detail::fmt_g17(zp.discount.se) << ',' << detail::fmt_g17(zp.discount.analytic)
                << ',' << detail::fmt_g17(std::abs(zp.discount.diff())) << '\n';
        } else {
            CbPricing cp = price_cb(step_cfg.params, step_cfg.sim_config(), cfg.coupon, cfg.loss,
                                    cb_analytic);
            csv << "cb," << n << ',' << detail::fmt_g17(cp.cb.estimate) << ','
                << detail::fmt_g17(cp.cb.se) << ',' << detail::fmt_g17(cp.cb.analytic) << ','
                << detail::fmt_g17(std::abs(cp.cb.diff())) << '\n';
        }
        out << o.instrument << " n = " << n << " done\n";
    }

    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    detail::atomic_write(dir / "converge.csv", csv.str());
    detail::write_manifest(dir, "converge", cfg, {"converge.csv"}, nullptr);
    out << "wrote " << (dir / "converge.csv").string() << "\n";
    return 0;
}

inline int run_asymptotics(const CliOptions& o, std::ostream& out) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    const AsymptoticMoments am = asymptotic_moments(cfg.params, o.horizon, o.asy_dt, o.asy_paths,
                                                     cfg.scheme, cfg.seed, cfg.threads);

    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    std::ostringstream csv;
    csv << "quantity,mc,analytic\n";
    csv << "theta_mean," << detail::fmt_g17(am.theta.mc_mean) << ','
        << detail::fmt_g17(am.theta.an_mean) << '\n';
    csv << "theta_var," << detail::fmt_g17(am.theta.mc_var) << ','
        << detail::fmt_g17(am.theta.an_var) << '\n';
    csv << "r_mean," << detail::fmt_g17(am.r_mc_mean) << ",nan\n";
    csv << "r_var," << detail::fmt_g17(am.r_mc_var) << ",nan\n";
    detail::atomic_write(dir / "asymptotics.csv", csv.str());
    detail::write_manifest(dir, "asymptotics", cfg, {"asymptotics.csv"}, nullptr);

    out << "theta at t = " << o.horizon << ": mean " << am.theta.mc_mean << " (analytic "
        << am.theta.an_mean << "), var " << am.theta.mc_var << " (analytic " << am.theta.an_var
        << ")\n";
    out << "r at t = " << o.horizon << ": mean " << am.r_mc_mean << ", var " << am.r_mc_var
        << " (no closed form; drift carries the theta sqrt(r) term)\n";
    out << "wrote " << (dir / "asymptotics.csv").string() << "\n";
    return 0;
}

inline int run_portfolio(const CliOptions& o, std::ostream& out) {
    auto lr = detail::load_run(o);
    RunConfig cfg = lr.cfg;
    const PortfolioComparison pc =
        portfolio_histogram(cfg.params, cfg.sim_config(), cfg.portfolio_weights());

    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);

    std::ostringstream hist;
    hist << "bin_lo,bin_hi,count_plain,count_antithetic\n";
    const auto& h = pc.histogram;
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
        hist << detail::fmt_g17(h.edges[b]) << ',' << detail::fmt_g17(h.edges[b + 1]) << ','
             << h.counts[0][b] << ',' << h.counts[1][b] << '\n';
    detail::atomic_write(dir / "histogram.csv", hist.str());

    std::ostringstream sum;
    sum << "series,mean,se,variance,n\n";
    sum << "plain," << detail::fmt_g17(pc.plain.mean) << ',' << detail::fmt_g17(pc.plain.se())
        << ',' << detail::fmt_g17(pc.plain.variance) << ',' << pc.plain.n << '\n';
    sum << "antithetic," << detail::fmt_g17(pc.antithetic.mean) << ','
        << detail::fmt_g17(pc.antithetic.se()) << ',' << detail::fmt_g17(pc.antithetic.variance)
        << ',' << pc.antithetic.n << '\n';
    detail::atomic_write(dir / "portfolio.csv", sum.str());
    detail::write_manifest(dir, "portfolio", cfg, {"histogram.csv", "portfolio.csv"}, nullptr);

    out << "portfolio mean: plain " << pc.plain.mean << " (se " << pc.plain.se()
        << "), antithetic " << pc.antithetic.mean << " (se " << pc.antithetic.se() << ")\n";
    out << "wrote " << (dir / "histogram.csv").string() << ", "
        << (dir / "portfolio.csv").string() << "\n";
    return 0;
}

// Exit codes: 0 success, 2 configuration errors, 3 numerical failures.
inline int dispatch(const CliOptions& o, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    try {
        if (o.command == "validate") return run_validate(o, out);
        if (o.command == "simulate") return run_simulate(o, out);
        if (o.command == "price-zcb") return run_price_zcb(o, out, err);
        if (o.command == "price-put") return run_price_put(o, out, err);
        if (o.command == "price-cb") return run_price_cb(o, out, err);
        if (o.command == "converge") return run_converge(o, out, err);
        if (o.command == "asymptotics") return run_asymptotics(o, out);
        if (o.command == "portfolio") return run_portfolio(o, out);
        throw ConfigError("unknown command '" + o.command + "'");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace cli
}  // namespace esg

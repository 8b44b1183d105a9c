#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "esg/engine.hpp"

namespace esg {

// One run described as flat key = value lines ('#' starts a comment line).
struct RunConfig {
    ModelParams params;
    double T = 1.0;
    double dt = 0.01;
    std::int64_t n_paths = 0;
    std::uint64_t seed = 0;
    SchemeKind scheme = SchemeKind::Milstein2;
    bool antithetic = true;
    ModeFlags mode;
    double strike = 2.0;
    double coupon = 0.05;
    double loss = 0.5;
    double w_S = 0.15, w_P = 0.65, w_CB = 0.20;
    double failure_rate_limit = 1e-3;
    int store_paths = 0;
    int threads = 0;
    bool bond_maturity_set = false;

    TimeGrid grid() const {
        TimeGrid g;
        g.t0 = 0.0;
        g.dt = dt;
        g.n_steps = static_cast<int>(std::llround(T / dt));
        return g;
    }

    SimulationConfig sim_config() const {
        SimulationConfig c;
        c.grid = grid();
        c.n_paths = n_paths;
        c.seed = seed;
        c.scheme = scheme;
        c.antithetic = antithetic;
        c.mode = mode;
        c.failure_rate_limit = failure_rate_limit;
        c.threads = threads;
        c.store_first = store_paths;
        return c;
    }

    PortfolioWeights portfolio_weights() const {
        PortfolioWeights w;
        w.w_S = w_S;
        w.w_P = w_P;
        w.w_CB = w_CB;
        w.coupon = coupon;
        w.loss = loss;
        return w;
    }

    void validate() const {
        if (T <= 0.0 || dt <= 0.0) throw ConfigError("T and dt must be positive");
        const double steps = T / dt;
        if (std::abs(steps - std::llround(steps)) > 1e-9 * std::max(1.0, steps))
            throw ConfigError("T must be an integer multiple of dt");
        if (n_paths <= 0) throw ConfigError("n_paths must be positive");
        if (strike < 0.0) throw ConfigError("strike must be non-negative");
        if (loss < 0.0 || loss > 1.0) throw ConfigError("loss must lie in [0, 1]");
        if (coupon < 0.0) throw ConfigError("coupon must be non-negative");
        if (failure_rate_limit < 0.0 || failure_rate_limit > 1.0)
            throw ConfigError("failure_rate_limit must lie in [0, 1]");
        if (store_paths < 0) throw ConfigError("store_paths must be non-negative");
        if (threads < 0) throw ConfigError("threads must be non-negative");
        if (params.bond_maturity < T - 1e-12)
            throw ConfigError("bond_maturity must not precede the horizon T");
        try {
            params.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("model parameters invalid: ") + e.what());
        }
        if (mode.stock == StockMode::MartingaleConsistent && params.corr.rho_rS != 1.0)
            throw ConfigError("martingale-consistent stock mode requires rho_rS = 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double parse_double(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects a number, got '" + v + "'");
    }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects an integer, got '" + v + "'");
    }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects an unsigned integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v, int line) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' expects true/false/on/off/1/0, got '" + v + "'");
}

inline const std::vector<std::string>& required_keys() {
    static const std::vector<std::string> keys = {
        "a_r",      "b_r",     "sigma_r",     "r0",        "a_theta",   "b_theta",
        "sigma_theta", "theta0", "sigma_S",   "S0",        "sigma_chi", "chi0",
        "f",        "gamma0",  "rho_rS",      "rho_rChi",  "rho_rGamma", "rho_SChi",
        "rho_SGamma", "rho_ChiGamma", "n_paths", "seed"};
    return keys;
}

}  // namespace detail

inline const char* scheme_name(SchemeKind s) {
    switch (s) {
        case SchemeKind::Euler: return "euler";
        case SchemeKind::Milstein: return "milstein";
        case SchemeKind::Milstein2: return "milstein2";
    }
    return "milstein2";
}

inline SchemeKind scheme_from_name(const std::string& v, int line = 0) {
    if (v == "euler") return SchemeKind::Euler;
    if (v == "milstein") return SchemeKind::Milstein;
    if (v == "milstein2") return SchemeKind::Milstein2;
    throw ConfigError("line " + std::to_string(line) +
                      ": scheme must be euler, milstein or milstein2, got '" + v + "'");
}

// Parse key = value text. Unknown or duplicate keys and malformed values
// raise ConfigError with the offending line number; missing required keys
// are reported all at once.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool T_seen = false;

    while (std::getline(in, raw)) {
        ++line;
        const std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#') continue;
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value', got '" + s + "'");
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("line " + std::to_string(line) + ": empty key or value");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");

        ModelParams& p = cfg.params;
        if (key == "a_r") p.a_r = detail::parse_double(key, val, line);
        else if (key == "b_r") p.b_r = detail::parse_double(key, val, line);
        else if (key == "sigma_r") p.sigma_r = detail::parse_double(key, val, line);
        else if (key == "r0") p.r0 = detail::parse_double(key, val, line);
        else if (key == "a_theta") p.a_theta = detail::parse_double(key, val, line);
        else if (key == "b_theta") p.b_theta = detail::parse_double(key, val, line);
        else if (key == "sigma_theta") p.sigma_theta = detail::parse_double(key, val, line);
        else if (key == "theta0") p.theta0 = detail::parse_double(key, val, line);
        else if (key == "sigma_S") p.sigma_S = detail::parse_double(key, val, line);
        else if (key == "S0") p.S0 = detail::parse_double(key, val, line);
        else if (key == "sigma_chi") p.sigma_chi = detail::parse_double(key, val, line);
        else if (key == "chi0") p.chi0 = detail::parse_double(key, val, line);
        else if (key == "f") p.f = detail::parse_double(key, val, line);
        else if (key == "gamma0") p.gamma0 = detail::parse_double(key, val, line);
        else if (key == "eta_const") p.eta_const = detail::parse_double(key, val, line);
        else if (key == "bond_maturity") {
            p.bond_maturity = detail::parse_double(key, val, line);
            cfg.bond_maturity_set = true;
        } else if (key == "rho_rS") p.corr.rho_rS = detail::parse_double(key, val, line);
        else if (key == "rho_rChi") p.corr.rho_rChi = detail::parse_double(key, val, line);
        else if (key == "rho_rGamma") p.corr.rho_rGamma = detail::parse_double(key, val, line);
        else if (key == "rho_SChi") p.corr.rho_SChi = detail::parse_double(key, val, line);
        else if (key == "rho_SGamma") p.corr.rho_SGamma = detail::parse_double(key, val, line);
        else if (key == "rho_ChiGamma") p.corr.rho_ChiGamma = detail::parse_double(key, val, line);
        else if (key == "T") {
            cfg.T = detail::parse_double(key, val, line);
            T_seen = true;
        } else if (key == "dt") cfg.dt = detail::parse_double(key, val, line);
        else if (key == "n_paths") cfg.n_paths = detail::parse_int(key, val, line);
        else if (key == "seed") cfg.seed = detail::parse_uint(key, val, line);
        else if (key == "scheme") cfg.scheme = scheme_from_name(val, line);
        else if (key == "antithetic") cfg.antithetic = detail::parse_bool(key, val, line);
        else if (key == "short_rate_mode") {
            if (val == "simple") cfg.mode.short_rate = ShortRateMode::Simple;
            else if (val == "composite") cfg.mode.short_rate = ShortRateMode::Composite;
            else throw ConfigError("line " + std::to_string(line) +
                                   ": short_rate_mode must be simple or composite");
        } else if (key == "stock_mode") {
            if (val == "free") cfg.mode.stock = StockMode::Free;
            else if (val == "martingale") cfg.mode.stock = StockMode::MartingaleConsistent;
            else throw ConfigError("line " + std::to_string(line) +
                                   ": stock_mode must be free or martingale");
        } else if (key == "eta_mode") {
            if (val == "regularity") cfg.mode.eta = EtaMode::Regularity;
            else if (val == "constant") cfg.mode.eta = EtaMode::Constant;
            else throw ConfigError("line " + std::to_string(line) +
                                   ": eta_mode must be regularity or constant");
        } else if (key == "strike") cfg.strike = detail::parse_double(key, val, line);
        else if (key == "coupon") cfg.coupon = detail::parse_double(key, val, line);
        else if (key == "loss") cfg.loss = detail::parse_double(key, val, line);
        else if (key == "w_S") cfg.w_S = detail::parse_double(key, val, line);
        else if (key == "w_P") cfg.w_P = detail::parse_double(key, val, line);
        else if (key == "w_CB") cfg.w_CB = detail::parse_double(key, val, line);
        else if (key == "failure_rate_limit") cfg.failure_rate_limit = detail::parse_double(key, val, line);
        else if (key == "store_paths") cfg.store_paths = static_cast<int>(detail::parse_int(key, val, line));
        else if (key == "threads") cfg.threads = static_cast<int>(detail::parse_int(key, val, line));
        else throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }

    std::string missing;
    for (const auto& k : detail::required_keys())
        if (seen.find(k) == seen.end()) missing += missing.empty() ? k : ", " + k;
    if (!missing.empty()) throw ConfigError("missing required keys: " + missing);

    if (!cfg.bond_maturity_set) cfg.params.bond_maturity = cfg.T;
    (void)T_seen;
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Serialize a config so that parse_config(write_config(c)) reproduces it.
inline std::string write_config(const RunConfig& cfg) {
    std::ostringstream out;
    const ModelParams& p = cfg.params;
    auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << "\n"; };
    auto kd = [&](const char* k, double v) { kv(k, detail::fmt_g17(v)); };

    out << "# five-factor scenario generator run\n";
    kd("a_r", p.a_r);
    kd("b_r", p.b_r);
    kd("sigma_r", p.sigma_r);
    kd("r0", p.r0);
    kd("a_theta", p.a_theta);
    kd("b_theta", p.b_theta);
    kd("sigma_theta", p.sigma_theta);
    kd("theta0", p.theta0);
    kd("sigma_S", p.sigma_S);
    kd("S0", p.S0);
    kd("sigma_chi", p.sigma_chi);
    kd("chi0", p.chi0);
    kd("f", p.f);
    kd("gamma0", p.gamma0);
    kd("eta_const", p.eta_const);
    kd("bond_maturity", p.bond_maturity);
    kd("rho_rS", p.corr.rho_rS);
    kd("rho_rChi", p.corr.rho_rChi);
    kd("rho_rGamma", p.corr.rho_rGamma);
    kd("rho_SChi", p.corr.rho_SChi);
    kd("rho_SGamma", p.corr.rho_SGamma);
    kd("rho_ChiGamma", p.corr.rho_ChiGamma);
    kd("T", cfg.T);
    kd("dt", cfg.dt);
    kv("n_paths", std::to_string(cfg.n_paths));
    kv("seed", std::to_string(cfg.seed));
    kv("scheme", scheme_name(cfg.scheme));
    kv("antithetic", cfg.antithetic ? "true" : "false");
    kv("short_rate_mode", cfg.mode.short_rate == ShortRateMode::Composite ? "composite" : "simple");
    kv("stock_mode", cfg.mode.stock == StockMode::MartingaleConsistent ? "martingale" : "free");
    kv("eta_mode", cfg.mode.eta == EtaMode::Constant ? "constant" : "regularity");
    kd("strike", cfg.strike);
    kd("coupon", cfg.coupon);
    kd("loss", cfg.loss);
    kd("w_S", cfg.w_S);
    kd("w_P", cfg.w_P);
    kd("w_CB", cfg.w_CB);
    kd("failure_rate_limit", cfg.failure_rate_limit);
    kv("store_paths", std::to_string(cfg.store_paths));
    kv("threads", std::to_string(cfg.threads));
    return out.str();
}

}  // namespace esg

#pragma once

#include <cmath>
#include <string>

#include "esg/errors.hpp"
#include "esg/stats.hpp"

namespace esg {

// CIR discount bond P(t,T,r) = exp(-r C(T-t) - A(T-t)).
struct CirBond {
    double a = 0.0;      // level coefficient of the drift a - b r
    double b = 0.0;      // mean-reversion speed
    double sigma = 0.0;  // volatility of sigma sqrt(r)

    CirBond() = default;
    CirBond(double a_, double b_, double sigma_) : a(a_), b(b_), sigma(sigma_) {
        if (!(a > 0.0) || !(b > 0.0) || !(sigma >= 0.0))
            throw FormulaInapplicable("CirBond requires a, b > 0 and sigma >= 0");
    }

    double gamma() const { return 0.5 * std::sqrt(b * b + 2.0 * sigma * sigma); }

    struct Terms {
        double C = 0.0;     // C(tau)
        double A = 0.0;     // A(tau)
        double dC_dt = 0.0; // time partial at fixed maturity: dC/dt = -dC/dtau
        double dA_dt = 0.0;
    };

    // Overflow-safe evaluation: divide through by cosh and work with
    // q = exp(-2 gamma tau) instead of raw sinh/cosh.
    Terms terms(double tau) const {
        if (tau < 0.0)
            throw FormulaInapplicable("CirBond: maturity precedes evaluation time");
        const double g = gamma();
        const double u = g * tau;
        Terms t;
        if (tau == 0.0) {
            // C(0) = 0, A(0) = 0; dC/dtau = 1, dA/dtau = 0.
            t.dC_dt = -1.0;
            return t;
        }
        const double th = std::tanh(u);
        const double denom_over_cosh = g + 0.5 * b * th;
        t.C = th / denom_over_cosh;
        if (sigma == 0.0) {
            // Deterministic-rate limit: C = (1 - e^{-b tau})/b, A' = a C.
            t.A = a * (tau - t.C) / b;
        } else {
            // ln(gamma cosh u + b/2 sinh u) = u + ln((2g(1+q) + b(1-q))/4), q = e^{-2u}
            const double q = std::exp(-2.0 * u);
            const double log_denom = u + std::log(0.25 * (2.0 * g * (1.0 + q) + b * (1.0 - q)));
            t.A = -(2.0 * a / (sigma * sigma)) * (0.5 * b * tau + std::log(g) - log_denom);
        }
        // Riccati relations: dC/dtau = 1 - b C - sigma^2 C^2 / 2, dA/dtau = a C.
        t.dC_dt = -(1.0 - b * t.C - 0.5 * sigma * sigma * t.C * t.C);
        t.dA_dt = -a * t.C;
        return t;
    }
};

inline double zcb_price(const CirBond& bond, double t, double T, double r) {
    if (!(r >= 0.0)) throw FormulaInapplicable("zcb_price: r must be >= 0");
    const auto tm = bond.terms(T - t);
    return std::exp(-r * tm.C - tm.A);
}

// dP/dr = -C(T-t) P; always the analytic sensitivity, never a finite difference.
inline double zcb_dr(const CirBond& bond, double t, double T, double r) {
    const auto tm = bond.terms(T - t);
    return -tm.C * std::exp(-r * tm.C - tm.A);
}

// European option approximation under CIR rates (strike K, maturity T).
// The CIR coefficients map to delta = sigma_r, kappa = b_r - sigma_r,
// theta = a_r / kappa with the market-price-of-risk parameter set to one.
struct KimInputs {
    double S0 = 0.0;
    double K = 0.0;
    double T = 0.0;
    double sigma_S = 0.0;
    double rho_rS = 0.0;
    double r0 = 0.0;
    CirBond bond;

    double delta() const { return bond.sigma; }
    double kappa() const { return bond.b - bond.sigma; }
    double theta() const { return bond.a / kappa(); }

    void validate() const {
        if (!(S0 > 0.0) || !(K >= 0.0) || !(T > 0.0) || !(sigma_S > 0.0) || !(r0 > 0.0))
            throw FormulaInapplicable("KimInputs: need S0, T, sigma_S, r0 > 0 and K >= 0");
        if (kappa() == 0.0)
            throw FormulaInapplicable("KimInputs: kappa = b_r - sigma_r must be non-zero");
        if (!(theta() > 0.0))
            throw FormulaInapplicable("KimInputs: theta = a_r/(b_r - sigma_r) must be positive");
    }
};

inline double kim_call(const KimInputs& in) {
    in.validate();
    const double kap = in.kappa();
    const double thk = in.theta();
    const double T = in.T;
    const double E = std::exp(-kap * T);
    const double int_rstar = (in.r0 - thk) * (1.0 - E) / kap + thk * T;
    const double disc = std::exp(-int_rstar);
    const double sT = in.sigma_S * std::sqrt(T);
    const double K = std::max(in.K, 1e-300);
    const double d1 = (std::log(in.S0 / K) + int_rstar + 0.5 * in.sigma_S * in.sigma_S * T) / sT;
    const double d2 = d1 - sT;

    const double C0 = ((in.r0 - thk) * ((1.0 - E) / kap - T * E) +
                       thk * T * (1.0 - (1.0 - E) / kap)) / (kap * sT);
    const double rad = in.r0 - thk * (1.0 - E);
    if (rad < 0.0)
        throw FormulaInapplicable("kim_call: radicand r0 - theta(1 - e^{-kappa T}) < 0");
    const double eK = std::exp(kap * T);
    const double psi_arg =
        (thk * (2.0 * eK - 1.0) + in.r0 +
         2.0 * std::exp(0.5 * kap * T) * std::sqrt(thk * thk * (eK - 1.0) + thk * in.r0)) /
        ((std::sqrt(in.r0) + std::sqrt(thk)) * (std::sqrt(in.r0) + std::sqrt(thk)));
    if (!(psi_arg > 0.0))
        throw FormulaInapplicable("kim_call: psi log argument <= 0");
    const double psi = std::log(psi_arg);
    const double C11 =
        (2.0 * std::sqrt(thk) *
             ((1.0 + 2.0 * eK) * std::sqrt(in.r0) - 3.0 * std::exp(0.5 * kap * T) * std::sqrt(rad)) +
         psi * (thk * (1.0 + 2.0 * eK) - in.r0)) /
        (2.0 * eK * kap * kap * std::sqrt(thk));
    const double C1 = -in.rho_rS * C11 / (in.sigma_S * T);

    const double Phi1 = normal_cdf(d1), Phi2 = normal_cdf(d2);
    const double phi1 = normal_pdf(d1), phi2 = normal_pdf(d2);
    const double price = (in.S0 * Phi1 - K * disc * Phi2) +
                         in.delta() * C0 * (in.S0 * phi1 - K * disc * (phi2 - sT * Phi2)) +
                         in.delta() * C1 * (d2 * in.S0 * phi1 - d1 * K * disc * phi2);
    // The correction is first order in delta with coefficients of order
    // 1/kappa^2; outside its domain (near the money at small kappa) it can
    // breach the static bounds max(S0 - K P(0,T), 0) <= call <= S0. Refuse
    // rather than report an arbitrage.
    const double lower = std::max(in.S0 - in.K * zcb_price(in.bond, 0.0, T, in.r0), 0.0);
    const double slack = 1e-6 * in.S0;
    if (!(price <= in.S0 + slack) || !(price >= lower - slack))
        throw FormulaInapplicable("kim_call: correction breaches static price bounds");
    return price;
}

// Put through parity against the CIR discount bond.
inline double kim_put(const KimInputs& in) {
    return kim_call(in) + in.K * zcb_price(in.bond, 0.0, in.T, in.r0) - in.S0;
}

// Defaultable coupon bond of Longstaff-Mithal-Neis form: CIR-type intensity
// chi with constant drift inputs (e_chi frozen at time zero), arithmetic
// Brownian convenience yield with volatility eta, coupon rate c, loss omega.
struct LongstaffInputs {
    CirBond bond;
    double r0 = 0.0;
    double chi0 = 0.0;
    double gamma0 = 0.0;
    double sigma_chi = 0.0;
    double f = 0.0;
    double eta = 0.0;
    double e_chi = 0.0;  // r(0) chi(0) + f chi(0) + sigma_chi rho_rChi theta(0) sqrt(chi(0))
    double coupon = 0.0;
    double loss = 0.0;
    double T = 0.0;

    static LongstaffInputs make(const CirBond& bond, double r0, double chi0, double gamma0,
                                double sigma_chi, double f, double eta, double rho_rChi,
                                double theta0, double coupon, double loss, double T) {
        LongstaffInputs in;
        in.bond = bond;
        in.r0 = r0;
        in.chi0 = chi0;
        in.gamma0 = gamma0;
        in.sigma_chi = sigma_chi;
        in.f = f;
        in.eta = eta;
        in.e_chi = r0 * chi0 + f * chi0 + sigma_chi * rho_rChi * theta0 * std::sqrt(chi0);
        in.coupon = coupon;
        in.loss = loss;
        in.T = T;
        return in;
    }

    void validate() const {
        if (!(sigma_chi > 0.0) || !(f > 0.0) || !(T > 0.0) || !(chi0 >= 0.0))
            throw FormulaInapplicable("LongstaffInputs: need sigma_chi, f, T > 0 and chi0 >= 0");
        if (eta * eta * T * T * T / 6.0 > 700.0)
            throw FormulaInapplicable("LongstaffInputs: exp(eta^2 t^3/6) overflows");
    }
};

namespace detail {

struct LongstaffTerms {
    double A, B, C, G, H;
};

inline LongstaffTerms longstaff_terms(const LongstaffInputs& in, double t) {
    const double s2 = in.sigma_chi * in.sigma_chi;
    const double phi = std::sqrt(2.0 * s2 + in.f * in.f);
    const double kap = (in.f + phi) / (in.f - phi);  // < 0, so 1 - kap e^{phi t} > 0
    const double log_ratio = std::log((1.0 - kap) / (1.0 - kap * std::exp(phi * t)));
    const double base = in.e_chi * (in.f + phi) * t / s2;
    const double expo = 2.0 * in.e_chi / s2;
    LongstaffTerms lt;
    lt.A = std::exp(base + expo * log_ratio);
    lt.B = (in.f - phi) / s2 + 2.0 * phi / (s2 * (1.0 - kap * std::exp(phi * t)));
    lt.C = std::exp(in.eta * in.eta * t * t * t / 6.0);
    lt.G = (in.e_chi / phi) * (std::exp(phi * t) - 1.0) * std::exp(base + (expo + 1.0) * log_ratio);
    lt.H = std::exp(base + phi * t + (expo + 2.0) * log_ratio);
    return lt;
}

}  // namespace detail

// Composite Simpson quadrature on a grid of width quad_dt (default matches
// the simulation grid).
inline double longstaff_cb(const LongstaffInputs& in, double quad_dt = 0.01) {
    in.validate();
    if (!(quad_dt > 0.0)) throw FormulaInapplicable("longstaff_cb: quad_dt must be > 0");
    const auto density = [&](double t) {
        const auto lt = detail::longstaff_terms(in, t);
        const double common = std::exp(lt.B * in.chi0) * lt.C *
                              zcb_price(in.bond, 0.0, t, in.r0) * std::exp(-in.gamma0 * t);
        return std::pair<double, double>(lt.A * common, common * (lt.G + lt.H * in.chi0));
    };
    int n = std::max(2, int(std::llround(in.T / quad_dt)));
    const double coupon_leg =
        in.coupon == 0.0 ? 0.0
                         : in.coupon * simpson([&](double t) { return density(t).first; },
                                               0.0, in.T, n);
    const double recovery_leg =
        in.loss == 1.0 ? 0.0
                       : (1.0 - in.loss) * simpson([&](double t) { return density(t).second; },
                                                   0.0, in.T, n);
    const auto ltT = detail::longstaff_terms(in, in.T);
    const double principal = ltT.A * std::exp(ltT.B * in.chi0) * ltT.C *
                             zcb_price(in.bond, 0.0, in.T, in.r0) * std::exp(-in.gamma0 * in.T);
    return coupon_leg + principal + recovery_leg;
}

}  // namespace esg

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "esg/analytic.hpp"
#include "esg/correlation.hpp"
#include "esg/errors.hpp"

namespace esg {

enum class ShortRateMode { Simple, Composite };
enum class StockMode { Free, MartingaleConsistent };
enum class EtaMode { Regularity, Constant };

struct ModeFlags {
    ShortRateMode short_rate = ShortRateMode::Simple;
    StockMode stock = StockMode::Free;
    EtaMode eta = EtaMode::Regularity;
};

constexpr double kThetaFloor = 1e-8;

struct ModelParams {
    double a_r = 0.0, b_r = 0.0, sigma_r = 0.0;
    double a_theta = 0.0, b_theta = 0.0, sigma_theta = 0.0;
    double sigma_S = 0.0;
    double sigma_chi = 0.0;
    double f = 0.0;
    double r0 = 0.0, theta0 = 0.0, S0 = 0.0, chi0 = 0.0, gamma0 = 0.0;
    double bond_maturity = 1.0;
    double eta_const = 0.0;  // gamma volatility when EtaMode::Constant
    CorrelationSpec corr;

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
        };
        auto nonneg = [](double v, const char* name) {
            if (!(v >= 0.0)) throw ConfigError(std::string(name) + " must be >= 0");
        };
        pos(a_r, "a_r"); pos(b_r, "b_r"); pos(a_theta, "a_theta"); pos(b_theta, "b_theta");
        nonneg(sigma_r, "sigma_r"); nonneg(sigma_theta, "sigma_theta");
        nonneg(sigma_S, "sigma_S"); nonneg(sigma_chi, "sigma_chi");
        pos(f, "f");
        pos(r0, "r0"); pos(theta0, "theta0"); pos(S0, "S0");
        nonneg(chi0, "chi0");
        pos(bond_maturity, "bond_maturity");
        corr.validate();
    }

    CirBond bond() const { return CirBond(a_r, b_r, sigma_r); }
};

// Simulated state: indices into x.
enum StateIndex : int { iR = 0, iTheta = 1, iB = 2, iP = 3, iS = 4, iChi = 5, iGamma = 6, iD = 7 };
constexpr int kNumStates = 8;

struct StateVector {
    double t = 0.0;
    std::array<double, kNumStates> x{};

    double r() const { return x[iR]; }
    double theta() const { return x[iTheta]; }
    double B() const { return x[iB]; }
    double P() const { return x[iP]; }
    double S() const { return x[iS]; }
    double chi() const { return x[iChi]; }
    double gamma() const { return x[iGamma]; }
    double D() const { return x[iD]; }

    static StateVector initial(const ModelParams& p) {
        StateVector s;
        s.t = 0.0;
        s.x[iR] = p.r0;
        s.x[iTheta] = p.theta0;
        s.x[iB] = 1.0;
        s.x[iP] = zcb_price(p.bond(), 0.0, p.bond_maturity, p.r0);
        s.x[iS] = p.S0;
        s.x[iChi] = p.chi0;
        s.x[iGamma] = p.gamma0;
        s.x[iD] = 1.0;
        return s;
    }
};

// Discount rate entering the B, P, S, chi, D rows: r in Simple mode,
// r + chi + gamma in Composite mode.
inline double discount_rate(const StateVector& s, ShortRateMode m) {
    return m == ShortRateMode::Composite ? s.r() + s.chi() + s.gamma() : s.r();
}

struct RegularityDrifts {
    double mu_S = 0.0;  // total stock drift rate
    double e = 0.0;     // intensity drift level so that drift = e - f chi
    double eta = 0.0;   // convenience-yield volatility scale
    bool eta_is_regularity = true;
};

// Drift restrictions that make the deflated prices martingales.
inline RegularityDrifts regularity_drifts(const StateVector& s, const ModelParams& p,
                                          const ModeFlags& mode) {
    const double R = discount_rate(s, mode.short_rate);
    RegularityDrifts d;
    if (mode.stock == StockMode::MartingaleConsistent)
        d.mu_S = R + s.theta() * s.theta();
    else
        d.mu_S = R + s.theta() * p.sigma_S * p.corr.rho_rS;
    d.e = R * s.chi() + p.f * s.chi() +
          p.sigma_chi * p.corr.rho_rChi * s.theta() * std::sqrt(std::max(s.chi(), 0.0));
    if (mode.eta == EtaMode::Constant) {
        d.eta = p.eta_const;
        d.eta_is_regularity = false;
    } else if (s.gamma() == 0.0) {
        d.eta = 0.0;  // numerator vanishes regardless of the denominator
    } else if (p.corr.rho_rGamma == 0.0) {
        throw ZeroRhoRGamma("regularity eta undefined: rho_rGamma = 0 with gamma != 0");
    } else if (s.theta() <= kThetaFloor) {
        throw ThetaUnderflow("theta <= floor while evaluating eta");
    } else {
        d.eta = -s.gamma() * R / (p.corr.rho_rGamma * s.theta());
    }
    return d;
}

struct KResiduals {
    double K_Psi = 0.0;
    double K_Gamma = 0.0;
    double K_I = 0.0;
    // Sum of absolute term magnitudes, for relative-scale assertions.
    double scale_Psi = 0.0;
    double scale_Gamma = 0.0;
    double scale_I = 0.0;
};

// Residuals of the martingale conditions; identically zero when the drifts
// satisfy the regularity restrictions.
inline KResiduals residual_K_terms(const StateVector& s, const ModelParams& p,
                                   const ModeFlags& mode, const RegularityDrifts& d) {
    const auto L = recursive_loadings(p.corr);
    const double R = discount_rate(s, mode.short_rate);
    const double th = s.theta();
    const double sqchi = std::sqrt(std::max(s.chi(), 0.0));
    const double rho_rS = p.corr.rho_rS;
    const double s_rS = std::sqrt(1.0 - rho_rS * rho_rS);
    const double rp_SChi = L(2, 1), rp_ChiChi = L(2, 2);
    const double rpp_SGamma = L(3, 1), rpp_ChiGamma = L(3, 2), rpp_GammaGamma = L(3, 3);
    const double sigma_S = mode.stock == StockMode::MartingaleConsistent ? th : p.sigma_S;

    KResiduals k;
    const double excess = R + th * sigma_S * rho_rS - d.mu_S;

    const double t_psi = excess / (sigma_S * s_rS);
    k.K_Psi = t_psi;
    k.scale_Psi = std::fabs(R / (sigma_S * s_rS)) + std::fabs(th * rho_rS / s_rS) +
                  std::fabs(d.mu_S / (sigma_S * s_rS));

    if (!(sqchi > 0.0))
        throw FormulaInapplicable("residual_K_terms: chi must be positive");
    const double g1 = th * p.corr.rho_rChi / rp_ChiChi;
    const double g2 = (R * s.chi() - d.e + p.f * s.chi()) / (p.sigma_chi * rp_ChiChi * sqchi);
    const double g3 = rp_SChi * excess / (rp_ChiChi * sigma_S * s_rS);
    k.K_Gamma = g1 + g2 + g3;
    k.scale_Gamma = std::fabs(g1) +
                    (std::fabs(R * s.chi()) + std::fabs(d.e) + std::fabs(p.f * s.chi())) /
                        std::fabs(p.sigma_chi * rp_ChiChi * sqchi) +
                    std::fabs(rp_SChi / (rp_ChiChi * sigma_S * s_rS)) *
                        (std::fabs(R) + std::fabs(th * sigma_S * rho_rS) + std::fabs(d.mu_S));

    const double i1 = p.corr.rho_rGamma * th / rpp_GammaGamma;
    double i2;
    if (d.eta_is_regularity) {
        // R gamma / eta = -rho_rGamma theta by construction; evaluate the
        // cancelled form so gamma = 0 stays finite.
        i2 = -p.corr.rho_rGamma * th / rpp_GammaGamma;
    } else {
        if (d.eta == 0.0)
            throw FormulaInapplicable("residual_K_terms: eta = 0 outside regularity mode");
        i2 = R * s.gamma() / (d.eta * rpp_GammaGamma);
    }
    const double i3 = -rpp_ChiGamma * p.corr.rho_rChi * th / (rpp_GammaGamma * rp_ChiChi);
    const double i4 = rpp_ChiGamma * (d.e - R * s.chi() - p.f * s.chi()) /
                      (rpp_GammaGamma * rp_ChiChi * p.sigma_chi * sqchi);
    const double i5 = (rpp_SGamma * rp_ChiChi - rpp_ChiGamma * rp_SChi) * excess /
                      (rpp_GammaGamma * rp_ChiChi * sigma_S * s_rS);
    k.K_I = i1 + i2 + i3 + i4 + i5;
    k.scale_I = std::fabs(i1) + std::fabs(i2) + std::fabs(i3) + std::fabs(i4) + std::fabs(i5) +
                std::fabs(th / rpp_GammaGamma);
    return k;
}

inline KResiduals residual_K_terms(const StateVector& s, const ModelParams& p,
                                   const ModeFlags& mode) {
    return residual_K_terms(s, p, mode, regularity_drifts(s, p, mode));
}

struct FellerReport {
    struct Entry {
        std::string process;
        double lhs = 0.0;  // 2 a
        double rhs = 0.0;  // sigma^2
        bool holds = false;
        bool state_dependent = false;
    };
    Entry r, theta, chi;
    bool all_hold() const { return r.holds && theta.holds && chi.holds; }
};

// 2a > sigma^2 for the square-root factors; the chi entry is evaluated at
// the initial state because its drift level e depends on the state.
inline FellerReport feller_check(const ModelParams& p, const ModeFlags& mode) {
    FellerReport rep;
    rep.r = {"r", 2.0 * p.a_r, p.sigma_r * p.sigma_r,
             2.0 * p.a_r > p.sigma_r * p.sigma_r, false};
    rep.theta = {"theta", 2.0 * p.a_theta, p.sigma_theta * p.sigma_theta,
                 2.0 * p.a_theta > p.sigma_theta * p.sigma_theta, false};
    const auto s0 = StateVector::initial(p);
    const double R0 = discount_rate(s0, mode.short_rate);
    const double e0 = R0 * p.chi0 + p.f * p.chi0 +
                      p.sigma_chi * p.corr.rho_rChi * p.theta0 * std::sqrt(p.chi0);
    rep.chi = {"chi", 2.0 * e0, p.sigma_chi * p.sigma_chi,
               2.0 * e0 > p.sigma_chi * p.sigma_chi, true};
    return rep;
}

// Drift vector and diffusion matrix of the joint system at one state.
// Rows follow StateIndex; columns are the independent drivers of the
// loading matrix plus the dedicated theta driver in the last column.
struct DriftDiffusion {
    int n_states = kNumStates;
    int n_drivers = 5;
    std::array<double, kNumStates> a{};
    std::array<std::array<double, 5>, kNumStates> b{};
};

// bond_sensitivity is dP/dr from the analytic module (zcb_dr), evaluated
// at (t, bond_maturity, r).
inline DriftDiffusion assemble_system(const StateVector& s, const ModelParams& p,
                                      const ModeFlags& mode, const LoadingMatrix& L,
                                      double bond_sensitivity) {
    for (double v : s.x)
        if (!std::isfinite(v)) throw NonFiniteState("assemble_system: non-finite state");
    const auto d = regularity_drifts(s, p, mode);
    const double R = discount_rate(s, mode.short_rate);
    const double sr = std::sqrt(std::max(s.r(), 0.0));
    const double sth = std::sqrt(std::max(s.theta(), 0.0));
    const double schi = std::sqrt(std::max(s.chi(), 0.0));

    DriftDiffusion dd;
    dd.n_drivers = L.cols + 1;
    const int thCol = L.cols;

    dd.a[iR] = p.a_r - p.b_r * s.r() + s.theta() * p.sigma_r * sr;
    dd.a[iTheta] = p.a_theta - p.b_theta * s.theta();
    dd.a[iB] = s.B() * R;
    dd.a[iP] = s.P() * R + bond_sensitivity * p.sigma_r * sr * s.theta();
    dd.a[iS] = s.S() * d.mu_S;
    dd.a[iChi] = d.e - p.f * s.chi();
    dd.a[iGamma] = 0.0;
    dd.a[iD] = -R * s.D();

    dd.b[iR][0] = p.sigma_r * sr;
    dd.b[iTheta][thCol] = p.sigma_theta * sth;
    dd.b[iP][0] = bond_sensitivity * p.sigma_r * sr;
    if (mode.stock == StockMode::MartingaleConsistent) {
        dd.b[iS][0] = s.S() * s.theta();
    } else {
        dd.b[iS][0] = s.S() * p.sigma_S * L(1, 0);
        dd.b[iS][1] = s.S() * p.sigma_S * L(1, 1);
    }
    for (int j = 0; j < L.cols; ++j) {
        dd.b[iChi][j] = p.sigma_chi * L(2, j) * schi;
        dd.b[iGamma][j] = d.eta * L(3, j);
    }
    dd.b[iD][0] = -s.D() * s.theta();
    return dd;
}

}  // namespace esg

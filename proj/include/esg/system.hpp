#pragma once

#include <array>
#include <cmath>

#include "esg/dynamics.hpp"

namespace esg {

constexpr int kMaxDrivers = 5;
constexpr int kMaxBnz = 16;

// One SDE coefficient with its registered partial derivatives: value,
// explicit time partial, gradient in the states, and the non-zero second
// partials (stored once per unordered pair, i <= j).
struct Coeff {
    double value = 0.0;
    double d_t = 0.0;
    std::array<double, kNumStates> g{};
    struct H {
        int i = 0, j = 0;
        double v = 0.0;
    };
    std::array<H, 8> h{};
    int nh = 0;

    void set_h(int slot, int i, int j, double v) {
        h[slot] = {i, j, v};
        if (slot >= nh) nh = slot + 1;
    }
};

// Drift vector, diffusion matrix and instantaneous covariance of a system
// at one state, with every coefficient's registered partials alongside.
struct SystemTable {
    int n_states = kNumStates;
    int n_drivers = kMaxDrivers;
    int theta_col = kMaxDrivers - 1;
    Coeff a[kNumStates];
    Coeff b[kNumStates][kMaxDrivers];
    struct BRef {
        int row = 0, col = 0;
    };
    BRef bnz[kMaxBnz];
    int nbnz = 0;
    double Sigma[kNumStates][kNumStates]{};

    void add_bnz(int row, int col) { bnz[nbnz++] = {row, col}; }

    void finalize_sigma() {
        for (int i = 0; i < n_states; ++i)
            for (int j = 0; j < n_states; ++j) Sigma[i][j] = 0.0;
        for (int e1 = 0; e1 < nbnz; ++e1)
            for (int e2 = 0; e2 < nbnz; ++e2) {
                if (bnz[e1].col != bnz[e2].col) continue;
                Sigma[bnz[e1].row][bnz[e2].row] +=
                    b[bnz[e1].row][bnz[e1].col].value * b[bnz[e2].row][bnz[e2].col].value;
            }
    }

    DriftDiffusion to_drift_diffusion() const {
        DriftDiffusion dd;
        dd.n_states = n_states;
        dd.n_drivers = n_drivers;
        for (int i = 0; i < n_states; ++i) {
            dd.a[i] = a[i].value;
            for (int k = 0; k < n_drivers && k < 5; ++k) dd.b[i][k] = b[i][k].value;
        }
        return dd;
    }
};

// Fixed per-run description of the five-factor system.
struct SystemCtx {
    ModelParams p;
    ModeFlags mode;
    LoadingMatrix L;
    CirBond bond;
    double comp = 0.0;  // 1 in Composite mode
    bool mc_stock = false;
    int n_drivers = 5;
    int theta_col = 4;

    static SystemCtx make(const ModelParams& params, const ModeFlags& mode) {
        SystemCtx c;
        c.p = params;
        c.mode = mode;
        c.mc_stock = mode.stock == StockMode::MartingaleConsistent;
        c.L = c.mc_stock ? reduced_loadings(params.corr) : recursive_loadings(params.corr);
        c.bond = params.bond();
        c.comp = mode.short_rate == ShortRateMode::Composite ? 1.0 : 0.0;
        c.n_drivers = c.L.cols + 1;
        c.theta_col = c.L.cols;
        return c;
    }
};

namespace detail {

struct SqrtPieces {
    double s = 0.0;        // sqrt(max(x, 0))
    double inv2s = 0.0;    // 1/(2 sqrt x), 0 in the truncated region
    double inv_s = 0.0;    // 1/sqrt x
    double m32 = 0.0;      // x^{-3/2}
    bool truncated = false;
};

inline SqrtPieces sqrt_pieces(double x) {
    SqrtPieces q;
    if (x > 0.0) {
        q.s = std::sqrt(x);
        q.inv_s = 1.0 / q.s;
        q.inv2s = 0.5 * q.inv_s;
        q.m32 = q.inv_s / x;
    } else {
        q.truncated = x < 0.0;
    }
    return q;
}

}  // namespace detail

// Evaluate the five-factor table at one state. bond_terms must be
// CirBond::terms(bond_maturity - t) for the state's time. Returns the
// number of sqrt truncation events encountered.
inline int eval_system(const SystemCtx& c, const CirBond::Terms& bt, const StateVector& s,
                       SystemTable& t) {
    const auto d = regularity_drifts(s, c.p, c.mode);
    const double comp = c.comp;
    const double r = s.r(), th = s.theta(), B = s.B(), P = s.P(), S = s.S();
    const double chi = s.chi(), gamma = s.gamma(), D = s.D();
    const double R = discount_rate(s, c.mode.short_rate);

    const auto qr = detail::sqrt_pieces(r);
    const auto qth = detail::sqrt_pieces(th);
    const auto qchi = detail::sqrt_pieces(chi);
    const int truncations = (qr.truncated ? 1 : 0) + (qth.truncated ? 1 : 0) +
                            (qchi.truncated ? 1 : 0);

    t.n_states = kNumStates;
    t.n_drivers = c.n_drivers;
    t.theta_col = c.theta_col;
    t.nbnz = 0;
    for (int i = 0; i < kNumStates; ++i)
        for (int k = 0; k < kMaxDrivers; ++k) t.b[i][k].value = 0.0;

    const double sig_r = c.p.sigma_r, sig_th = c.p.sigma_theta;
    const double sig_S = c.p.sigma_S, sig_chi = c.p.sigma_chi;

    // Closed-form bond pieces at the simulated r.
    const double E = std::exp(-r * bt.C - bt.A);
    const double Pr = -bt.C * E;
    const double Prr = bt.C * bt.C * E;
    const double Prrr = -bt.C * bt.C * bt.C * E;
    const double Et = E * (-r * bt.dC_dt - bt.dA_dt);
    const double Prt = -bt.dC_dt * E - bt.C * Et;

    // --- drift row r ---
    {
        Coeff& f = t.a[iR];
        f.value = c.p.a_r - c.p.b_r * r + th * sig_r * qr.s;
        f.d_t = 0.0;
        f.g[iR] = -c.p.b_r + th * sig_r * qr.inv2s;
        f.g[iTheta] = sig_r * qr.s;
        f.set_h(0, iR, iR, -0.25 * th * sig_r * qr.m32);
        f.set_h(1, iR, iTheta, sig_r * qr.inv2s);
        f.nh = 2;
    }
    // --- drift row theta ---
    {
        Coeff& f = t.a[iTheta];
        f.value = c.p.a_theta - c.p.b_theta * th;
        f.d_t = 0.0;
        f.g[iTheta] = -c.p.b_theta;
        f.nh = 0;
    }
    // --- drift row B ---
    {
        Coeff& f = t.a[iB];
        f.value = B * R;
        f.d_t = 0.0;
        f.g[iB] = R;
        f.g[iR] = B;
        f.g[iChi] = comp * B;
        f.g[iGamma] = comp * B;
        f.set_h(0, iR, iB, 1.0);
        f.set_h(1, iB, iChi, comp);
        f.set_h(2, iB, iGamma, comp);
        f.nh = 3;
    }
    // --- drift row P ---
    {
        Coeff& f = t.a[iP];
        f.value = P * R + Pr * sig_r * qr.s * th;
        f.d_t = th * sig_r * qr.s * Prt;
        f.g[iP] = R;
        f.g[iR] = P + th * sig_r * (Prr * qr.s + Pr * qr.inv2s);
        f.g[iTheta] = Pr * sig_r * qr.s;
        f.g[iChi] = comp * P;
        f.g[iGamma] = comp * P;
        f.set_h(0, iR, iP, 1.0);
        f.set_h(1, iP, iChi, comp);
        f.set_h(2, iP, iGamma, comp);
        f.set_h(3, iR, iR,
                th * sig_r * (Prrr * qr.s + Prr * qr.inv_s - 0.25 * Pr * qr.m32));
        f.set_h(4, iR, iTheta, sig_r * (Prr * qr.s + Pr * qr.inv2s));
        f.nh = 5;
    }
    // --- drift row S ---
    if (c.mc_stock) {
        Coeff& f = t.a[iS];
        f.value = S * (R + th * th);
        f.d_t = 0.0;
        f.g[iS] = R + th * th;
        f.g[iR] = S;
        f.g[iTheta] = 2.0 * S * th;
        f.g[iChi] = comp * S;
        f.g[iGamma] = comp * S;
        f.set_h(0, iR, iS, 1.0);
        f.set_h(1, iS, iTheta, 2.0 * th);
        f.set_h(2, iTheta, iTheta, 2.0 * S);
        f.set_h(3, iS, iChi, comp);
        f.set_h(4, iS, iGamma, comp);
        f.nh = 5;
    } else {
        Coeff& f = t.a[iS];
        const double drift_rate = R + th * sig_S * c.p.corr.rho_rS;
        f.value = S * drift_rate;
        f.d_t = 0.0;
        f.g[iS] = drift_rate;
        f.g[iR] = S;
        f.g[iTheta] = S * sig_S * c.p.corr.rho_rS;
        f.g[iChi] = comp * S;
        f.g[iGamma] = comp * S;
        f.set_h(0, iR, iS, 1.0);
        f.set_h(1, iS, iTheta, sig_S * c.p.corr.rho_rS);
        f.set_h(2, iS, iChi, comp);
        f.set_h(3, iS, iGamma, comp);
        f.nh = 4;
    }
    // --- drift row chi ---
    {
        Coeff& f = t.a[iChi];
        f.value = d.e - c.p.f * chi;  // = R chi + sig_chi rho_rChi theta sqrt(chi)
        f.d_t = 0.0;
        const double rc = c.p.corr.rho_rChi;
        f.g[iR] = chi;
        f.g[iTheta] = sig_chi * rc * qchi.s;
        f.g[iChi] = R + comp * chi + sig_chi * rc * th * qchi.inv2s;
        f.g[iGamma] = comp * chi;
        f.set_h(0, iR, iChi, 1.0);
        f.set_h(1, iTheta, iChi, sig_chi * rc * qchi.inv2s);
        f.set_h(2, iChi, iChi, 2.0 * comp - 0.25 * sig_chi * rc * th * qchi.m32);
        f.set_h(3, iChi, iGamma, comp);
        f.nh = 4;
    }
    // --- drift row gamma ---
    {
        Coeff& f = t.a[iGamma];
        f.value = 0.0;
        f.d_t = 0.0;
        f.nh = 0;
    }
    // --- drift row D ---
    {
        Coeff& f = t.a[iD];
        f.value = -R * D;
        f.d_t = 0.0;
        f.g[iR] = -D;
        f.g[iChi] = -comp * D;
        f.g[iGamma] = -comp * D;
        f.g[iD] = -R;
        f.set_h(0, iR, iD, -1.0);
        f.set_h(1, iChi, iD, -comp);
        f.set_h(2, iGamma, iD, -comp);
        f.nh = 3;
    }

    // --- diffusion ---
    {
        Coeff& f = t.b[iR][0];
        f.value = sig_r * qr.s;
        f.d_t = 0.0;
        f.g[iR] = sig_r * qr.inv2s;
        f.set_h(0, iR, iR, -0.25 * sig_r * qr.m32);
        f.nh = 1;
        t.add_bnz(iR, 0);
    }
    {
        Coeff& f = t.b[iTheta][c.theta_col];
        f.value = sig_th * qth.s;
        f.d_t = 0.0;
        f.g[iTheta] = sig_th * qth.inv2s;
        f.set_h(0, iTheta, iTheta, -0.25 * sig_th * qth.m32);
        f.nh = 1;
        t.add_bnz(iTheta, c.theta_col);
    }
    {
        Coeff& f = t.b[iP][0];
        f.value = Pr * sig_r * qr.s;
        f.d_t = sig_r * qr.s * Prt;
        f.g[iR] = sig_r * (Prr * qr.s + Pr * qr.inv2s);
        f.set_h(0, iR, iR,
                sig_r * (Prrr * qr.s + Prr * qr.inv_s - 0.25 * Pr * qr.m32));
        f.nh = 1;
        t.add_bnz(iP, 0);
    }
    if (c.mc_stock) {
        Coeff& f = t.b[iS][0];
        f.value = S * th;
        f.d_t = 0.0;
        f.g[iS] = th;
        f.g[iTheta] = S;
        f.set_h(0, iS, iTheta, 1.0);
        f.nh = 1;
        t.add_bnz(iS, 0);
    } else {
        Coeff& f0 = t.b[iS][0];
        f0.value = S * sig_S * c.L(1, 0);
        f0.d_t = 0.0;
        f0.g[iS] = sig_S * c.L(1, 0);
        f0.nh = 0;
        t.add_bnz(iS, 0);
        Coeff& f1 = t.b[iS][1];
        f1.value = S * sig_S * c.L(1, 1);
        f1.d_t = 0.0;
        f1.g[iS] = sig_S * c.L(1, 1);
        f1.nh = 0;
        t.add_bnz(iS, 1);
    }
    const int chi_cols = c.mc_stock ? 2 : 3;
    for (int j = 0; j < chi_cols; ++j) {
        Coeff& f = t.b[iChi][j];
        const double lj = sig_chi * c.L(2, j);
        f.value = lj * qchi.s;
        f.d_t = 0.0;
        f.g[iChi] = lj * qchi.inv2s;
        f.set_h(0, iChi, iChi, -0.25 * lj * qchi.m32);
        f.nh = 1;
        t.add_bnz(iChi, j);
    }
    for (int j = 0; j < c.L.cols; ++j) {
        Coeff& f = t.b[iGamma][j];
        const double lj = c.L(3, j);
        if (d.eta_is_regularity) {
            const double rg = c.p.corr.rho_rGamma;
            // gamma = 0 freezes the row; avoid an infinite 1/(rho theta) there.
            const double inv_rgth =
                (gamma == 0.0 && (rg == 0.0 || th == 0.0)) ? 0.0 : 1.0 / (rg * th);
            f.value = lj * d.eta;  // = -lj gamma R inv_rgth
            f.d_t = 0.0;
            f.g[iR] = -lj * gamma * inv_rgth;
            f.g[iTheta] = lj * gamma * R * inv_rgth / th;
            f.g[iChi] = -comp * lj * gamma * inv_rgth;
            f.g[iGamma] = -lj * (R + comp * gamma) * inv_rgth;
            f.set_h(0, iR, iTheta, lj * gamma * inv_rgth / th);
            f.set_h(1, iR, iGamma, -lj * inv_rgth);
            f.set_h(2, iTheta, iTheta, -2.0 * lj * gamma * R * inv_rgth / (th * th));
            f.set_h(3, iTheta, iChi, comp * lj * gamma * inv_rgth / th);
            f.set_h(4, iTheta, iGamma, lj * (R + comp * gamma) * inv_rgth / th);
            f.set_h(5, iChi, iGamma, -comp * lj * inv_rgth);
            f.set_h(6, iGamma, iGamma, -2.0 * comp * lj * inv_rgth);
            f.nh = 7;
        } else {
            f.value = lj * d.eta;
            f.d_t = 0.0;
            f.g.fill(0.0);
            f.nh = 0;
        }
        t.add_bnz(iGamma, j);
    }
    {
        Coeff& f = t.b[iD][0];
        f.value = -D * th;
        f.d_t = 0.0;
        f.g[iD] = -th;
        f.g[iTheta] = -D;
        f.set_h(0, iTheta, iD, -1.0);
        f.nh = 1;
        t.add_bnz(iD, 0);
    }

    t.finalize_sigma();
    return truncations;
}

// Reduced (r, theta, D) system used for long-horizon moment studies and
// the scalar discount-bond convergence harness. States (r, theta, D) in
// slots 0..2; drivers (W_r, W_theta).
struct RateThetaCtx {
    double a_r = 0.0, b_r = 0.0, sigma_r = 0.0;
    double a_theta = 0.0, b_theta = 0.0, sigma_theta = 0.0;
};

inline int eval_rate_theta(const RateThetaCtx& c, double time, const double* x, SystemTable& t) {
    (void)time;
    const double r = x[0], th = x[1], D = x[2];
    const auto qr = detail::sqrt_pieces(r);
    const auto qth = detail::sqrt_pieces(th);

    t.n_states = 3;
    t.n_drivers = 2;
    t.theta_col = 1;
    t.nbnz = 0;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) t.b[i][k].value = 0.0;

    {
        Coeff& f = t.a[0];
        f.value = c.a_r - c.b_r * r + th * c.sigma_r * qr.s;
        f.d_t = 0.0;
        f.g[0] = -c.b_r + th * c.sigma_r * qr.inv2s;
        f.g[1] = c.sigma_r * qr.s;
        f.g[2] = 0.0;
        f.set_h(0, 0, 0, -0.25 * th * c.sigma_r * qr.m32);
        f.set_h(1, 0, 1, c.sigma_r * qr.inv2s);
        f.nh = 2;
    }
    {
        Coeff& f = t.a[1];
        f.value = c.a_theta - c.b_theta * th;
        f.d_t = 0.0;
        f.g[0] = 0.0;
        f.g[1] = -c.b_theta;
        f.g[2] = 0.0;
        f.nh = 0;
    }
    {
        Coeff& f = t.a[2];
        f.value = -r * D;
        f.d_t = 0.0;
        f.g[0] = -D;
        f.g[1] = 0.0;
        f.g[2] = -r;
        f.set_h(0, 0, 2, -1.0);
        f.nh = 1;
    }
    {
        Coeff& f = t.b[0][0];
        f.value = c.sigma_r * qr.s;
        f.d_t = 0.0;
        f.g[0] = c.sigma_r * qr.inv2s;
        f.g[1] = 0.0;
        f.g[2] = 0.0;
        f.set_h(0, 0, 0, -0.25 * c.sigma_r * qr.m32);
        f.nh = 1;
        t.add_bnz(0, 0);
    }
    {
        Coeff& f = t.b[1][1];
        f.value = c.sigma_theta * qth.s;
        f.d_t = 0.0;
        f.g[0] = 0.0;
        f.g[1] = c.sigma_theta * qth.inv2s;
        f.g[2] = 0.0;
        f.set_h(0, 1, 1, -0.25 * c.sigma_theta * qth.m32);
        f.nh = 1;
        t.add_bnz(1, 1);
    }
    {
        Coeff& f = t.b[2][0];
        f.value = -D * th;
        f.d_t = 0.0;
        f.g[0] = 0.0;
        f.g[1] = -D;
        f.g[2] = -th;
        f.set_h(0, 1, 2, -1.0);
        f.nh = 1;
        t.add_bnz(2, 0);
    }

    t.finalize_sigma();
    return (qr.truncated ? 1 : 0) + (qth.truncated ? 1 : 0);
}

}  // namespace esg

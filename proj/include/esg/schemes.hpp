#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "esg/system.hpp"

namespace esg {

enum class SchemeKind { Euler, Milstein, Milstein2 };

struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.01;
    int n_steps = 100;

    double time(int i) const { return t0 + dt * i; }
    double horizon() const { return t0 + dt * n_steps; }
};

// Brownian increments for one step, plus the antisymmetric V matrix used by
// the second Milstein scheme in place of iterated Ito integrals.
struct IncrementBundle {
    int m = 0;
    std::array<double, kMaxDrivers> dW{};
    double V[kMaxDrivers][kMaxDrivers] = {};
    bool has_V = false;
};

// Fill V for an m-driver step: V_jj = dt, V_jk = +-dt antisymmetric with
// P(+) = 1/2, the sign for pair (j, k), j < k drawn from `flip(j, k)`.
template <typename Flip>
void sample_V(IncrementBundle& inc, double dt, Flip&& flip) {
    for (int j = 0; j < inc.m; ++j) {
        inc.V[j][j] = dt;
        for (int k = j + 1; k < inc.m; ++k) {
            const double s = flip(j, k) ? dt : -dt;
            inc.V[j][k] = s;
            inc.V[k][j] = -s;
        }
    }
    inc.has_V = true;
}

struct CoeffId {
    enum class Kind { Drift, Diffusion };
    Kind kind = Kind::Drift;
    int row = 0;
    int col = 0;
};

inline const Coeff& get_coeff(const SystemTable& t, const CoeffId& id) {
    if (id.row < 0 || id.row >= t.n_states) throw UnsupportedCoefficient("coefficient row out of range");
    if (id.kind == CoeffId::Kind::Diffusion && (id.col < 0 || id.col >= t.n_drivers))
        throw UnsupportedCoefficient("coefficient column out of range");
    return id.kind == CoeffId::Kind::Drift ? t.a[id.row] : t.b[id.row][id.col];
}

namespace detail {

inline double l0_of(const SystemTable& t, const Coeff& f) {
    double acc = f.d_t;
    for (int i = 0; i < t.n_states; ++i)
        if (f.g[i] != 0.0) acc += f.g[i] * t.a[i].value;
    for (int e = 0; e < f.nh; ++e) {
        const auto& h = f.h[e];
        acc += (h.i == h.j ? 0.5 : 1.0) * h.v * t.Sigma[h.i][h.j];
    }
    return acc;
}

inline double lk_of(const SystemTable& t, const Coeff& f, int k) {
    double acc = 0.0;
    for (int e = 0; e < t.nbnz; ++e)
        if (t.bnz[e].col == k) acc += t.b[t.bnz[e].row][t.bnz[e].col].value * f.g[t.bnz[e].row];
    return acc;
}

inline void check_finite(const double* x, int n) {
    for (int i = 0; i < n; ++i)
        if (!std::isfinite(x[i])) throw NonFiniteState("state became non-finite during stepping");
}

}  // namespace detail

// L0 f = d_t f + sum_i a_i d_i f + 1/2 sum_ij Sigma_ij d2_ij f.
inline double l0_apply(const SystemTable& t, const CoeffId& id) {
    return detail::l0_of(t, get_coeff(t, id));
}

// Lk f = sum_i b_ik d_i f.
inline double lk_apply(const SystemTable& t, const CoeffId& id, int k) {
    if (k < 0 || k >= t.n_drivers) throw UnsupportedCoefficient("driver index out of range");
    return detail::lk_of(t, get_coeff(t, id), k);
}

// Raw-array steppers, shared by the full and the reduced system. The table
// must have been evaluated at x; xn may alias x.
inline void step_euler(const SystemTable& t, const double* x, const IncrementBundle& inc,
                       double dt, double* xn) {
    if (inc.m != t.n_drivers) throw DimensionMismatch("increment bundle does not match system drivers");
    std::array<double, kNumStates> acc{};
    for (int i = 0; i < t.n_states; ++i) acc[i] = x[i] + t.a[i].value * dt;
    for (int e = 0; e < t.nbnz; ++e)
        acc[t.bnz[e].row] += t.b[t.bnz[e].row][t.bnz[e].col].value * inc.dW[t.bnz[e].col];
    for (int i = 0; i < t.n_states; ++i) xn[i] = acc[i];
    detail::check_finite(xn, t.n_states);
}

inline void step_milstein(const SystemTable& t, const double* x, const IncrementBundle& inc,
                          double dt, double* xn) {
    if (inc.m != t.n_drivers) throw DimensionMismatch("increment bundle does not match system drivers");
    std::array<double, kNumStates> acc{};
    for (int i = 0; i < t.n_states; ++i) acc[i] = x[i] + t.a[i].value * dt;
    for (int e = 0; e < t.nbnz; ++e) {
        const int i = t.bnz[e].row, k = t.bnz[e].col;
        const Coeff& f = t.b[i][k];
        acc[i] += f.value * inc.dW[k];
        acc[i] += 0.5 * f.value * f.g[i] * (inc.dW[k] * inc.dW[k] - dt);
    }
    for (int i = 0; i < t.n_states; ++i) xn[i] = acc[i];
    detail::check_finite(xn, t.n_states);
}

inline void step_milstein2(const SystemTable& t, const double* x, const IncrementBundle& inc,
                           double dt, double* xn) {
    if (inc.m != t.n_drivers) throw DimensionMismatch("increment bundle does not match system drivers");
    if (!inc.has_V) throw DimensionMismatch("second Milstein scheme requires a sampled V matrix");

    double L0a[kNumStates];
    double Lka[kNumStates][kMaxDrivers] = {};
    for (int i = 0; i < t.n_states; ++i) {
        L0a[i] = detail::l0_of(t, t.a[i]);
        for (int e = 0; e < t.nbnz; ++e)
            Lka[i][t.bnz[e].col] +=
                t.b[t.bnz[e].row][t.bnz[e].col].value * t.a[i].g[t.bnz[e].row];
    }
    double L0b[kMaxBnz];
    double Ljb[kMaxBnz][kMaxDrivers] = {};
    for (int e = 0; e < t.nbnz; ++e) {
        const Coeff& f = t.b[t.bnz[e].row][t.bnz[e].col];
        L0b[e] = detail::l0_of(t, f);
        for (int e2 = 0; e2 < t.nbnz; ++e2)
            Ljb[e][t.bnz[e2].col] +=
                t.b[t.bnz[e2].row][t.bnz[e2].col].value * f.g[t.bnz[e2].row];
    }

    std::array<double, kNumStates> acc{};
    const double half_dt2 = 0.5 * dt * dt;
    for (int i = 0; i < t.n_states; ++i) {
        acc[i] = x[i] + t.a[i].value * dt + L0a[i] * half_dt2;
        for (int k = 0; k < t.n_drivers; ++k)
            acc[i] += 0.5 * Lka[i][k] * inc.dW[k] * dt;
    }
    for (int e = 0; e < t.nbnz; ++e) {
        const int i = t.bnz[e].row, k = t.bnz[e].col;
        acc[i] += t.b[i][k].value * inc.dW[k] + 0.5 * L0b[e] * inc.dW[k] * dt;
        for (int j = 0; j < t.n_drivers; ++j)
            acc[i] += 0.5 * Ljb[e][j] * (inc.dW[j] * inc.dW[k] - inc.V[j][k]);
    }
    for (int i = 0; i < t.n_states; ++i) xn[i] = acc[i];
    detail::check_finite(xn, t.n_states);
}

// StateVector wrappers for the five-factor system.
inline StateVector euler_step(const StateVector& s, const DriftDiffusion& dd,
                              const IncrementBundle& inc, double dt) {
    if (inc.m != dd.n_drivers) throw DimensionMismatch("increment bundle does not match system drivers");
    StateVector out = s;
    out.t = s.t + dt;
    for (int i = 0; i < dd.n_states; ++i) {
        double v = s.x[i] + dd.a[i] * dt;
        for (int k = 0; k < dd.n_drivers; ++k) v += dd.b[i][k] * inc.dW[k];
        out.x[i] = v;
    }
    detail::check_finite(out.x.data(), dd.n_states);
    return out;
}

inline StateVector euler_step(const StateVector& s, const SystemTable& t,
                              const IncrementBundle& inc, double dt) {
    StateVector out = s;
    out.t = s.t + dt;
    step_euler(t, s.x.data(), inc, dt, out.x.data());
    return out;
}

inline StateVector milstein_step(const StateVector& s, const SystemTable& t,
                                 const IncrementBundle& inc, double dt) {
    StateVector out = s;
    out.t = s.t + dt;
    step_milstein(t, s.x.data(), inc, dt, out.x.data());
    return out;
}

inline StateVector milstein2_step(const StateVector& s, const SystemTable& t,
                                  const IncrementBundle& inc, double dt) {
    StateVector out = s;
    out.t = s.t + dt;
    step_milstein2(t, s.x.data(), inc, dt, out.x.data());
    return out;
}

}  // namespace esg

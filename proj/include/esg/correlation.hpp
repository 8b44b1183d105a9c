#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "esg/errors.hpp"

namespace esg {

// Pairwise correlations among the Brownian drivers of (r, S, chi, gamma).
// Construction checks each entry lies in [-1,1] and that the implied 4x4
// matrix is positive semi-definite (pivot tolerance 1e-12). Degenerate
// specs pass construction; the loading builders reject them.
struct CorrelationSpec {
    double rho_rS = 0.0;
    double rho_rChi = 0.0;
    double rho_rGamma = 0.0;
    double rho_SChi = 0.0;
    double rho_SGamma = 0.0;
    double rho_ChiGamma = 0.0;

    CorrelationSpec() = default;
    CorrelationSpec(double rS, double rChi, double rGamma,
                    double SChi, double SGamma, double ChiGamma)
        : rho_rS(rS), rho_rChi(rChi), rho_rGamma(rGamma),
          rho_SChi(SChi), rho_SGamma(SGamma), rho_ChiGamma(ChiGamma) {
        validate();
    }

    std::array<std::array<double, 4>, 4> matrix() const {
        return {{{1.0, rho_rS, rho_rChi, rho_rGamma},
                 {rho_rS, 1.0, rho_SChi, rho_SGamma},
                 {rho_rChi, rho_SChi, 1.0, rho_ChiGamma},
                 {rho_rGamma, rho_SGamma, rho_ChiGamma, 1.0}}};
    }

    void validate() const {
        const double rs[6] = {rho_rS, rho_rChi, rho_rGamma, rho_SChi, rho_SGamma, rho_ChiGamma};
        const char* names[6] = {"rho_rS", "rho_rChi", "rho_rGamma",
                                "rho_SChi", "rho_SGamma", "rho_ChiGamma"};
        for (int i = 0; i < 6; ++i)
            if (!(rs[i] >= -1.0 && rs[i] <= 1.0))
                throw NotPositiveDefinite(std::string(names[i]) + " outside [-1, 1]");
        // PSD check by outer-product elimination with zero-pivot handling.
        auto m = matrix();
        const double tol = 1e-12;
        for (int k = 0; k < 4; ++k) {
            const double piv = m[k][k];
            if (piv < -tol)
                throw NotPositiveDefinite("correlation matrix has a negative pivot");
            if (piv <= tol) {
                for (int i = k + 1; i < 4; ++i)
                    if (std::fabs(m[i][k]) > 1e-9)
                        throw NotPositiveDefinite(
                            "correlation matrix is not positive semi-definite");
                continue;
            }
            for (int i = k + 1; i < 4; ++i)
                for (int j = k + 1; j < 4; ++j)
                    m[i][j] -= m[i][k] * m[k][j] / piv;
        }
    }
};

// Lower-triangular-style loading rows over independent drivers.
// Row order (W_r, W_S, W_chi, W_gamma); cols = independent W_0..W_{cols-1}.
struct LoadingMatrix {
    int rows = 4;
    int cols = 4;
    std::array<std::array<double, 4>, 4> a{};

    double operator()(int i, int j) const { return a[i][j]; }
    double& at(int i, int j) { return a[i][j]; }
};

// Closed-form recursive construction.
inline LoadingMatrix recursive_loadings(const CorrelationSpec& c) {
    const double one_m_rs2 = 1.0 - c.rho_rS * c.rho_rS;
    if (one_m_rs2 <= 0.0)
        throw DegenerateCorrelation("recursive_loadings: 1 - rho_rS^2 <= 0");
    const double s = std::sqrt(one_m_rs2);

    const double rp_SChi = (c.rho_SChi - c.rho_rS * c.rho_rChi) / s;
    const double rad_chichi = (1.0 - c.rho_rS * c.rho_rS - c.rho_rChi * c.rho_rChi -
                               c.rho_SChi * c.rho_SChi +
                               2.0 * c.rho_rS * c.rho_rChi * c.rho_SChi) / one_m_rs2;
    if (rad_chichi <= 0.0)
        throw DegenerateCorrelation("recursive_loadings: chi-row radicand <= 0");
    const double rp_ChiChi = std::sqrt(rad_chichi);

    const double rpp_SGamma = (c.rho_SGamma - c.rho_rS * c.rho_rGamma) / s;
    const double rpp_ChiGamma =
        (c.rho_ChiGamma - c.rho_rChi * c.rho_rGamma - rp_SChi * rpp_SGamma) / rp_ChiChi;
    const double rad_gg = 1.0 - c.rho_rGamma * c.rho_rGamma - rpp_SGamma * rpp_SGamma -
                          rpp_ChiGamma * rpp_ChiGamma;
    if (rad_gg <= 0.0)
        throw DegenerateCorrelation("recursive_loadings: gamma-row radicand <= 0");
    const double rpp_GammaGamma = std::sqrt(rad_gg);

    LoadingMatrix L;
    L.rows = 4;
    L.cols = 4;
    L.a = {{{1.0, 0.0, 0.0, 0.0},
            {c.rho_rS, s, 0.0, 0.0},
            {c.rho_rChi, rp_SChi, rp_ChiChi, 0.0},
            {c.rho_rGamma, rpp_SGamma, rpp_ChiGamma, rpp_GammaGamma}}};
    return L;
}

// Plain Cholesky of the 4x4 correlation matrix.
inline LoadingMatrix cholesky_loadings(const CorrelationSpec& c) {
    const auto m = c.matrix();
    LoadingMatrix L;
    L.rows = 4;
    L.cols = 4;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m[i][j];
            for (int k = 0; k < j; ++k) s -= L.a[i][k] * L.a[j][k];
            if (i == j) {
                if (s <= 0.0)
                    throw NotPositiveDefinite("cholesky_loadings: pivot <= 0 at row " +
                                              std::to_string(i));
                L.a[i][i] = std::sqrt(s);
            } else {
                L.a[i][j] = s / L.a[j][j];
            }
        }
    }
    return L;
}

// Reduced 4x3 form for the martingale-consistent stock (rho_rS = 1):
// the stock shares W_0 with the rate and the S column drops out.
inline LoadingMatrix reduced_loadings(const CorrelationSpec& c) {
    if (c.rho_rS != 1.0)
        throw DegenerateCorrelation("reduced_loadings requires rho_rS = 1");
    const double one_m_rc2 = 1.0 - c.rho_rChi * c.rho_rChi;
    if (one_m_rc2 <= 0.0)
        throw DegenerateCorrelation("reduced_loadings: 1 - rho_rChi^2 <= 0");
    const double s = std::sqrt(one_m_rc2);
    const double rp_ChiGamma = (c.rho_ChiGamma - c.rho_rChi * c.rho_rGamma) / s;
    const double rad = (1.0 - c.rho_rChi * c.rho_rChi - c.rho_rGamma * c.rho_rGamma -
                        c.rho_ChiGamma * c.rho_ChiGamma +
                        2.0 * c.rho_rChi * c.rho_rGamma * c.rho_ChiGamma) / one_m_rc2;
    if (rad <= 0.0)
        throw DegenerateCorrelation("reduced_loadings: gamma-row radicand <= 0");
    LoadingMatrix L;
    L.rows = 4;
    L.cols = 3;
    L.a = {{{1.0, 0.0, 0.0, 0.0},
            {1.0, 0.0, 0.0, 0.0},
            {c.rho_rChi, s, 0.0, 0.0},
            {c.rho_rGamma, rp_ChiGamma, std::sqrt(rad), 0.0}}};
    return L;
}

// Map independent increments dz (size = cols) to correlated increments.
inline std::array<double, 4> correlate(const LoadingMatrix& L, const std::vector<double>& dz) {
    if (static_cast<int>(dz.size()) != L.cols)
        throw DimensionMismatch("correlate: expected " + std::to_string(L.cols) +
                                " increments, got " + std::to_string(dz.size()));
    std::array<double, 4> out{};
    for (int i = 0; i < L.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < L.cols; ++j) s += L.a[i][j] * dz[j];
        out[i] = s;
    }
    return out;
}

}  // namespace esg

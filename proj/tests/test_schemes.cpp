#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "esg/schemes.hpp"

using namespace esg;

namespace {

ModelParams base_params() {
    ModelParams p;
    p.a_r = 0.02;
    p.b_r = 0.04;
    p.sigma_r = 0.01;
    p.r0 = 0.02;
    p.a_theta = 0.05;
    p.b_theta = 0.01;
    p.sigma_theta = 0.01;
    p.theta0 = 0.3;
    p.sigma_S = 0.2;
    p.S0 = 1.0;
    p.sigma_chi = 0.01;
    p.chi0 = 0.05;
    p.f = 0.1;
    p.gamma0 = 0.01;
    p.bond_maturity = 2.0;
    p.corr = CorrelationSpec{0.6, 0.7, 0.5, 0.1, 0.3, 0.1};
    return p;
}

ModelParams mc_params() {
    auto p = base_params();
    p.corr = CorrelationSpec{1.0, 0.7, 0.5, 0.7, 0.5, 0.1};
    return p;
}

SystemTable eval_at(const SystemCtx& c, double t, const StateVector& s) {
    SystemTable tb;
    eval_system(c, c.bond.terms(c.p.bond_maturity - t), s, tb);
    return tb;
}

StateVector random_state(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StateVector s;
    s.x[iR] = 0.01 + 0.3 * u(gen);
    s.x[iTheta] = 0.05 + 1.1 * u(gen);
    s.x[iB] = 0.8 + 0.7 * u(gen);
    s.x[iP] = 0.7 + 0.3 * u(gen);
    s.x[iS] = 0.5 + 1.5 * u(gen);
    s.x[iChi] = 0.01 + 0.6 * u(gen);
    s.x[iGamma] = (u(gen) < 0.5 ? -1.0 : 1.0) * (0.002 + 0.05 * u(gen));
    s.x[iD] = 0.6 + 0.5 * u(gen);
    s.t = 0.9 * u(gen);
    return s;
}

std::vector<CoeffId> all_coefficients(const SystemTable& t) {
    std::vector<CoeffId> ids;
    for (int i = 0; i < t.n_states; ++i)
        ids.push_back({CoeffId::Kind::Drift, i, 0});
    for (int e = 0; e < t.nbnz; ++e)
        ids.push_back({CoeffId::Kind::Diffusion, t.bnz[e].row, t.bnz[e].col});
    return ids;
}

double registered_hessian(const Coeff& f, int i, int j) {
    double v = 0.0;
    for (int e = 0; e < f.nh; ++e)
        if ((f.h[e].i == i && f.h[e].j == j) || (f.h[e].i == j && f.h[e].j == i))
            v += f.h[e].v;
    return v;
}

// Every registered partial of every coefficient against central differences
// of independent table evaluations.
void check_partials(const ModelParams& p, const ModeFlags& mode, std::uint64_t seed,
                    int n_states_to_try) {
    const SystemCtx ctx = SystemCtx::make(p, mode);
    std::mt19937_64 gen(seed);

    for (int trial = 0; trial < n_states_to_try; ++trial) {
        const StateVector s = random_state(gen);
        const SystemTable base = eval_at(ctx, s.t, s);

        double h[kNumStates];
        std::vector<SystemTable> plus(kNumStates), minus(kNumStates);
        for (int j = 0; j < kNumStates; ++j) {
            h[j] = 1e-6 * std::max(1.0, std::fabs(s.x[j]));
            StateVector sp = s, sm = s;
            sp.x[j] += h[j];
            sm.x[j] -= h[j];
            plus[j] = eval_at(ctx, s.t, sp);
            minus[j] = eval_at(ctx, s.t, sm);
        }
        const double ht = 1e-6;
        const SystemTable tplus = eval_at(ctx, s.t + ht, s);
        const SystemTable tminus = eval_at(ctx, s.t - ht, s);

        auto pick = [](const SystemTable& t, const CoeffId& id) -> const Coeff& {
            return id.kind == CoeffId::Kind::Drift ? t.a[id.row] : t.b[id.row][id.col];
        };

        for (const CoeffId& id : all_coefficients(base)) {
            const Coeff& f = pick(base, id);
            INFO("coefficient kind=" << (id.kind == CoeffId::Kind::Drift ? "a" : "b")
                                     << " row=" << id.row << " col=" << id.col
                                     << " trial=" << trial);

            const double fd_t = (pick(tplus, id).value - pick(tminus, id).value) / (2.0 * ht);
            REQUIRE_THAT(f.d_t, Catch::Matchers::WithinAbs(fd_t, 1e-6 + 1e-6 * std::fabs(fd_t)));

            for (int j = 0; j < kNumStates; ++j) {
                const double fd = (pick(plus[j], id).value - pick(minus[j], id).value) / (2.0 * h[j]);
                INFO("gradient component " << j);
                REQUIRE_THAT(f.g[j],
                             Catch::Matchers::WithinAbs(fd, 1e-6 + 1e-6 * std::fabs(fd)));
            }

            for (int i = 0; i < kNumStates; ++i)
                for (int j = i; j < kNumStates; ++j) {
                    const double fd =
                        (pick(plus[i], id).g[j] - pick(minus[i], id).g[j]) / (2.0 * h[i]);
                    INFO("hessian entry (" << i << "," << j << ")");
                    REQUIRE_THAT(registered_hessian(f, i, j),
                                 Catch::Matchers::WithinAbs(fd, 1e-5 + 1e-5 * std::fabs(fd)));
                }
        }
    }
}

}  // namespace

TEST_CASE("registered partials match finite differences, simple mode", "[schemes]") {
    check_partials(base_params(), ModeFlags{}, 11, 4);
}

TEST_CASE("registered partials match finite differences, composite mode", "[schemes]") {
    ModeFlags mode;
    mode.short_rate = ShortRateMode::Composite;
    check_partials(base_params(), mode, 12, 4);
}

TEST_CASE("registered partials match finite differences, constant eta", "[schemes]") {
    ModeFlags mode;
    mode.eta = EtaMode::Constant;
    auto p = base_params();
    p.eta_const = 0.015;
    check_partials(p, mode, 13, 2);
}

TEST_CASE("registered partials match finite differences, martingale stock", "[schemes]") {
    ModeFlags mode;
    mode.stock = StockMode::MartingaleConsistent;
    mode.short_rate = ShortRateMode::Composite;
    check_partials(mc_params(), mode, 14, 4);
}

TEST_CASE("table values equal the directly assembled system", "[schemes]") {
    const auto p = base_params();
    std::mt19937_64 gen(21);
    for (auto sr : {ShortRateMode::Simple, ShortRateMode::Composite}) {
        ModeFlags mode;
        mode.short_rate = sr;
        const SystemCtx ctx = SystemCtx::make(p, mode);
        for (int trial = 0; trial < 5; ++trial) {
            const StateVector s = random_state(gen);
            const auto table = eval_at(ctx, s.t, s);
            const auto dd = table.to_drift_diffusion();
            const auto ref = assemble_system(s, p, mode, ctx.L,
                                             zcb_dr(ctx.bond, s.t, p.bond_maturity, s.r()));
            REQUIRE(dd.n_drivers == ref.n_drivers);
            for (int i = 0; i < kNumStates; ++i) {
                REQUIRE_THAT(dd.a[i], Catch::Matchers::WithinRel(ref.a[i], 1e-14));
                for (int k = 0; k < dd.n_drivers; ++k)
                    REQUIRE_THAT(dd.b[i][k],
                                 Catch::Matchers::WithinAbs(ref.b[i][k],
                                                            1e-14 * (1.0 + std::fabs(ref.b[i][k]))));
            }
        }
    }
}

TEST_CASE("Sigma is the Gram matrix of the diffusion rows", "[schemes]") {
    const auto p = base_params();
    const SystemCtx ctx = SystemCtx::make(p, ModeFlags{});
    std::mt19937_64 gen(22);
    const StateVector s = random_state(gen);
    const auto t = eval_at(ctx, s.t, s);
    for (int i = 0; i < kNumStates; ++i)
        for (int j = 0; j < kNumStates; ++j) {
            double expect = 0.0;
            for (int k = 0; k < t.n_drivers; ++k) expect += t.b[i][k].value * t.b[j][k].value;
            REQUIRE_THAT(t.Sigma[i][j],
                         Catch::Matchers::WithinAbs(expect, 1e-15 * (1.0 + std::fabs(expect))));
        }
}

TEST_CASE("L0 and Lk of the rate drift match their closed forms", "[schemes]") {
    const RateThetaCtx ctx{0.02, 0.04, 0.01, 0.05, 0.01, 0.01};
    const double x[3] = {0.04, 0.3, 0.9};
    SystemTable t;
    eval_rate_theta(ctx, 0.0, x, t);

    const double r = x[0], th = x[1];
    const double a1 = ctx.a_r - ctx.b_r * r + th * ctx.sigma_r * std::sqrt(r);
    const double a2 = ctx.a_theta - ctx.b_theta * th;
    const double S11 = ctx.sigma_r * ctx.sigma_r * r;
    const double S12 = 0.0;
    const double expect_l0a1 = a1 * (-ctx.b_r + 0.5 * th * ctx.sigma_r / std::sqrt(r)) +
                               a2 * ctx.sigma_r * std::sqrt(r) -
                               0.125 * S11 * ctx.sigma_r * th * std::pow(r, -1.5) +
                               0.5 * S12 * ctx.sigma_r / std::sqrt(r);
    CHECK_THAT(l0_apply(t, {CoeffId::Kind::Drift, 0, 0}),
               Catch::Matchers::WithinRel(expect_l0a1, 1e-13));

    // Lk b_11 = b_1k sigma_r / (2 sqrt r): the rate column gives sigma_r^2/2,
    // the theta column nothing.
    CHECK_THAT(lk_apply(t, {CoeffId::Kind::Diffusion, 0, 0}, 0),
               Catch::Matchers::WithinRel(0.5 * ctx.sigma_r * ctx.sigma_r, 1e-13));
    CHECK(lk_apply(t, {CoeffId::Kind::Diffusion, 0, 0}, 1) == 0.0);

    // Lk a_1: diffusion rows contracted against the drift gradient.
    const double expect_l0a1_k0 =
        ctx.sigma_r * std::sqrt(r) * (-ctx.b_r + 0.5 * th * ctx.sigma_r / std::sqrt(r));
    CHECK_THAT(lk_apply(t, {CoeffId::Kind::Drift, 0, 0}, 0),
               Catch::Matchers::WithinRel(expect_l0a1_k0, 1e-13));
    CHECK_THAT(lk_apply(t, {CoeffId::Kind::Drift, 0, 0}, 1),
               Catch::Matchers::WithinRel(ctx.sigma_theta * std::sqrt(th) * ctx.sigma_r * std::sqrt(r),
                                          1e-13));
}

TEST_CASE("Milstein correction per row matches the diagonal formula", "[schemes]") {
    const auto p = base_params();
    const SystemCtx ctx = SystemCtx::make(p, ModeFlags{});
    std::mt19937_64 gen(23);
    const StateVector s = random_state(gen);
    const auto t = eval_at(ctx, s.t, s);
    const auto L = ctx.L;

    IncrementBundle inc;
    inc.m = 5;
    inc.dW = {0.04, -0.11, 0.06, 0.02, -0.05};
    const double dt = 0.01;

    const auto se = euler_step(s, t, inc, dt);
    const auto sm = milstein_step(s, t, inc, dt);
    auto q = [&](int k) { return inc.dW[k] * inc.dW[k] - dt; };

    const double r = s.r(), th = s.theta(), chi = s.chi(), gamma = s.gamma(), D = s.D();
    const double R = r;  // simple mode

    CHECK_THAT(sm.x[iR] - se.x[iR],
               Catch::Matchers::WithinAbs(0.25 * p.sigma_r * p.sigma_r * q(0), 1e-15));
    CHECK_THAT(sm.x[iTheta] - se.x[iTheta],
               Catch::Matchers::WithinAbs(0.25 * p.sigma_theta * p.sigma_theta * q(4), 1e-15));
    CHECK(sm.x[iB] == se.x[iB]);
    // The bond coefficient P_r(t, r) sigma sqrt(r) has no own-state dependence.
    CHECK(sm.x[iP] == se.x[iP]);

    // The stepped states are O(1), so the difference carries a few ulps of
    // cancellation noise on top of the correction itself.
    double s_expect = 0.0;
    for (int j : {0, 1})
        s_expect += 0.5 * s.S() * p.sigma_S * p.sigma_S * L(1, j) * L(1, j) * q(j);
    CHECK_THAT(sm.x[iS] - se.x[iS], Catch::Matchers::WithinRel(s_expect, 1e-12) ||
                                        Catch::Matchers::WithinAbs(s_expect, 4e-15));

    double chi_expect = 0.0;
    for (int j : {0, 1, 2})
        chi_expect += 0.25 * p.sigma_chi * p.sigma_chi * L(2, j) * L(2, j) * q(j);
    CHECK_THAT(sm.x[iChi] - se.x[iChi], Catch::Matchers::WithinRel(chi_expect, 1e-12) ||
                                            Catch::Matchers::WithinAbs(chi_expect, 4e-15));

    double g_expect = 0.0;
    for (int j = 0; j < 4; ++j) {
        const double lj = L(3, j) / p.corr.rho_rGamma;
        g_expect += 0.5 * gamma * (R / th) * (R / th) * lj * lj * q(j);
    }
    CHECK_THAT(sm.x[iGamma] - se.x[iGamma], Catch::Matchers::WithinRel(g_expect, 1e-12) ||
                                                Catch::Matchers::WithinAbs(g_expect, 4e-15));

    const double d_expect = 0.5 * D * th * th * q(0);
    CHECK_THAT(sm.x[iD] - se.x[iD], Catch::Matchers::WithinRel(d_expect, 1e-12) ||
                                        Catch::Matchers::WithinAbs(d_expect, 4e-15));
    (void)chi;
}

TEST_CASE("second Milstein step equals its operator expansion", "[schemes]") {
    const auto p = base_params();
    for (auto sr : {ShortRateMode::Simple, ShortRateMode::Composite}) {
        ModeFlags mode;
        mode.short_rate = sr;
        const SystemCtx ctx = SystemCtx::make(p, mode);
        std::mt19937_64 gen(24);
        const StateVector s = random_state(gen);
        const auto t = eval_at(ctx, s.t, s);
        const int m = t.n_drivers;

        IncrementBundle inc;
        inc.m = m;
        std::normal_distribution<double> nd(0.0, 0.1);
        for (int k = 0; k < m; ++k) inc.dW[k] = nd(gen);
        const double dt = 0.01;
        sample_V(inc, dt, [](int j, int k) { return (j + k) % 2 == 0; });

        const auto out = milstein2_step(s, t, inc, dt);

        for (int i = 0; i < kNumStates; ++i) {
            const CoeffId ai{CoeffId::Kind::Drift, i, 0};
            double x = s.x[i] + t.a[i].value * dt + 0.5 * l0_apply(t, ai) * dt * dt;
            for (int k = 0; k < m; ++k)
                x += 0.5 * lk_apply(t, ai, k) * inc.dW[k] * dt;
            for (int e = 0; e < t.nbnz; ++e) {
                if (t.bnz[e].row != i) continue;
                const int k = t.bnz[e].col;
                const CoeffId bi{CoeffId::Kind::Diffusion, i, k};
                x += t.b[i][k].value * inc.dW[k] + 0.5 * l0_apply(t, bi) * inc.dW[k] * dt;
                for (int j = 0; j < m; ++j)
                    x += 0.5 * lk_apply(t, bi, j) * (inc.dW[j] * inc.dW[k] - inc.V[j][k]);
            }
            REQUIRE_THAT(out.x[i],
                         Catch::Matchers::WithinAbs(x, 1e-13 * (1.0 + std::fabs(x))));
        }
    }
}

TEST_CASE("one-step weak bias orders on the scalar square-root process", "[schemes]") {
    // theta pinned at zero turns the rate into a plain square-root process
    // with known conditional mean.
    const RateThetaCtx ctx{0.12, 0.6, 0.06, 0.0, 1.0, 0.0};
    const double dt = 0.1;
    const double r0 = 0.04;
    double x[3] = {r0, 0.0, 1.0};
    SystemTable t;
    eval_rate_theta(ctx, 0.0, x, t);

    const double exact = r0 * std::exp(-ctx.b_r * dt) + (ctx.a_r / ctx.b_r) * (1.0 - std::exp(-ctx.b_r * dt));

    // E over the increments: Gaussian terms vanish; so does dW^2 - dt and
    // dW_j dW_k - V_jk. Euler keeps O(dt^2) bias, the 1/2 L0 a dt^2 term
    // cuts it to O(dt^3).
    const double euler_mean = r0 + t.a[0].value * dt;
    const double m2_mean =
        euler_mean + 0.5 * l0_apply(t, {CoeffId::Kind::Drift, 0, 0}) * dt * dt;

    const double euler_bias = std::fabs(euler_mean - exact);
    const double m2_bias = std::fabs(m2_mean - exact);
    CHECK(euler_bias > 1e-4);
    CHECK(m2_bias < euler_bias / 10.0);
    CHECK(m2_bias < 1e-5);
}

TEST_CASE("V matrix sampling", "[schemes]") {
    IncrementBundle inc;
    inc.m = 4;
    sample_V(inc, 0.01, [](int j, int k) { return (j + 2 * k) % 3 == 0; });
    REQUIRE(inc.has_V);
    for (int j = 0; j < 4; ++j) {
        CHECK(inc.V[j][j] == 0.01);
        for (int k = j + 1; k < 4; ++k) {
            CHECK(std::fabs(inc.V[j][k]) == 0.01);
            CHECK(inc.V[j][k] == -inc.V[k][j]);
            CHECK((inc.V[j][k] > 0) == ((j + 2 * k) % 3 == 0));
        }
    }
}

TEST_CASE("stepper error paths", "[schemes]") {
    const auto p = base_params();
    const SystemCtx ctx = SystemCtx::make(p, ModeFlags{});
    const StateVector s = StateVector::initial(p);
    const auto t = eval_at(ctx, 0.0, s);

    IncrementBundle wrong;
    wrong.m = 3;
    CHECK_THROWS_AS(euler_step(s, t, wrong, 0.01), DimensionMismatch);
    CHECK_THROWS_AS(milstein_step(s, t, wrong, 0.01), DimensionMismatch);

    IncrementBundle no_v;
    no_v.m = 5;
    CHECK_THROWS_AS(milstein2_step(s, t, no_v, 0.01), DimensionMismatch);
    sample_V(no_v, 0.01, [](int, int) { return true; });
    CHECK_NOTHROW(milstein2_step(s, t, no_v, 0.01));

    IncrementBundle nan_inc;
    nan_inc.m = 5;
    nan_inc.dW[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(euler_step(s, t, nan_inc, 0.01), NonFiniteState);

    CHECK_THROWS_AS(get_coeff(t, {CoeffId::Kind::Drift, 9, 0}), UnsupportedCoefficient);
    CHECK_THROWS_AS(get_coeff(t, {CoeffId::Kind::Diffusion, 0, 7}), UnsupportedCoefficient);
    CHECK_THROWS_AS(lk_apply(t, {CoeffId::Kind::Drift, 0, 0}, 5), UnsupportedCoefficient);
}

TEST_CASE("schemes agree on a fine grid", "[schemes]") {
    const auto p = base_params();
    const SystemCtx ctx = SystemCtx::make(p, ModeFlags{});
    const double dt = 1e-3;

    StateVector se = StateVector::initial(p), sm = se, s2 = se;
    std::mt19937_64 gen(31);
    std::normal_distribution<double> nd(0.0, std::sqrt(dt));
    for (int i = 0; i < 20; ++i) {
        IncrementBundle inc;
        inc.m = 5;
        for (int k = 0; k < 5; ++k) inc.dW[k] = nd(gen);
        sample_V(inc, dt, [&](int, int) { return gen() & 1; });
        se = euler_step(se, eval_at(ctx, se.t, se), inc, dt);
        sm = milstein_step(sm, eval_at(ctx, sm.t, sm), inc, dt);
        s2 = milstein2_step(s2, eval_at(ctx, s2.t, s2), inc, dt);
    }
    for (int i = 0; i < kNumStates; ++i) {
        CHECK(std::isfinite(s2.x[i]));
        CHECK_THAT(se.x[i], Catch::Matchers::WithinAbs(s2.x[i], 1e-4 * (1.0 + std::fabs(s2.x[i]))));
        CHECK_THAT(sm.x[i], Catch::Matchers::WithinAbs(s2.x[i], 1e-4 * (1.0 + std::fabs(s2.x[i]))));
    }
    CHECK(std::fabs(se.t - 0.02) < 1e-12);
}

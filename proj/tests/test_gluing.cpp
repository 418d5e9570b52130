#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "blowup/gluing.hpp"
#include "blowup/wnorm.hpp"

using namespace blowup;

namespace {

RadialProfile fs() { return profile_library("fubini_study", 2); }

TauPoint at_tau(double tau, double tau_min = 0.0) { return {tau, tau - tau_min, 1.0 - tau}; }

std::shared_ptr<const GammaData> fs_gamma(int nodes = 1024) {
    static std::map<int, std::shared_ptr<const GammaData>> cache;
    auto& g = cache[nodes];
    if (!g) {
        auto grid = std::make_shared<Grid>(GridSpec{nodes, 0.0}, 0.0, 1.0);
        g = std::make_shared<GammaData>(build_gamma(fs(), kernel_basis(grid, fubini_study_moment, 2), 0.6));
    }
    return g;
}

// Gamma for Fubini-Study up to the kernel span {1, tau}.
Jet fs_gamma_exact(double tau) {
    const Jet X = Jet::variable(tau, 6);
    return 0.5 * log(X) - X * log(X);
}

}  // namespace

TEST(Gluing, ConfigValidation) {
    GluingConfig c;
    EXPECT_NO_THROW(c.validate());
    c.beta = 0.7;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.beta = 0.6;
    c.eps = 0.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.eps = 0.1;
    c.delta = 0.2;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.delta = -0.1;
    c.n = 3;
    c.beta = 2.0 / 3.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);  // no core profile
}

// At eps = 0.1 the cut-off eps^2 log term bends f'' negative in the neck.
TEST(Gluing, LargeEpsIsNotPositive) {
    GluingConfig c;
    c.eps = 0.1;
    EXPECT_THROW(make_glued_profile(fs(), c), PositivityError);
    const GluedFamily imp = make_improved_profile(fs(), c, fs_gamma(1024));
    EXPECT_DOUBLE_EQ(imp.class_coeffs.first, 1.0);
    EXPECT_NEAR(imp.class_coeffs.second, -0.01, 1e-15);
    EXPECT_NEAR(imp.tau_min, 0.005, 1e-15);
    EXPECT_NEAR(imp.r_inner, std::pow(0.1, 0.6), 1e-15);
}

TEST(Gluing, RegionsAndClass) {
    GluingConfig c;
    c.eps = 0.05;
    const GluedFamily fam = make_glued_profile(fs(), c);
    EXPECT_NEAR(fam.class_coeffs.second, -0.0025, 1e-15);
    // Burns-Simanca core: F = tau - eps^2/2 and S = 0
    for (double u : {1e-8, 1e-4, 0.5 * (fam.tau_in - fam.tau_min)}) {
        const MomentPoint m = fam.at({fam.tau_min + u, u, 1.0 - fam.tau_min - u});
        EXPECT_EQ(m.region, Region::core);
        EXPECT_DOUBLE_EQ(m.F[0], u);
        EXPECT_NEAR(moment_scalar_jet(m.F, 2)[0], 0.0, 1e-12);
    }
    // base outside B_{2r}
    for (double tau : {0.3, 0.9, 1.0 - 1e-9}) {
        const MomentPoint m = fam.at(at_tau(tau, fam.tau_min));
        EXPECT_EQ(m.region, Region::outer);
        EXPECT_NEAR(moment_scalar_jet(m.F, 2)[0], 24.0, 1e-12);
    }
    // both boundaries of the neck are C^2
    for (double tb : {fam.tau_in, fam.tau_out}) {
        const MomentPoint a = fam.at(at_tau(tb - 1e-10, fam.tau_min)), b = fam.at(at_tau(tb + 1e-10, fam.tau_min));
        for (int k = 0; k <= 2; ++k) EXPECT_NEAR(a.F[k], b.F[k], 1e-6 * (1 + std::abs(a.F[k]))) << tb << " " << k;
    }
}

// The neck conversion from t-jets against the moment equation f'(t) = tau.
TEST(Gluing, NeckMomentMatchesProfile) {
    GluingConfig c;
    c.eps = 0.05;
    const GluedFamily fam = make_glued_profile(fs(), c);
    for (double s : {0.1, 0.5, 0.9}) {
        const double tau = fam.tau_in + s * (fam.tau_out - fam.tau_in);
        const MomentPoint m = fam.at(at_tau(tau, fam.tau_min));
        ASSERT_EQ(m.region, Region::neck);
        const Jet f = fam.profile.f(m.t);
        EXPECT_NEAR(f[1], tau, 1e-14);
        EXPECT_NEAR(m.F[0], f[2], 1e-14);
        // S from the potential versus S from moment data
        EXPECT_NEAR(moment_scalar_jet(m.F, 2)[0], radial_scalar_jet(f, 2)[0], 1e-7 * (1 + std::abs(m.F[0])));
    }
}

TEST(Gluing, JsonRecord) {
    GluingConfig c;
    c.eps = 0.05;
    const auto j = family_to_json(make_glued_profile(fs(), c), 16);
    EXPECT_NEAR(j["class_coeffs"][1].get<double>(), -0.0025, 1e-15);
    EXPECT_EQ(j["samples"].size(), 16u);
}

// L of omega'_r minus the flat -1/4 Delta^2, on f = |z|^delta and weighted
// by |z|^{4-delta}, is of size r^2.
TEST(OmegaPrime, LinearizationApproachesEuclidean) {
    const double delta = -0.1;
    const RadialField f = [delta](double t) { return exp(0.5 * delta * Jet::variable(t)); };
    const RadialField lg = [](double t) { return 0.5 * Jet::variable(t); };
    std::vector<double> rs, dev, part2;
    for (double r : {0.2, 0.1, 0.05, 0.025}) {
        const RadialProfile w = make_omega_prime(fs(), r);
        double worst = 0.0, worst_log = 0.0;
        for (double t = 2.0 * std::log(r) - 8.0; t <= 2.0 * std::log(2.0 * r); t += 0.02) {
            const Jet p = w.f(t), e = exp(Jet::variable(t));
            const double rz = std::exp(0.5 * t);
            const double d = radial_apply(p, f(t), 2, RadialOp::L) - radial_apply(e, f(t), 2, RadialOp::L);
            worst = std::max(worst, std::pow(rz, 4.0 - delta) * std::abs(d));
            worst_log = std::max(worst_log, std::pow(rz, 4.0 - delta) * std::abs(radial_apply(p, lg(t), 2, RadialOp::L)));
        }
        rs.push_back(r);
        dev.push_back(worst);
        part2.push_back(worst_log);
    }
    const DecayFit fit = fit_decay(rs, dev);
    EXPECT_NEAR(fit.exponent, 2.0, 0.2);
    for (std::size_t i = 1; i < part2.size(); ++i) EXPECT_LE(part2[i], part2[0] * 1.01);
}

TEST(Gamma, FubiniStudyOracleIsAffine) {
    // L Gamma is affine in tau (48 tau - 36), independent of the grid
    for (double tau : {0.05, 0.3, 0.7, 0.95}) {
        const double v = moment_apply(fubini_study_moment(at_tau(tau)), fs_gamma_exact(tau), 2, RadialOp::L);
        EXPECT_NEAR(v, 48.0 * tau - 36.0, 1e-10);
    }
}

TEST(Gamma, SolveOnFubiniStudy) {
    const auto G = fs_gamma(1024);
    EXPECT_LE(G->residual, 1e-6);
    EXPECT_NEAR(G->theta_at_p, 0.0, 1e-10);
    EXPECT_EQ(G->kernel.dim(), 2);
    for (double tau : {0.02, 0.2, 0.5, 0.8, 0.98}) EXPECT_NEAR(G->g_value(at_tau(tau)), 48.0 * tau - 36.0, 1e-3);

    // theta - (exact - singular) lies in span{1, tau}
    const Grid& g = G->grid();
    const int N = g.size();
    Eigen::MatrixXd A(N, 2);
    Eigen::VectorXd b(N);
    for (int i = 0; i < N; ++i) {
        const TauPoint& p = g.point(i);
        A(i, 0) = 1.0;
        A(i, 1) = p.tau;
        b(i) = G->theta[i] - (fs_gamma_exact(p.tau)[0] - G->singular_jet(p, 0)[0]);
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    EXPECT_LT((A * c - b).lpNorm<Eigen::Infinity>(), 1e-4);

    // theta is orthogonal to the non-constant kernel vector
    const auto w = g.volume_weights(2);
    double ip = 0.0;
    for (int i = 0; i < N; ++i) ip += w[i] * G->theta[i] * G->kernel.vectors[1][i];
    EXPECT_LT(std::abs(ip), 1e-10);
}

TEST(Gamma, GaugeFreedom) {
    const auto G = fs_gamma(1024);
    for (double tau : {0.1, 0.4, 0.8}) {
        const TauPoint p = at_tau(tau);
        const Jet F = fubini_study_moment(p), Gam = G->gamma_jet(p);
        const Jet k = 3.0 * (Jet::variable(tau, 6) - 2.0 / 3.0) + 0.7;
        const double a = moment_apply(F, Gam, 2, RadialOp::L), b = moment_apply(F, Gam + k, 2, RadialOp::L);
        EXPECT_LT(std::abs(a - b), 1e-10);
        // the reconstructed jet solves L Gamma = g away from the ends
        EXPECT_NEAR(a, G->g_value(p), 1e-6 * (1 + std::abs(a)));
    }
}

// psi = Gamma - log|z| vanishes at p and decays at rate >= 1 in |z|.
TEST(Gamma, RemainderDecay) {
    const auto G = fs_gamma(1024);
    std::vector<double> r, v;
    for (double rz : {0.2, 0.1, 0.05, 0.025}) {
        const double tau = rz * rz / (1.0 + rz * rz);
        r.push_back(rz);
        v.push_back(G->psi_jet({tau, tau, 1.0 - tau})[0]);
    }
    EXPECT_GE(fit_decay(r, v).exponent, 0.95);
    // theta ~ -tau log tau near p, which polynomial stencils in tau resolve to about 1e-6
    EXPECT_NEAR(G->psi_jet({1e-12, 1e-12, 1.0 - 1e-12})[0], 0.0, 1e-5);
}

TEST(Improved, RegionsAndPositivity) {
    GluingConfig c;
    c.eps = 0.05;
    const GluedFamily fam = make_glued_profile(fs(), c);
    const GluedFamily imp = make_improved_profile(fam, fs_gamma(1024));
    EXPECT_TRUE(imp.improved);
    EXPECT_NO_THROW(check_neck_positivity(imp));
    // same core
    for (double u : {1e-6, 1e-3}) {
        const TauPoint p = at_tau(imp.tau_min + u, imp.tau_min);
        EXPECT_DOUBLE_EQ(imp.at(p).F[0], fam.at(p).F[0]);
    }
    // outer moment data against the t-potential of the same family
    for (double tau : {0.2, 0.6, 0.95}) {
        const MomentPoint m = imp.at(at_tau(tau, imp.tau_min));
        ASSERT_EQ(m.region, Region::outer);
        const Jet f = imp.profile.f(m.t);
        EXPECT_NEAR(f[1], tau, 1e-9);
        EXPECT_NEAR(m.F[0], f[2], 1e-9);
        EXPECT_NEAR(m.F[1], moment_from_t(f)[1], 1e-6);
    }
    const MomentPoint a = imp.at(at_tau(imp.tau_out - 1e-10, imp.tau_min));
    const MomentPoint b = imp.at(at_tau(imp.tau_out + 1e-10, imp.tau_min));
    for (int k = 0; k <= 2; ++k) EXPECT_NEAR(a.F[k], b.F[k], 1e-6 * (1 + std::abs(a.F[k])));
}

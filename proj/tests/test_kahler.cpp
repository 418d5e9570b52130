#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blowup/kahler.hpp"

using namespace blowup;

namespace {

MultiJet z(const Point& p, int d, int j) { return MultiJet::coordinate(static_cast<int>(p.size()), d, j, false, p[j]); }
MultiJet zb(const Point& p, int d, int j) {
    return MultiJet::coordinate(static_cast<int>(p.size()), d, j, true, std::conj(p[j]));
}
MultiJet abs2(const Point& p, int d) {
    MultiJet s = z(p, d, 0) * zb(p, d, 0);
    for (int j = 1; j < static_cast<int>(p.size()); ++j) s += z(p, d, j) * zb(p, d, j);
    return s;
}

CoordinatePotential flat(int n = 2) {
    return {n, [](const Point& p, int d) { return abs2(p, d); }, "flat"};
}
CoordinatePotential fubini_study() {
    return {2, [](const Point& p, int d) { return log(abs2(p, d) + 1.0); }, "fs"};
}
CoordinatePotential burns() {
    // |w|^2 + log|w| = |w|^2 + (1/2) log |w|^2
    return {2, [](const Point& p, int d) { return abs2(p, d) + 0.5 * log(abs2(p, d)); }, "burns"};
}
// A non-cscK, non-radial potential near the origin.
CoordinatePotential lumpy() {
    return {2,
            [](const Point& p, int d) {
                const MultiJet a = z(p, d, 0) * zb(p, d, 0), b = z(p, d, 1) * zb(p, d, 1);
                const MultiJet c = z(p, d, 0) * z(p, d, 0) * z(p, d, 0) * zb(p, d, 1);
                return log(abs2(p, d) + 1.0) + 0.3 * a * b + 0.05 * (c + z(p, d, 1) * zb(p, d, 0) * zb(p, d, 0) * zb(p, d, 0)) +
                       0.2 * a * a;
            },
            "lumpy"};
}

// Deterministic family of real, non-radial probe functions.
ScalarField probe(int k) {
    return [k](const Point& p, int d) {
        const double a = 0.3 + 0.1 * k, b = 0.2 - 0.05 * k, c = 0.1 * ((k % 3) - 1);
        const MultiJet x = z(p, d, 0), y = z(p, d, 1), xb = zb(p, d, 0), yb = zb(p, d, 1);
        MultiJet f = a * x * xb * y * yb + b * (x * x * yb + xb * xb * y) + c * (x * xb) * (x * xb) * (x * xb);
        f += cplx(0.0, 0.7) * (x * yb - xb * y);  // i(x ybar - xbar y) is real
        return exp(0.1 * f) * (1.0 + 0.01 * k);
    };
}

Point random_point(std::mt19937& rng, double rmin, double rmax) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), r(rmin, rmax);
    Point p(2);
    for (auto& c : p) c = cplx(u(rng), u(rng));
    const double s = r(rng) / std::sqrt(std::norm(p[0]) + std::norm(p[1]));
    for (auto& c : p) c *= s;
    return p;
}

}  // namespace

TEST(MultiJet, ProductRuleAndReality) {
    const Point p = {cplx(0.3, 0.1), cplx(-0.2, 0.4)};
    const MultiJet r = abs2(p, 6);
    EXPECT_LT(r.reality_defect(), 1e-15);
    const MultiJet l = log(r + 1.0);
    EXPECT_LT(l.reality_defect(), 1e-14);
    // d_0 (r^2) = 2 r d_0 r
    const MultiJet lhs = (r * r).d(0, false), rhs = 2.0 * r * r.d(0, false);
    for (int a = 0; a <= 2; ++a) {
        const int ai[2] = {a, 0}, bi[2] = {0, 1};
        EXPECT_NEAR(std::abs(lhs.partial(ai, bi) - rhs.partial(ai, bi)), 0.0, 1e-13);
    }
    EXPECT_NEAR(std::abs((reciprocal(l) * l - (l * 0.0 + 1.0)).value()), 0.0, 1e-15);
}

TEST(KahlerCore, FlatIsFlat) {
    std::mt19937 rng(1);
    for (int i = 0; i < 5; ++i) {
        const CurvatureData cd = curvature_at(flat(), random_point(rng, 0.1, 2.0));
        EXPECT_EQ(cd.scalar, 0.0);
        EXPECT_EQ(cd.ricci.norm(), 0.0);
        EXPECT_LT((cd.g * cd.g_inv - HermMatrix::Identity(2, 2)).norm(), 1e-10);
    }
}

TEST(KahlerCore, FubiniStudyScalarIs24) {
    std::mt19937 rng(2);
    for (int i = 0; i < 5; ++i) {
        const Point p = random_point(rng, 0.05, 3.0);
        const CurvatureData cd = curvature_at(fubini_study(), p);
        EXPECT_NEAR(cd.scalar, 24.0, 1e-11);
        // Einstein: Ric = 3 g
        EXPECT_LT((cd.ricci - 3.0 * cd.g).norm(), 1e-12);
        // Constant holomorphic sectional curvature: Rm = g g + g g (up to the factor 1).
        double worst = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c)
                    for (int d = 0; d < 2; ++d)
                        worst = std::max(worst,
                                         std::abs(cd.rm(a, b, c, d) - (cd.g(a, b) * cd.g(c, d) + cd.g(a, d) * cd.g(c, b))));
        EXPECT_LT(worst, 1e-12);
    }
}

TEST(KahlerCore, BurnsSimancaIsScalarFlat) {
    for (double r : {0.5, 1.0, 3.0}) {
        const Point p = {cplx(r * 0.6, 0.0), cplx(0.0, r * 0.8)};
        EXPECT_NEAR(curvature_at(burns(), p).scalar, 0.0, 1e-9);
    }
}

TEST(KahlerCore, FlatLaplacians) {
    const Point p = {cplx(0.4, -0.3), cplx(0.1, 0.7)};
    const ScalarField r2 = [](const Point& q, int d) { return abs2(q, d); };
    const ScalarField r4 = [](const Point& q, int d) { return abs2(q, d) * abs2(q, d); };
    const ScalarField one = [](const Point& q, int d) { return MultiJet(2, d, 1.0); };
    EXPECT_NEAR(laplacian(flat(), r2, p, 1), 8.0, 1e-13);
    EXPECT_NEAR(laplacian(flat(), r4, p, 2), 192.0, 1e-12);
    EXPECT_EQ(laplacian(flat(), one, p, 1), 0.0);
    EXPECT_EQ(laplacian(flat(), one, p, 2), 0.0);
    EXPECT_NEAR(linearized_L(flat(), r4, p), -48.0, 1e-12);
    EXPECT_EQ(linearized_L(fubini_study(), one, p), 0.0);
    // Delta r^k = k(k+2) r^(k-2) in real dimension 4
    const double k = -0.5;
    const ScalarField rk = [k](const Point& q, int d) { return exp(0.5 * k * log(abs2(q, d))); };
    const double r = std::sqrt(std::norm(p[0]) + std::norm(p[1]));
    EXPECT_NEAR(laplacian(flat(), rk, p, 1), k * (k + 2) * std::pow(r, k - 2), 1e-12);
}

TEST(KahlerCore, HolomorphyPotentialInKernel) {
    const ScalarField mu = [](const Point& q, int d) { return abs2(q, d) * reciprocal(abs2(q, d) + 1.0); };
    std::mt19937 rng(3);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(linearized_L(fubini_study(), mu, random_point(rng, 0.1, 3.0)), 0.0, 1e-11);
}

TEST(KahlerCore, AdjointEqualsLOnCscK) {
    std::mt19937 rng(4);
    for (int i = 0; i < 10; ++i) {
        const Point p = random_point(rng, 0.1, 2.0);
        const ScalarField phi = probe(i);
        EXPECT_NEAR(adjoint_Lstar(fubini_study(), phi, p), linearized_L(fubini_study(), phi, p), 1e-9);
    }
}

TEST(KahlerCore, AdjointOfOneIsQuarterLaplacianOfS) {
    const ScalarField one = [](const Point& q, int d) { return MultiJet(2, d, 1.0); };
    std::mt19937 rng(5);
    const CoordinatePotential pot = lumpy();
    for (int i = 0; i < 5; ++i) {
        const Point p = random_point(rng, 0.05, 0.5);
        const CurvatureJets cj = curvature_jets(pot, p);
        const double lap_s = laplacian_jet(cj, cj.scalar).value().real();
        EXPECT_NEAR(adjoint_Lstar(pot, one, p), -0.25 * lap_s, 1e-9 * (1 + std::abs(lap_s)));
    }
}

TEST(KahlerCore, FirstOrderDifferenceIdentity) {
    std::mt19937 rng(6);
    const CoordinatePotential pot = lumpy();
    for (int i = 0; i < 10; ++i) {
        const Point p = random_point(rng, 0.05, 0.5);
        const ScalarField phi = probe(i);
        const double lhs = adjoint_Lstar(pot, phi, p) - linearized_L(pot, phi, p);
        const double rhs = lstar_minus_l_explicit(pot, phi, p);
        EXPECT_GT(std::abs(rhs), 1e-3);
        EXPECT_NEAR(lhs, rhs, 1e-8 * (1 + std::abs(rhs)));
    }
}

TEST(KahlerCore, QuadraticRemainder) {
    const Point p = {cplx(0.2, 0.1), cplx(-0.3, 0.25)};
    const ScalarField zero = [](const Point& q, int d) { return MultiJet(2, d, 0.0); };
    EXPECT_EQ(nonlinear_Q(lumpy(), zero, p), 0.0);
    std::vector<double> ratios;
    for (double s : {1e-2, 5e-3, 2.5e-3}) {
        const ScalarField phi = [s](const Point& q, int d) { return s * probe(2)(q, d); };
        ratios.push_back(nonlinear_Q(lumpy(), phi, p) / (s * s));
    }
    EXPECT_LT(std::abs(ratios[2] / ratios[0] - 1.0), 0.1);
    EXPECT_GT(std::abs(ratios[2]), 1e-3);
}

TEST(KahlerCore, QTwoWaysOnFlat) {
    const Point p = {cplx(0.5, 0.1), cplx(0.2, -0.3)};
    const ScalarField quartic = [](const Point& q, int d) { return 0.05 * abs2(q, d) * abs2(q, d); };
    const double q = nonlinear_Q(flat(), quartic, p);
    const double direct = curvature_at(perturbed(flat(), quartic), p).scalar - linearized_L(flat(), quartic, p);
    EXPECT_NEAR(q, direct, 1e-10);
}

TEST(KahlerCore, RejectsNonPositiveMetric) {
    const CoordinatePotential bad = {2, [](const Point& q, int d) { return -1.0 * abs2(q, d); }, "neg"};
    EXPECT_THROW(curvature_at(bad, {cplx(0.1), cplx(0.2)}), NotKahlerError);
}

#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "blowup/grid.hpp"

using namespace blowup;

namespace {

Jet fs_moment(const TauPoint& p) {
    return Jet({p.u * p.v, 1.0 - 2.0 * p.tau, -2.0, 0.0, 0.0, 0.0}, p.tau);
}

std::vector<double> sample(const Grid& g, double (*f)(double)) {
    std::vector<double> v(g.size());
    for (int i = 0; i < g.size(); ++i) v[i] = f(g.point(i).tau);
    return v;
}

double smooth(double tau) { return std::cos(3.0 * tau) + tau * tau * tau; }

}  // namespace

TEST(Grid, StencilWeights) {
    const auto& W = Grid::stencil();
    EXPECT_NEAR(W[1][4], 0.75, 1e-14);
    EXPECT_NEAR(W[2][3], -49.0 / 18.0, 1e-13);
    EXPECT_NEAR(W[4][3], 28.0 / 3.0, 1e-12);
    for (int k = 1; k <= 4; ++k) {
        double s = 0.0;
        for (double w : W[k]) s += w;
        EXPECT_NEAR(s, 0.0, 1e-12);
    }
}

TEST(Grid, MapInversionAtBothEnds) {
    for (double a : {0.0, 1e-4}) {
        const Grid g({512, a}, 5e-4, 1.0);
        for (int i : {0, 1, 100, 510, 511}) {
            EXPECT_NEAR(g.xi_of(g.point(i)), g.xi(i), 1e-12) << a << " " << i;
            EXPECT_NEAR(g.point(i).u + g.point(i).v, 1.0 - 5e-4, 4e-15);
        }
    }
}

// Near the ends the k-th tau-derivative carries rounding of order
// eps/du^k; every consumer multiplies it by F^{k/2} or more, so the check is
// on that scale there.
TEST(Grid, FieldJetsConverge) {
    double prev = 0.0;
    for (int N : {128, 256}) {
        const Grid g({N, 0.0}, 0.0, 1.0);
        const auto f = sample(g, smooth);
        double interior = 0.0, ends = 0.0;
        for (int i : {0, 1, 2, 5, 50, N / 2, N - 40, N - 3, N - 1}) {
            const double t = g.point(i).tau;
            const Jet j = g.field_jet(f, i);
            const double exact[5] = {smooth(t), -3 * std::sin(3 * t) + 3 * t * t, -9 * std::cos(3 * t) + 6 * t,
                                     27 * std::sin(3 * t) + 6, 81 * std::cos(3 * t)};
            const double F = g.point(i).u * g.point(i).v;
            for (int k = 1; k <= 4; ++k) {
                const double e = std::abs(j[k] - exact[k]);
                ends = std::max(ends, e * std::pow(F, 0.5 * k));
            }
        }
        for (double t : {0.1, 0.3, 0.6, 0.9}) {
            const Jet j = g.jet_at(f, g.point_from_tau(t));
            const double exact[5] = {smooth(t), -3 * std::sin(3 * t) + 3 * t * t, -9 * std::cos(3 * t) + 6 * t,
                                     27 * std::sin(3 * t) + 6, 81 * std::cos(3 * t)};
            for (int k = 0; k <= 4; ++k) interior = std::max(interior, std::abs(j[k] - exact[k]));
        }
        if (prev > 0.0) EXPECT_GT(prev / interior, 4.0);
        EXPECT_LT(interior, 1e-3);
        EXPECT_LT(ends, 1e-5);
        const Jet mid = g.jet_at(f, g.point_from_tau(0.3));
        EXPECT_NEAR(mid[0], smooth(0.3), 1e-10);
        EXPECT_NEAR(mid[2], -9 * std::cos(0.9) + 1.8, 1e-5);
        prev = interior;
    }
}

TEST(Grid, DiscreteOperatorMatchesPointwise) {
    const Grid g({512, 0.0}, 0.0, 1.0);
    const auto f = sample(g, smooth);
    const BandedMatrix L = assemble(g, operator_coefficients(g, fs_moment, 2, RadialOp::L));
    const auto Lf = L.multiply(f);
    for (int i = 40; i < 480; i += 37) {
        const double t = g.point(i).tau;
        std::vector<double> d = {smooth(t), -3 * std::sin(3 * t) + 3 * t * t, -9 * std::cos(3 * t) + 6 * t,
                                 27 * std::sin(3 * t) + 6, 81 * std::cos(3 * t)};
        const double exact = moment_apply(fs_moment(g.point(i)), Jet(d, t), 2, RadialOp::L);
        EXPECT_NEAR(Lf[i], exact, 1e-4 * (1 + std::abs(exact))) << i;
    }
    // holomorphy potential
    const auto p = sample(g, [](double t) { return t - 2.0 / 3.0; });
    double worst = 0.0;
    for (double x : L.multiply(p)) worst = std::max(worst, std::abs(x));
    EXPECT_LT(worst, 1e-5);
}

TEST(Grid, BandedSolveMatchesDense) {
    BandedMatrix A(40, 3, 3);
    for (int i = 0; i < 40; ++i)
        for (int j = std::max(0, i - 3); j <= std::min(39, i + 3); ++j) A.set(i, j, i == j ? 10.0 : 1.0 / (1 + i + 2 * j));
    std::vector<double> b(40);
    for (int i = 0; i < 40; ++i) b[i] = std::sin(i);
    A.factor();
    const auto x = A.solve(b), y = A.solve(b, true);
    const Eigen::MatrixXd D = A.dense();
    const Eigen::Map<const Eigen::VectorXd> B(b.data(), 40);
    EXPECT_LT((Eigen::Map<const Eigen::VectorXd>(x.data(), 40) - D.lu().solve(B)).norm(), 1e-13);
    EXPECT_LT((Eigen::Map<const Eigen::VectorXd>(y.data(), 40) - D.transpose().lu().solve(B)).norm(), 1e-13);
}

TEST(Kernel, FubiniStudyKernelIsConstantsAndTau) {
    auto g = std::make_shared<Grid>(GridSpec{256, 0.0}, 0.0, 1.0);
    KernelBasis kb = kernel_basis(g, fs_moment, 2);
    ASSERT_EQ(kb.dim(), 2);
    EXPECT_GT(kb.singular_values[2] - kb.singular_values[1], 1e-4);
    const auto w = g->volume_weights(2);
    // f1 is the normalized constant, f2 is affine in tau
    double vol = 0.0;
    for (double x : w) vol += x;
    for (int i = 0; i < g->size(); i += 17) EXPECT_NEAR(kb.vectors[0][i], 1.0 / std::sqrt(vol), 1e-6);
    const double a = kb.vectors[1][0], b = kb.vectors[1][g->size() - 1];
    for (int i = 0; i < g->size(); i += 17) {
        const double s = (g->point(i).tau - g->point(0).tau) / (g->point(g->size() - 1).tau - g->point(0).tau);
        EXPECT_NEAR(kb.vectors[1][i], a + s * (b - a), 1e-5);
    }
    std::vector<double> cand;
    for (int i = 0; i < g->size(); ++i)
        if (g->point(i).tau >= 0.5) cand.push_back(g->xi(i));
    select_points(kb, cand);
    EXPECT_EQ(kb.points.size(), 2u);
    EXPECT_GT(kb.gram_sigma_min, 1e-3);
}

TEST(Kernel, PeriodicBiharmonicHasOneDimensionalKernel) {
    const int N = 64;
    const double h = 2 * M_PI / N;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
    const double w[5] = {1, -4, 6, -4, 1};
    for (int i = 0; i < N; ++i)
        for (int o = -2; o <= 2; ++o) L(i, (i + o + N) % N) += w[o + 2] / std::pow(h, 4);
    std::vector<double> sv;
    const Eigen::MatrixXd K = near_kernel(L, sv);
    EXPECT_EQ(K.cols(), 1);
    EXPECT_NEAR(std::abs(K(0, 0)), 1.0 / std::sqrt(N), 1e-10);
}

// For a non-cscK metric L kills constants but L* does not, while both keep
// a kernel of the same dimension.
TEST(Kernel, NonCscKBase) {
    auto g = std::make_shared<Grid>(GridSpec{256, 0.0}, 0.0, 1.0);
    const MomentMetric bumpy = [](const TauPoint& p) {
        const Jet tau = Jet::variable(p.tau, 6);
        Jet F = tau * (1.0 - tau) * (1.0 + 0.3 * tau * (1.0 - tau));
        F[0] = p.u * p.v * (1.0 + 0.3 * p.u * p.v);
        return F;
    };
    const BandedMatrix L = assemble(*g, operator_coefficients(*g, bumpy, 2, RadialOp::L));
    const BandedMatrix Ls = assemble(*g, operator_coefficients(*g, bumpy, 2, RadialOp::Lstar));
    std::vector<double> s1, s2;
    const Eigen::MatrixXd K1 = near_kernel(L.dense(), s1), K2 = near_kernel(Ls.dense(), s2);
    EXPECT_EQ(K1.cols(), 1);
    EXPECT_EQ(K2.cols(), 1);
    const std::vector<double> one(g->size(), 1.0);
    double worst = 0.0, lstar = 0.0, scale = 0.0;
    for (int i = 0; i < g->size(); ++i) scale = std::max(scale, std::abs(L.get(i, i)));
    for (double x : L.multiply(one)) worst = std::max(worst, std::abs(x) / scale);
    for (double x : Ls.multiply(one)) lstar = std::max(lstar, std::abs(x));
    EXPECT_LT(worst, 1e-13);
    EXPECT_GT(lstar, 1e-2);
}

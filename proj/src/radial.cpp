#include "blowup/radial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "blowup/kahler.hpp"

namespace blowup {

namespace {

void require_positive(const Jet& f, int n, const char* where) {
    if (f.order() < 2) throw std::invalid_argument("radial potential jet needs order >= 2");
    if (!(f[2] > 0.0) || (n > 1 && !(f[1] > 0.0))) {
        std::ostringstream os;
        os << where << ": profile not positive at t = " << f.base() << " (f' = " << f[1] << ", f'' = " << f[2] << ")";
        throw PositivityError(os.str());
    }
}

Jet ricci_potential(const Jet& f, int n) {
    const Jet fp = f.derivative(1), fpp = f.derivative(2);
    Jet P = double(n) * Jet::variable(f.base(), fpp.order()) - log(fpp);
    if (n > 1) P -= double(n - 1) * log(fp).truncated(fpp.order());
    return P;
}

}  // namespace

Jet radial_scalar_jet(const Jet& f, int n) {
    require_positive(f, n, "radial_scalar_jet");
    if (f.order() < 4) throw std::invalid_argument("radial_scalar_jet: potential jet order below 4");
    const Jet fp = f.derivative(1), fpp = f.derivative(2);
    const Jet P = ricci_potential(f, n);
    Jet s = P.derivative(2) / fpp;
    if (n > 1) s += double(n - 1) * (P.derivative(1) / fp).truncated(s.order());
    return 4.0 * s;
}

Jet radial_laplacian_jet(const Jet& f, const Jet& u, int n) {
    if (u.order() < 2 || f.order() < 2) throw std::invalid_argument("radial_laplacian_jet: insufficient jet order");
    const int K = std::min(u.order(), f.order()) - 2;
    const Jet fp = f.derivative(1).truncated(K), fpp = f.derivative(2).truncated(K);
    Jet s = u.derivative(2).truncated(K) / fpp;
    if (n > 1) s += double(n - 1) * u.derivative(1).truncated(K) / fp;
    return 4.0 * s;
}

double radial_apply(const Jet& f, const Jet& phi, int n, RadialOp which) {
    require_positive(f, n, "radial_apply");
    if (phi.order() < 4) throw std::invalid_argument("radial_apply: field jet order below 4");
    if (f.order() < 6 && which == RadialOp::Lstar) throw std::invalid_argument("radial_apply: L* needs potential order 6");
    if (f.order() < 4) throw std::invalid_argument("radial_apply: potential jet order below 4");
    const Jet u = phi.truncated(4);
    const double fp = f[1], fpp = f[2];
    const Jet P = ricci_potential(f, n);
    const double bih = radial_laplacian_jet(f, radial_laplacian_jet(f, u, n), n).value();
    const double ric = (n - 1) * P[1] * u[1] / (fp * fp) + P[2] * u[2] / (fpp * fpp);
    const double L = -0.25 * bih - 4.0 * ric;
    switch (which) {
        case RadialOp::L: return L;
        case RadialOp::Lstar: {
            const Jet S = radial_scalar_jet(f, n);
            const double lapS = radial_laplacian_jet(f, S, n).value();
            return L - 2.0 * u[1] * S[1] / fpp - 0.25 * u[0] * lapS;
        }
        case RadialOp::Q: {
            const Jet g = f.truncated(4) + u;
            return radial_scalar_jet(g, n).value() - radial_scalar_jet(f.truncated(4), n).value() - L;
        }
    }
    throw std::invalid_argument("unknown radial operator");
}

std::vector<double> radial_coefficients(const Jet& f, int n, RadialOp which) {
    if (which == RadialOp::Q) throw std::invalid_argument("Q is nonlinear; no coefficients");
    std::vector<double> c(5);
    for (int k = 0; k <= 4; ++k) {
        Jet e(0.0, 4, f.base());
        e[k] = 1.0;
        c[k] = radial_apply(f, e, n, which);
    }
    return c;
}

RadialCurvature radial_curvature(const RadialProfile& p, double t) {
    if (t < p.t_min || t > p.t_max) throw std::invalid_argument("radial_curvature: t outside profile domain");
    const Jet f = p.jet(t);
    if (!f.all_finite()) throw std::domain_error("radial_curvature: non-finite profile jet");
    RadialCurvature rc;
    rc.S = radial_scalar_jet(f, p.n).value();
    rc.P = ricci_potential(f, p.n);
    const double et = std::exp(-t);
    rc.eigen_g = {et * f[1], et * f[2]};
    rc.eigen_ric = {et * rc.P[1], et * rc.P[2]};
    return rc;
}

double radial_operator(const RadialProfile& p, const RadialField& phi, double t, RadialOp which) {
    return radial_apply(p.jet(t), phi(t), p.n, which);
}

// ---------------------------------------------------------------------------

std::pair<Jet, Jet> logistic_jets(double t, int order) {
    // sigma' = sigma (1 - sigma): Taylor recursion on (a, b) = (sigma, 1 - sigma).
    std::vector<double> a(order + 1, 0.0), b(order + 1, 0.0);
    if (t >= 0) {
        const double e = std::exp(-t);
        a[0] = 1.0 / (1.0 + e);
        b[0] = e / (1.0 + e);
    } else {
        const double e = std::exp(t);
        a[0] = e / (1.0 + e);
        b[0] = 1.0 / (1.0 + e);
    }
    for (int k = 0; k < order; ++k) {
        double ab = 0.0;
        for (int j = 0; j <= k; ++j) ab += a[j] * b[k - j];
        a[k + 1] = ab / (k + 1);
        b[k + 1] = -a[k + 1];
    }
    return {from_taylor(a, t), from_taylor(b, t)};
}

Jet fubini_study_jet(double t, int order) {
    const Jet sigma = logistic_jets(t, order - 1).first;
    std::vector<double> d(order + 1);
    d[0] = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    for (int k = 1; k <= order; ++k) d[k] = sigma[k - 1];
    return Jet(std::move(d), t);
}

Jet fs_normal_phi_jet(double t, int order) {
    // g(s) = log(1+s) - s composed with s = e^t.
    const double s = std::exp(t);
    std::vector<double> g(order + 1);
    if (s < 1e-2) {
        double v = 0.0, p = s * s;
        for (int k = 2; k < 40; ++k) {
            v += (k % 2 == 0 ? -1.0 : 1.0) * p / k;
            p *= s;
        }
        g[0] = v;
    } else {
        g[0] = std::log1p(s) - s;
    }
    if (order >= 1) g[1] = -s / (1.0 + s);
    double fact = 1.0;
    for (int k = 2; k <= order; ++k) {
        fact *= (k - 1);
        g[k] = (k % 2 == 0 ? -1.0 : 1.0) * fact / std::pow(1.0 + s, k);
    }
    return compose(Jet(std::move(g), s), exp(Jet::variable(t, order)));
}

Jet fubini_study_moment(const TauPoint& q) {
    return Jet({q.u * q.v, 1.0 - 2.0 * q.tau, -2.0, 0.0, 0.0, 0.0, 0.0}, q.tau);
}

RadialProfile profile_library(const std::string& name, int n) {
    if (n < 2) throw std::invalid_argument("profile_library: n must be >= 2");
    RadialProfile p;
    p.n = n;
    p.label = name;
    if (name == "flat") {
        p.f = [](double t) { return exp(Jet::variable(t)); };
    } else if (name == "burns_simanca") {
        if (n != 2)
            throw std::invalid_argument("profile_library: burns_simanca is explicit only for n = 2; supply a profile");
        p.f = [](double t) {
            const Jet x = Jet::variable(t);
            return exp(x) + 0.5 * x;
        };
    } else if (name == "fubini_study") {
        p.f = [](double t) { return fubini_study_jet(t); };
        p.normal_phi = [](double t) { return fs_normal_phi_jet(t); };
        p.moment = fubini_study_moment;
        p.t_of_moment = [](const TauPoint& q) { return std::log(q.u) - std::log(q.v); };
    } else if (name == "fs_normal_phi") {
        p.f = [](double t) { return fs_normal_phi_jet(t); };
    } else {
        throw std::invalid_argument("profile_library: unknown profile '" + name + "'");
    }
    return p;
}

// ---------------------------------------------------------------------------

namespace {

Jet moment_Pt(const Jet& F, int n) {
    const int K = F.order() - 1;
    const Jet tau = Jet::variable(F.base(), K);
    Jet P = Jet(double(n), K, F.base()) - F.derivative(1);
    if (n > 1) P -= double(n - 1) * F.truncated(K) / tau;
    return P;
}

double moment_ric_pairing(const Jet& F, const Jet& u, int n) {
    const Jet P = moment_Pt(F, n);
    const double tau = F.base();
    const Jet Fu = F.truncated(1) * u.derivative(1).truncated(1);
    return (n - 1) * P[0] * F[0] * u[1] / (tau * tau) + P[1] * Fu[1];
}

}  // namespace

Jet moment_scalar_jet(const Jet& F, int n) {
    if (F.order() < 2) throw std::invalid_argument("moment_scalar_jet: F order below 2");
    if (!(F.value() > 0.0) || !(F.base() > 0.0)) {
        std::ostringstream os;
        os << "moment_scalar_jet: non-positive metric at tau = " << F.base() << " (F = " << F.value() << ")";
        throw PositivityError(os.str());
    }
    const Jet P = moment_Pt(F, n);
    const int K = P.order() - 1;
    Jet s = P.derivative(1);
    if (n > 1) s += double(n - 1) * P.truncated(K) / Jet::variable(F.base(), K);
    return 4.0 * s;
}

Jet moment_laplacian_jet(const Jet& F, const Jet& u, int n) {
    const int m = std::min(u.order(), F.order() + 1);
    if (m < 2) throw std::invalid_argument("moment_laplacian_jet: insufficient jet order");
    const Jet Fu = F.truncated(m - 1) * u.derivative(1).truncated(m - 1);
    Jet s = Fu.derivative(1);
    if (n > 1) s += double(n - 1) * Fu.truncated(m - 2) / Jet::variable(F.base(), m - 2);
    return 4.0 * s;
}

double moment_apply(const Jet& F, const Jet& u, int n, RadialOp which) {
    if (u.order() < 4) throw std::invalid_argument("moment_apply: field jet order below 4");
    if (F.order() < (which == RadialOp::L ? 3 : 4)) throw std::invalid_argument("moment_apply: F order too low");
    if (!(F.value() > 0.0)) throw PositivityError("moment_apply: non-positive metric");
    const Jet v = u.truncated(4);
    const double bih = moment_laplacian_jet(F, moment_laplacian_jet(F, v, n), n).value();
    const double L = -0.25 * bih - 4.0 * moment_ric_pairing(F, v, n);
    switch (which) {
        case RadialOp::L: return L;
        case RadialOp::Lstar: {
            const Jet S = moment_scalar_jet(F, n);
            const double lapS = moment_laplacian_jet(F, S, n).value();
            return L - 2.0 * F[0] * v[1] * S[1] - 0.25 * v[0] * lapS;
        }
        case RadialOp::Q: {
            const Jet Fn = moment_perturb(F, v);
            return moment_scalar_jet(Fn, n).value() - moment_scalar_jet(F.truncated(4), n).value() - L;
        }
    }
    throw std::invalid_argument("unknown radial operator");
}

Jet moment_L_jet(const Jet& F, const Jet& u, int n) {
    const int m = std::min(u.order() - 4, F.order() - 3);
    if (m < 0) throw std::invalid_argument("moment_L_jet: insufficient jet order");
    const Jet bih = moment_laplacian_jet(F, moment_laplacian_jet(F, u, n), n).truncated(m);
    const Jet P = moment_Pt(F, n).truncated(m + 1);
    const Jet Fu = F.truncated(m + 1) * u.derivative(1).truncated(m + 1);
    Jet ric = P.derivative(1) * Fu.derivative(1);
    if (n > 1) {
        const Jet tau = Jet::variable(F.base(), m);
        ric += double(n - 1) * P.truncated(m) * Fu.truncated(m) / (tau * tau);
    }
    return -0.25 * bih - 4.0 * ric;
}

std::vector<double> moment_coefficients(const Jet& F, int n, RadialOp which) {
    if (which == RadialOp::Q) throw std::invalid_argument("Q is nonlinear; no coefficients");
    std::vector<double> c(5);
    for (int k = 0; k <= 4; ++k) {
        Jet e(0.0, 4, F.base());
        e[k] = 1.0;
        c[k] = moment_apply(F, e, n, which);
    }
    return c;
}

Jet moment_from_t(const Jet& f) {
    if (f.order() < 3) throw std::invalid_argument("moment_from_t: potential order below 3");
    const Jet t_of_tau = revert(f.derivative(1));
    return compose(f.derivative(2), t_of_tau.truncated(f.order() - 2));
}

Jet moment_perturb(const Jet& F, const Jet& u) {
    const int m = std::min(F.order(), u.order() - 1);
    if (m < 1) throw std::invalid_argument("moment_perturb: insufficient jet order");
    const Jet tau_new = Jet::variable(F.base(), m) + F.truncated(m) * u.derivative(1).truncated(m);
    const Jet F_new = F.truncated(m - 1) * tau_new.derivative(1);
    return compose(F_new, revert(tau_new).truncated(m - 1));
}

double radial_volume_factor(int n) {
    // 2^{n-1} |S^{2n-1}|, |S^{2n-1}| = 2 pi^n / (n-1)!
    double fact = 1.0;
    for (int k = 2; k < n; ++k) fact *= k;
    return std::pow(2.0, n - 1) * 2.0 * std::pow(std::numbers::pi, n) / fact;
}

namespace {

struct GaussRule {
    std::vector<double> x, w;  // on [-1, 1]
};

GaussRule gauss_legendre(int m) {
    // Golub-Welsch.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (int i = 1; i < m; ++i) J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussRule r;
    for (int i = 0; i < m; ++i) {
        r.x.push_back(es.eigenvalues()(i));
        const double v = es.eigenvectors()(0, i);
        r.w.push_back(2.0 * v * v);
    }
    return r;
}

}  // namespace

double total_scalar_curvature(const RadialProfile& p, const QuadratureSpec& q) {
    if (!(q.t_hi > q.t_lo) || !(q.panel_width > 0.0) || q.points_per_panel < 2)
        throw std::invalid_argument("total_scalar_curvature: bad quadrature spec");
    if (q.cutoff_radius > 0.0 && q.panel_width > 1.0 / 16.0) {
        std::ostringstream os;
        os << "total_scalar_curvature: grid spacing " << q.panel_width << " in t leaves |z| = " << q.cutoff_radius
           << " unresolved (need <= r/16)";
        throw std::invalid_argument(os.str());
    }
    const GaussRule g = gauss_legendre(q.points_per_panel);
    const int panels = static_cast<int>(std::ceil((q.t_hi - q.t_lo) / q.panel_width));
    const double h = (q.t_hi - q.t_lo) / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double a = q.t_lo + k * h;
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double t = a + 0.5 * h * (g.x[i] + 1.0);
            const Jet f = p.jet(t);
            const double dens = std::pow(f[1], p.n - 1) * f[2];
            total += 0.5 * h * g.w[i] * radial_scalar_jet(f, p.n).value() * dens;
        }
    }
    return radial_volume_factor(p.n) * total;
}

double total_scalar_intersection(double tau_max, double tau_min) {
    // c_1 = 3H - E; [omega].H = 2 pi tau_max, [omega].E = 2 pi tau_min.
    const double c1_dot_omega = 3.0 * 2.0 * std::numbers::pi * tau_max - 2.0 * std::numbers::pi * tau_min;
    return 4.0 * 2.0 * std::numbers::pi * c1_dot_omega;
}

// ---------------------------------------------------------------------------

CrossCheckReport cross_check(const RadialProfile& p, int count, std::uint64_t seed, double t_lo, double t_hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(t_lo, t_hi), u(-1.0, 1.0), amp(0.5, 1.5);
    const CoordinatePotential pot = radial_potential(p.f, p.n, p.label);
    CrossCheckReport rep;
    rep.label = p.label;
    rep.count = count;
    auto dev = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    for (int i = 0; i < count; ++i) {
        const double t = ut(rng);
        Point z(p.n);
        double norm = 0.0;
        for (auto& c : z) {
            c = cplx(u(rng), u(rng));
            norm += std::norm(c);
        }
        const double scale = std::exp(0.5 * t) / std::sqrt(norm);
        for (auto& c : z) c *= scale;

        const double a = amp(rng), b = amp(rng), c0 = u(rng);
        const RadialField phi = [a, b, c0](double s) {
            const Jet x = Jet::variable(s);
            return 1e-3 * (a * sin(b * x + c0) + exp(x) * c0);
        };
        const ScalarField phi_z = radial_field(phi);

        const double s_rad = radial_curvature(p, t).S;
        const double s_cor = curvature_at(pot, z).scalar;
        rep.max_rel_dev_S = std::max(rep.max_rel_dev_S, dev(s_rad, s_cor));
        rep.max_rel_dev_L =
            std::max(rep.max_rel_dev_L, dev(radial_operator(p, phi, t, RadialOp::L), linearized_L(pot, phi_z, z)));
        rep.max_rel_dev_Lstar = std::max(rep.max_rel_dev_Lstar,
                                         dev(radial_operator(p, phi, t, RadialOp::Lstar), adjoint_Lstar(pot, phi_z, z)));
        rep.max_rel_dev_Q =
            std::max(rep.max_rel_dev_Q, dev(radial_operator(p, phi, t, RadialOp::Q), nonlinear_Q(pot, phi_z, z)));
    }
    rep.max_rel_dev = std::max({rep.max_rel_dev_S, rep.max_rel_dev_L, rep.max_rel_dev_Lstar, rep.max_rel_dev_Q});
    rep.passed = rep.max_rel_dev <= 1e-6;
    return rep;
}

nlohmann::json profile_to_json(const RadialProfile& p, const std::vector<double>& grid) {
    nlohmann::json samples = nlohmann::json::array();
    for (const Jet& j : grid_sample(p.f, grid)) {
        std::vector<double> d(j.derivatives().begin(), j.derivatives().end());
        samples.push_back({{"t", j.base()}, {"jet", d}});
    }
    return {{"label", p.label}, {"n", p.n}, {"domain", {p.t_min, p.t_max}}, {"samples", samples}};
}

nlohmann::json to_json(const CrossCheckReport& r) {
    return {{"label", r.label},
            {"count", r.count},
            {"max_rel_dev_S", r.max_rel_dev_S},
            {"max_rel_dev_L", r.max_rel_dev_L},
            {"max_rel_dev_Lstar", r.max_rel_dev_Lstar},
            {"max_rel_dev_Q", r.max_rel_dev_Q},
            {"max_rel_dev", r.max_rel_dev},
            {"passed", r.passed}};
}

}  // namespace blowup

#include "blowup/gluing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

namespace blowup {

namespace {

Jet rebase(const Jet& j, double base) {
    return Jet(std::vector<double>(j.derivatives().begin(), j.derivatives().end()), base);
}

CutoffSpec scaled(const CutoffSpec& c, double r) {
    CutoffSpec s = c;
    s.inner_radius = c.inner_radius * r;
    s.outer_radius = c.outer_radius * r;
    return s;
}

// f' = tau on [lo, hi] for an increasing f'; safeguarded Newton.
double solve_t(const RadialField& f, double tau, double lo, double hi) {
    double a = lo, b = hi, t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const Jet j = f(t);
        const double g = j[1] - tau;
        if (std::abs(g) <= 1e-15 * std::max(1.0, std::abs(tau))) return t;
        if (g > 0.0) b = t; else a = t;
        double next = t - g / j[2];
        if (!(next > a && next < b)) next = 0.5 * (a + b);
        if (std::abs(next - t) < 1e-15 * std::max(1.0, std::abs(t))) return next;
        t = next;
    }
    return t;
}

TauPoint base_point_from_t(const RadialProfile& base, double t) {
    if (base.label == "fubini_study") {
        // sigma(t) and 1 - sigma(t) without cancellation
        const double e = std::exp(-std::abs(t));
        const double lo = e / (1.0 + e), hi = 1.0 / (1.0 + e);
        return t < 0 ? TauPoint{lo, lo, hi} : TauPoint{hi, hi, lo};
    }
    const double tau = base.f(t)[1];
    return {tau, tau, 1.0 - tau};
}

// tau_0 as a t-jet for a base with moment data, order K + 1 from F of order K.
Jet base_tau_of_t(const RadialProfile& base, double t) {
    const TauPoint p0 = base_point_from_t(base, t);
    if (base.moment) {
        const Jet F0 = base.moment(p0);
        const Jet inv = 1.0 / F0;
        std::vector<double> d = {t};
        for (int k = 0; k <= inv.order(); ++k) d.push_back(inv[k]);
        Jet tt(std::move(d), p0.tau);
        return revert(tt);
    }
    return base.f(t).derivative(1);
}

Jet core_potential(const GluingConfig& cfg, double t) {
    const double le = std::log(cfg.eps);
    const Jet x = Jet::variable(t);
    if (cfg.n == 2) return cfg.eps * cfg.eps * (0.5 * x - le);
    return cfg.eps * cfg.eps * rebase(cfg.core_psi(t - 2.0 * le), t);
}

}  // namespace

double GluingConfig::r_eps() const { return std::pow(eps, beta); }

void GluingConfig::validate() const {
    std::ostringstream os;
    if (!(eps > 0.0 && eps <= 0.2)) os << "eps must lie in (0, 0.2]; ";
    if (!(delta > -1.0 && delta < 0.0)) os << "delta must lie in (-1, 0); ";
    if (n < 2) os << "n must be >= 2; ";
    if (n == 2 && !(beta > 0.5 && beta < 2.0 / 3.0)) os << "beta must lie in (1/2, 2/3) for n = 2; ";
    if (n >= 3 && std::abs(beta - double(n - 1) / n) > 1e-12) os << "beta must equal (n-1)/n for n >= 3; ";
    if (n >= 3 && !core_psi) os << "n >= 3 needs a core profile psi; ";
    if (grid.nodes < 64) os << "grid needs at least 64 nodes; ";
    const std::string pre = os.str();
    if (!pre.empty()) throw std::invalid_argument("GluingConfig: " + pre);
    cutoff.validate();
    const double r = r_eps();
    if (!(eps < r && 2.0 * r * cutoff.outer_radius / 2.0 < 1.0))
        throw std::invalid_argument("GluingConfig: need eps < r_eps < 2 r_eps < 1");
}

MomentPoint GluedFamily::at(const TauPoint& p) const { return eval(p); }

TauPoint GluedFamily::from_base(const TauPoint& p0) const {
    if (p0.tau < base_point_from_t(base, 2.0 * std::log(r_outer)).tau)
        throw std::invalid_argument("GluedFamily::from_base: point inside B_{2 r_eps}");
    return outer_map(p0);
}

MomentMetric GluedFamily::metric() const {
    return [fam = *this](const TauPoint& p) { return fam.at(p).F; };
}

Grid GluedFamily::make_grid() const {
    GridSpec spec = config.grid;
    if (spec.core_scale <= 0.0) spec.core_scale = 0.25 * config.eps * config.eps;
    return Grid(spec, tau_min, tau_max);
}

namespace {

GluedFamily glue(const RadialProfile& base, const GluingConfig& cfg, bool check) {
    cfg.validate();
    if (!base.normal_phi) throw std::invalid_argument("make_glued_profile: base has no normal-form data");
    if (base.n != cfg.n) throw std::invalid_argument("make_glued_profile: dimension mismatch");
    GluedFamily fam;
    fam.config = cfg;
    fam.base = base;
    const double eps = cfg.eps, r = cfg.r_eps();
    fam.r_inner = r;
    fam.r_outer = 2.0 * r;
    fam.class_coeffs = {1.0, -eps * eps};
    const double t_in = 2.0 * std::log(r), t_out = 2.0 * std::log(2.0 * r);
    const CutoffSpec g1 = scaled(cfg.cutoff, r);

    fam.profile.n = cfg.n;
    fam.profile.label = "glued(" + base.label + ")";
    fam.profile.t_min = base.t_min;
    fam.profile.t_max = base.t_max;
    fam.profile.f = [cfg, base, g1, t_in, t_out](double t) {
        if (t >= t_out) return base.f(t);
        const Jet x = Jet::variable(t);
        if (t <= t_in) return exp(x) + core_potential(cfg, t);
        const Jet c = cutoff_of(g1, exp(0.5 * x));
        return exp(x) + c * base.normal_phi(t) + (1.0 - c) * core_potential(cfg, t);
    };

    const RadialField f = fam.profile.f;
    fam.tau_min = cfg.n == 2 ? 0.5 * eps * eps : eps * eps * cfg.core_psi(-80.0)[1];
    fam.tau_max = 1.0;
    fam.tau_in = f(t_in)[1];
    fam.tau_out = f(t_out)[1];
    if (check) check_neck_positivity(fam);

    fam.outer_map = [tm = fam.tau_min](const TauPoint& p0) { return TauPoint{p0.tau, p0.tau - tm, p0.v}; };
    const double u_in = fam.tau_in - fam.tau_min, tau_out = fam.tau_out;
    fam.eval = [fam_cfg = cfg, base, f, t_in, t_out, u_in, tau_out](const TauPoint& p) {
        MomentPoint m;
        m.p = p;
        if (p.u <= u_in && fam_cfg.n == 2) {
            m.region = Region::core;
            m.F = Jet({p.u, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0}, p.tau);
            m.t = std::log(p.u);
            m.base = base_point_from_t(base, m.t);
            return m;
        }
        if (p.tau >= tau_out && base.moment) {
            m.region = Region::outer;
            m.base = {p.tau, p.tau, p.v};
            m.F = base.moment(m.base);
            m.t = base.t_of_moment(m.base);
            return m;
        }
        m.region = p.u <= u_in ? Region::core : (p.tau >= tau_out ? Region::outer : Region::neck);
        const double lo = m.region == Region::neck ? t_in : base.t_min, hi = m.region == Region::neck ? t_out : base.t_max;
        m.t = solve_t(f, p.tau, lo, hi);
        m.F = rebase(moment_from_t(f(m.t)), p.tau);
        m.base = base_point_from_t(base, m.t);
        return m;
    };
    return fam;
}

}  // namespace

GluedFamily make_glued_profile(const RadialProfile& base, const GluingConfig& cfg) { return glue(base, cfg, true); }

RadialProfile make_omega_prime(const RadialProfile& base, double r, const CutoffSpec& cutoff) {
    if (!base.normal_phi) throw std::invalid_argument("make_omega_prime: base has no normal-form data");
    if (!(r > 0.0 && r < 0.5)) throw std::invalid_argument("make_omega_prime: r must lie in (0, 1/2)");
    cutoff.validate();
    const CutoffSpec c = scaled(cutoff, r);
    RadialProfile p;
    p.n = base.n;
    p.label = "omega_prime(" + base.label + ")";
    p.t_min = base.t_min;
    p.t_max = base.t_max;
    const double t_out = 2.0 * std::log(c.outer_radius);
    p.f = [base, c, t_out](double t) {
        const Jet x = Jet::variable(t);
        if (t >= t_out) return exp(x);
        return exp(x) + (1.0 - cutoff_of(c, exp(0.5 * x))) * base.normal_phi(t);
    };
    for (double t = 2.0 * std::log(r) - 1.0; t <= t_out + 1e-12; t += 0.01) {
        const Jet j = p.f(t);
        if (!(j[1] > 0.0 && j[2] > 0.0)) throw PositivityError("make_omega_prime: metric not positive");
    }
    return p;
}

void check_neck_positivity(const GluedFamily& fam, int samples) {
    const double t0 = 2.0 * std::log(fam.r_inner), t1 = 2.0 * std::log(fam.r_outer);
    for (int i = 0; i <= samples; ++i) {
        const double t = t0 + (t1 - t0) * i / samples;
        const Jet j = fam.profile.f(t);
        if (!(j[1] > 0.0 && j[2] > 0.0)) {
            std::ostringstream os;
            os << "glued metric not positive at t = " << t << " (f' = " << j[1] << ", f'' = " << j[2] << ")";
            throw PositivityError(os.str());
        }
    }
}

// ---------------------------------------------------------------------------

Jet GammaData::singular_jet(const TauPoint& p0, int order) const {
    const Jet X = Jet::variable(p0.tau, order);
    Jet V = 1.0 - X;
    V[0] = p0.v;
    Jet lx = log(X);
    lx[0] = std::log(p0.u);
    Jet T = lx - log(V);
    const Jet chi = 1.0 - cutoff_of(scaled(cutoff, r), exp(0.5 * T));
    return 0.5 * chi * T;
}

Jet GammaData::g_jet(const TauPoint& p0) const {
    Jet g(0.0, 4, p0.tau);
    for (int a = 0; a < kernel.dim(); ++a) g += g_coeffs[a] * grid().jet_at(kernel.vectors[a], p0);
    return g;
}

double GammaData::g_value(const TauPoint& p0) const {
    double g = 0.0;
    for (int a = 0; a < kernel.dim(); ++a) g += g_coeffs[a] * kernel.eval(a, p0);
    return g;
}

Jet GammaData::theta_jet(const TauPoint& p0) const {
    const Jet th = grid().jet_at(theta, p0);
    std::vector<double> d(7, 0.0);
    for (int k = 0; k <= 3; ++k) d[k] = th[k];
    const Jet F0 = base.moment(p0);
    // The equation degenerates like F^2 at both ends; keep the stencil there.
    if (F0.value() < 1e-3) {
        d[4] = th[4];
        return Jet(d, p0.tau);
    }
    const int n = base.n;
    const Jet R = g_jet(p0).truncated(2) - moment_L_jet(F0, singular_jet(p0, 6), n);
    const Jet L0 = moment_L_jet(F0, Jet(d, p0.tau), n);
    Eigen::Matrix3d M;
    Eigen::Vector3d b;
    for (int c = 0; c < 3; ++c) {
        Jet e(0.0, 6, p0.tau);
        e[4 + c] = 1.0;
        const Jet Lc = moment_L_jet(F0, e, n);
        for (int m = 0; m < 3; ++m) M(m, c) = Lc[m];
        b(c) = R[c] - L0[c];
    }
    const Eigen::Vector3d x = M.partialPivLu().solve(b);
    for (int c = 0; c < 3; ++c) d[4 + c] = x(c);
    return Jet(d, p0.tau);
}

Jet GammaData::gamma_jet(const TauPoint& p0) const { return singular_jet(p0, 6) + theta_jet(p0); }

Jet GammaData::psi_jet(const TauPoint& p0) const {
    const Jet X = Jet::variable(p0.tau, 6);
    Jet V = 1.0 - X;
    V[0] = p0.v;
    Jet lx = log(X);
    lx[0] = std::log(p0.u);
    return gamma_jet(p0) - 0.5 * (lx - log(V));
}

GammaData build_gamma(const RadialProfile& base, const KernelBasis& kernel, double r, const CutoffSpec& cutoff) {
    if (!base.moment) throw std::invalid_argument("build_gamma: base has no moment data");
    if (!kernel.grid) throw std::invalid_argument("build_gamma: kernel has no grid");
    if (!(r > 0.0 && 2.0 * r * cutoff.outer_radius / 2.0 < 2.0)) throw std::invalid_argument("build_gamma: bad radius");
    const Grid& g = *kernel.grid;
    const int N = g.size(), d = kernel.dim(), n = base.n;
    if (d == 0) throw KernelError("build_gamma: empty kernel");

    GammaData G;
    G.kernel = kernel;
    G.base = base;
    G.cutoff = cutoff;
    G.r = r;

    const BandedMatrix L = assemble(g, operator_coefficients(g, base.moment, n, RadialOp::L));
    std::vector<double> Lh(N);
    for (int i = 0; i < N; ++i) {
        const TauPoint& p = g.point(i);
        Lh[i] = moment_apply(base.moment(p), G.singular_jet(p, 4), n, RadialOp::L);
    }

    const int M = N + d;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(M);
    for (int i = 0; i < N; ++i) {
        for (int j = std::max(0, i - 3); j <= std::min(N - 1, i + 3); ++j) A(i, j) = L.get(i, j);
        for (int a = 0; a < d; ++a) A(i, N + a) = -kernel.vectors[a][i];
        b(i) = -Lh[i];
    }
    // theta(p) = 0
    for (const auto& [j, w] : g.interp_row(0.0)) A(N, j) += w;
    // orthogonal to the non-constant kernel directions
    const auto W = g.volume_weights(n);
    for (int a = 1; a < d; ++a)
        for (int j = 0; j < N; ++j) A(N + a, j) = W[j] * kernel.vectors[a][j];
    G.gauge_rows = d;

    const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() < M) throw KernelError("build_gamma: bordered system is rank deficient");

    // The rows near the ends carry entries of size N^4, so a double solution
    // leaves a residual of eps * N^4 |theta|. Refine with residuals in long
    // double and keep theta as an unevaluated sum of two doubles.
    std::vector<long double> x(M, 0.0L);
    auto residual = [&](std::vector<long double>& out) {
        out.assign(M, 0.0L);
        for (int i = 0; i < M; ++i) {
            long double acc = b(i);
            for (int j = 0; j < M; ++j)
                if (A(i, j) != 0.0) acc -= static_cast<long double>(A(i, j)) * x[j];
            out[i] = acc;
        }
    };
    std::vector<long double> rl;
    Eigen::VectorXd rd(M);
    for (int it = 0; it < 4; ++it) {
        residual(rl);
        for (int i = 0; i < M; ++i) rd(i) = static_cast<double>(rl[i]);
        const Eigen::VectorXd dx = lu.solve(rd);
        for (int i = 0; i < M; ++i) x[i] += dx(i);
    }
    G.theta.resize(N);
    G.theta_lo.resize(N);
    for (int j = 0; j < N; ++j) {
        G.theta[j] = static_cast<double>(x[j]);
        G.theta_lo[j] = static_cast<double>(x[j] - G.theta[j]);
    }
    G.g_coeffs.resize(d);
    for (int a = 0; a < d; ++a) G.g_coeffs[a] = static_cast<double>(x[N + a]);

    for (int i = 0; i < N; ++i) {
        long double gi = 0.0L, lt = 0.0L;
        double scale = std::abs(Lh[i]);
        for (int a = 0; a < d; ++a) gi += static_cast<long double>(G.g_coeffs[a]) * kernel.vectors[a][i];
        for (int j = std::max(0, i - 3); j <= std::min(N - 1, i + 3); ++j) {
            lt += static_cast<long double>(L.get(i, j)) * (static_cast<long double>(G.theta[j]) + G.theta_lo[j]);
            scale += std::abs(L.get(i, j) * G.theta[j]);
        }
        const double res = static_cast<double>(std::abs(lt + Lh[i] - gi));
        G.residual = std::max(G.residual, res);
        G.rel_residual = std::max(G.rel_residual, res / (scale + std::abs(static_cast<double>(gi))));
    }
    G.theta_at_p = g.interpolate(G.theta, 0.0);
    return G;
}

// ---------------------------------------------------------------------------

GluedFamily make_improved_profile(const RadialProfile& base, const GluingConfig& cfg,
                                  std::shared_ptr<const GammaData> gamma) {
    return make_improved_profile(glue(base, cfg, false), std::move(gamma));
}

GluedFamily make_improved_profile(const GluedFamily& fam, std::shared_ptr<const GammaData> gamma) {
    if (fam.improved) throw std::invalid_argument("make_improved_profile: family already improved");
    if (fam.config.n != 2) throw std::invalid_argument("make_improved_profile: n = 2 only");
    if (!gamma) throw std::invalid_argument("make_improved_profile: no Gamma");
    GluedFamily out = fam;
    out.improved = true;
    out.gamma = gamma;
    const GluingConfig cfg = fam.config;
    const double e2 = cfg.eps * cfg.eps, r = cfg.r_eps();
    const double t_in = 2.0 * std::log(r), t_out = 2.0 * std::log(2.0 * r);
    const CutoffSpec g1 = scaled(cfg.cutoff, r);
    const RadialProfile base = fam.base;
    const RadialField f_eps = fam.profile.f;
    const GammaData* G = gamma.get();

    // Gamma along t via the base moment coordinate
    auto along_t = [base, G](double t) {
        const TauPoint p0 = base_point_from_t(base, t);
        const Jet tau0 = base_tau_of_t(base, t).truncated(6);
        return compose(G->gamma_jet(p0), tau0);
    };
    out.profile.label = "improved(" + base.label + ")";
    const double le = std::log(cfg.eps);
    // omega_eps + eps^2 ddbar(g1 (Gamma - log eps))
    out.profile.f = [f_eps, base, g1, e2, le, t_in, t_out, along_t](double t) {
        if (t <= t_in) return f_eps(t);
        if (t >= t_out) return base.f(t) + e2 * (along_t(t) - le);
        const Jet x = Jet::variable(t);
        return f_eps(t) + e2 * cutoff_of(g1, exp(0.5 * x)) * (along_t(t) - le);
    };
    const RadialField f = out.profile.f;
    out.tau_in = f(t_in)[1];
    const TauPoint q_out = base_point_from_t(base, t_out);
    out.tau_out = q_out.tau + e2 * base.moment(q_out)[0] * G->gamma_jet(q_out)[1];
    check_neck_positivity(out);

    out.outer_map = [base, G, e2, tm = out.tau_min](const TauPoint& p0) {
        const double s = e2 * base.moment(p0)[0] * G->gamma_jet(p0)[1];
        return TauPoint{p0.tau + s, p0.tau + s - tm, p0.v - s};
    };
    const double u_in = out.tau_in - out.tau_min, tau_out = out.tau_out;
    out.eval = [base, f, G, e2, t_in, t_out, u_in, tau_out](const TauPoint& p) {
        MomentPoint m;
        m.p = p;
        if (p.u <= u_in) {
            m.region = Region::core;
            m.F = Jet({p.u, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0}, p.tau);
            m.t = std::log(p.u);
            m.base = base_point_from_t(base, m.t);
            return m;
        }
        if (p.tau >= tau_out) {
            // tau = tau0 + eps^2 F0 Gamma'(tau0); iterate on v0 = 1 - tau0.
            m.region = Region::outer;
            double v0 = p.v;
            TauPoint p0{1.0 - v0, 1.0 - v0, v0};
            for (int it = 0; it < 60; ++it) {
                const double gp = G->gamma_jet(p0)[1];
                const double next = p.v / (1.0 - e2 * p0.tau * gp);
                if (!(next > 0.0)) throw PositivityError("improved family: moment map not invertible");
                const bool done = std::abs(next - v0) <= 1e-16 * std::max(v0, 1e-300) + 1e-300;
                v0 = next;
                p0 = {1.0 - v0, 1.0 - v0, v0};
                if (done) break;
            }
            const Jet F0 = base.moment(p0);
            const Jet Ft = moment_perturb(F0, e2 * G->gamma_jet(p0));
            m.F = rebase(Ft, p.tau);
            m.F[0] = Ft.value();
            m.base = p0;
            m.t = base.t_of_moment(p0);
            return m;
        }
        m.region = Region::neck;
        m.t = solve_t(f, p.tau, t_in, t_out);
        m.F = rebase(moment_from_t(f(m.t)), p.tau);
        m.base = base_point_from_t(base, m.t);
        return m;
    };
    return out;
}

nlohmann::json family_to_json(const GluedFamily& fam, int samples) {
    nlohmann::json j;
    j["label"] = fam.profile.label;
    j["eps"] = fam.config.eps;
    j["beta"] = fam.config.beta;
    j["delta"] = fam.config.delta;
    j["n"] = fam.config.n;
    j["r_eps"] = fam.r_inner;
    j["class_coeffs"] = {fam.class_coeffs.first, fam.class_coeffs.second};
    j["regions"] = {fam.r_inner, fam.r_outer};
    j["tau_range"] = {fam.tau_min, fam.tau_max};
    j["neck_tau"] = {fam.tau_in, fam.tau_out};
    j["improved"] = fam.improved;
    const double t0 = 2.0 * std::log(fam.config.eps) - 4.0, t1 = 4.0;
    nlohmann::json s = nlohmann::json::array();
    for (int i = 0; i < samples; ++i) {
        const double t = t0 + (t1 - t0) * i / (samples - 1);
        const Jet f = fam.profile.f(t);
        s.push_back({{"t", t}, {"f", f[0]}, {"f1", f[1]}, {"f2", f[2]}});
    }
    j["samples"] = s;
    return j;
}

}  // namespace blowup

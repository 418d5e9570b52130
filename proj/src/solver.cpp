#include "blowup/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace blowup {

FamilyFields FamilyFields::build(const GluedFamily& fam) {
    return build(fam, std::make_shared<const Grid>(fam.make_grid()));
}

FamilyFields FamilyFields::build(const GluedFamily& fam, std::shared_ptr<const Grid> grid) {
    FamilyFields ff;
    ff.grid = std::move(grid);
    ff.n = fam.config.n;
    ff.eps = fam.config.eps;
    const int N = ff.grid->size();
    ff.pts.reserve(N);
    for (int i = 0; i < N; ++i) {
        const MomentPoint m = fam.at(ff.grid->point(i));
        ff.pts.push_back(m);
        ff.F.push_back(m.F.truncated(4));
        ff.t.push_back(m.t);
        ff.S.push_back(moment_scalar_jet(ff.F.back(), ff.n));
        ff.S_base.push_back(fam.base.moment ? moment_scalar_jet(fam.base.moment(m.base), ff.n)[0]
                                            : radial_scalar_jet(fam.base.f(m.t), ff.n)[0]);
        ff.rho.push_back(weight_rho(ff.eps, m.t));
    }
    return ff;
}

// ---------------------------------------------------------------------------

double DiscreteOperator::evaluate(int i, const std::vector<double>& phi) const {
    double v = 0.0;
    for (const auto& [j, w] : eval[i]) v += w * phi[j];
    return v;
}

std::vector<double> DiscreteOperator::apply(const std::vector<double>& phi) const {
    std::vector<double> out = band.multiply(phi);
    for (int a = 0; a < rank(); ++a) {
        const double c = evaluate(a, phi);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * f[a][i];
    }
    return out;
}

void DiscreteOperator::factor() {
    const int N = band.size(), d = rank();
    BandedMatrix B = band;
    for (int a = 0; a < d; ++a)
        for (const auto& [j, w] : eval[a]) B.add(shift_rows[a], j, shift[a] * w);
    row_scale_.assign(N, 0.0);
    for (int i = 0; i < N; ++i) {
        double m = 0.0;
        for (int j = std::max(0, i - B.kl()); j <= std::min(N - 1, i + B.ku()); ++j) m = std::max(m, std::abs(B.get(i, j)));
        if (!(m > 0.0)) throw std::runtime_error("DiscreteOperator: empty row");
        row_scale_[i] = 1.0 / m;
    }
    scaled_ = BandedMatrix(N, B.kl(), B.ku());
    for (int i = 0; i < N; ++i)
        for (int j = std::max(0, i - B.kl()); j <= std::min(N - 1, i + B.ku()); ++j)
            scaled_.set(i, j, row_scale_[i] * B.get(i, j));
    scaled_.factor();

    U_.resize(N, d);
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(N, d);
    for (int a = 0; a < d; ++a) {
        for (int i = 0; i < N; ++i) U_(i, a) = row_scale_[i] * f[a][i];
        U_(shift_rows[a], a) += row_scale_[shift_rows[a]] * shift[a];
        for (const auto& [j, w] : eval[a]) V(j, a) += w;
    }
    Z_.resize(N, d);
    Zt_.resize(N, d);
    for (int a = 0; a < d; ++a) {
        std::vector<double> u(U_.col(a).data(), U_.col(a).data() + N), v(V.col(a).data(), V.col(a).data() + N);
        const auto z = scaled_.solve(u), zt = scaled_.solve(v, true);
        for (int i = 0; i < N; ++i) {
            Z_(i, a) = z[i];
            Zt_(i, a) = zt[i];
        }
    }
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    cap_ = Eigen::PartialPivLU<Eigen::MatrixXd>(I - V.transpose() * Z_);
    cap_t_ = Eigen::PartialPivLU<Eigen::MatrixXd>(I - U_.transpose() * Zt_);
    if (d > 0 && !std::isfinite(cap_.determinant()))
        throw std::runtime_error("DiscreteOperator: capacitance matrix is not finite");
    factored_ = true;
}

std::vector<double> DiscreteOperator::solve(const std::vector<double>& b, bool transpose) const {
    if (!factored_) throw std::logic_error("DiscreteOperator::solve before factor()");
    const int N = band.size();
    if (static_cast<int>(b.size()) != N) throw std::invalid_argument("DiscreteOperator::solve: size mismatch");
    std::vector<double> x = solve_once(b, transpose);
    if (transpose) return x;
    // residuals in extended precision, so the refined solution is limited by
    // the data rather than by the factorization
    const int kl = band.kl(), ku = band.ku(), d = rank();
    for (int k = 0; k < refine_steps; ++k) {
        std::vector<long double> q(d, 0.0L);
        for (int a = 0; a < d; ++a)
            for (const auto& [j, w] : eval[a]) q[a] += static_cast<long double>(w) * x[j];
        std::vector<double> r(N);
        for (int i = 0; i < N; ++i) {
            long double acc = b[i];
            for (int j = std::max(0, i - kl); j <= std::min(N - 1, i + ku); ++j)
                acc -= static_cast<long double>(band.get(i, j)) * x[j];
            for (int a = 0; a < d; ++a) acc += q[a] * f[a][i];
            r[i] = static_cast<double>(acc);
        }
        const std::vector<double> c = solve_once(r, false);
        for (int i = 0; i < N; ++i) x[i] += c[i];
    }
    return x;
}

std::vector<double> DiscreteOperator::solve_once(const std::vector<double>& b, bool transpose) const {
    const int N = band.size(), d = rank();
    if (!transpose) {
        std::vector<double> bs(N);
        for (int i = 0; i < N; ++i) bs[i] = row_scale_[i] * b[i];
        std::vector<double> y = scaled_.solve(bs);
        if (d == 0) return y;
        Eigen::VectorXd vy(d);
        for (int a = 0; a < d; ++a) vy(a) = evaluate(a, y);
        const Eigen::VectorXd c = cap_.solve(vy);
        for (int i = 0; i < N; ++i) y[i] += Z_.row(i).dot(c);
        return y;
    }
    std::vector<double> y = scaled_.solve(b, true);
    if (d > 0) {
        const Eigen::Map<const Eigen::VectorXd> Y(y.data(), N);
        const Eigen::VectorXd c = cap_t_.solve(U_.transpose() * Y);
        for (int i = 0; i < N; ++i) y[i] += Zt_.row(i).dot(c);
    }
    for (int i = 0; i < N; ++i) y[i] *= row_scale_[i];
    return y;
}

DiscreteOperator discretize_Ltilde(const GluedFamily& fam, const FamilyFields& ff, const KernelBasis& kernel,
                                   double delta) {
    if (kernel.points.size() != static_cast<std::size_t>(kernel.dim()))
        throw std::invalid_argument("discretize_Ltilde: kernel points not selected");
    DiscreteOperator op;
    op.grid = ff.grid;
    op.n = ff.n;
    op.delta = delta;
    op.eps = ff.eps;
    const Grid& g = *ff.grid;
    const int N = g.size();
    std::vector<std::array<double, 5>> coeffs(N);
    for (int i = 0; i < N; ++i) {
        const auto c = moment_coefficients(ff.F[i], ff.n, RadialOp::Lstar);
        std::copy(c.begin(), c.end(), coeffs[i].begin());
    }
    op.band = assemble(g, coeffs);

    for (int a = 0; a < kernel.dim(); ++a) {
        std::vector<double> fa(N);
        for (int i = 0; i < N; ++i) fa[i] = kernel.eval(a, ff.pts[i].base);
        op.f.push_back(std::move(fa));
        const double xq = g.xi_of(fam.from_base(kernel.points[a]));
        op.eval.push_back(g.interp_row(xq));
        const int r = std::clamp(static_cast<int>(std::floor(xq / g.h() - 0.5)), 3, N - 4);
        double m = 0.0;
        for (int j = r - 3; j <= r + 3; ++j) m = std::max(m, std::abs(op.band.get(r, j)));
        op.shift_rows.push_back(r);
        op.shift.push_back(m);
    }
    return op;
}

// ---------------------------------------------------------------------------

double rhs_norm(const FamilyFields& ff, const std::vector<double>& h, double delta) {
    double m = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) m = std::max(m, std::pow(ff.rho[i], 4.0 - delta) * std::abs(h[i]));
    return m;
}

double field_norm(const FamilyFields& ff, const std::vector<double>& phi, double delta, double alpha) {
    WeightedNormSpec s;
    s.k = 4;
    s.alpha = alpha;
    s.delta = delta;
    s.eps = ff.eps;
    return weighted_norm(grid_samples(*ff.grid, ff.F, ff.t, phi, 4), s);
}

InverseNormEstimate estimate_inverse_norm(const DiscreteOperator& op, const FamilyFields& ff, int starts, int steps,
                                          std::uint64_t seed) {
    const int N = ff.grid->size();
    const double d = op.delta;
    std::vector<double> wi(N), wo(N);
    for (int i = 0; i < N; ++i) {
        wi[i] = std::pow(ff.rho[i], 4.0 - d);
        wo[i] = std::pow(ff.rho[i], -d);
    }
    InverseNormEstimate est;
    est.starts = starts;
    est.steps = steps;
    est.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int s = 0; s < starts; ++s) {
        std::vector<double> x(N);
        for (double& v : x) v = normal(rng);
        for (int k = 0; k < steps; ++k) {
            std::vector<double> h(N);
            for (int i = 0; i < N; ++i) h[i] = x[i] / wi[i];
            const std::vector<double> phi = op.solve(h);
            est.value = std::max(est.value, field_norm(ff, phi, d) / rhs_norm(ff, h, d));
            std::vector<double> z(N);
            for (int i = 0; i < N; ++i) z[i] = wo[i] * wo[i] * phi[i];
            const std::vector<double> y = op.solve(z, true);
            double nrm = 0.0;
            for (int i = 0; i < N; ++i) {
                x[i] = y[i] / wi[i];
                nrm += x[i] * x[i];
            }
            nrm = std::sqrt(nrm);
            if (!(nrm > 0.0)) break;
            for (double& v : x) v /= nrm;
        }
    }
    return est;
}

std::pair<std::vector<double>, InverseNormEstimate> invert_Ltilde(const DiscreteOperator& op, const FamilyFields& ff,
                                                                 const std::vector<double>& rhs) {
    for (double v : rhs)
        if (!std::isfinite(v)) throw std::invalid_argument("invert_Ltilde: non-finite right side");
    return {op.solve(rhs), estimate_inverse_norm(op, ff)};
}

// ---------------------------------------------------------------------------

std::vector<double> perturbed_scalar(const FamilyFields& ff, const std::vector<double>& phi) {
    const int N = ff.grid->size();
    std::vector<double> out(N);
    for (int i = 0; i < N; ++i) {
        const Jet Fn = moment_perturb(ff.F[i], ff.grid->field_jet(phi, i));
        if (!(Fn.value() > 0.0)) {
            std::ostringstream os;
            os << "perturbed metric not positive at node " << i << " (F = " << Fn.value() << ")";
            throw PositivityError(os.str());
        }
        out[i] = moment_scalar_jet(Fn, ff.n)[0];
    }
    return out;
}

std::vector<double> nonlinear_remainder(const FamilyFields& ff, const std::vector<double>& phi) {
    const std::vector<double> S = perturbed_scalar(ff, phi);
    std::vector<double> Q(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) {
        const Jet pj = ff.grid->field_jet(phi, static_cast<int>(i));
        Q[i] = S[i] - ff.S[i][0] - moment_apply(ff.F[i], pj, ff.n, RadialOp::L);
    }
    return Q;
}

std::vector<double> picard_source(const FamilyFields& ff, const GammaData* gamma, const PicardOptions& opt) {
    const int N = ff.grid->size();
    if (!opt.target.empty() && static_cast<int>(opt.target.size()) != N)
        throw std::invalid_argument("picard_source: target size mismatch");
    std::vector<double> h(N);
    for (int i = 0; i < N; ++i) {
        h[i] = (opt.target.empty() ? ff.S_base[i] : opt.target[i]) - ff.S[i][0];
        if (opt.mode == EquationMode::star2 && gamma) h[i] += ff.eps * ff.eps * gamma->g_value(ff.pts[i].base);
    }
    return h;
}

std::vector<double> picard_map(const DiscreteOperator& op, const FamilyFields& ff, const std::vector<double>& source,
                               const std::vector<double>& phi) {
    const std::vector<double> Q = nonlinear_remainder(ff, phi);
    std::vector<double> h(source.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = source[i] - Q[i];
    return op.solve(h);
}

double weighted_scalar_error(const FamilyFields& ff, const GammaData* gamma, double delta) {
    double m = 0.0;
    for (int i = 0; i < ff.grid->size(); ++i) {
        double e = ff.S[i][0] - ff.S_base[i];
        if (gamma) e -= ff.eps * ff.eps * gamma->g_value(ff.pts[i].base);
        m = std::max(m, std::pow(ff.rho[i], 4.0 - delta) * std::abs(e));
    }
    return m;
}

namespace {

// Terms of S(omega_phi) - S(omega) = -(L* - L) phi + sum phi(q_i) f_i + eps^2 g.
struct RhsTerms {
    std::vector<double> first, zeroth, kernel, g;
};

RhsTerms rhs_terms(const DiscreteOperator& op, const FamilyFields& ff, const GammaData* gamma, EquationMode mode,
                   const std::vector<double>& phi) {
    const int N = ff.grid->size();
    RhsTerms r{std::vector<double>(N), std::vector<double>(N), std::vector<double>(N, 0.0), std::vector<double>(N, 0.0)};
    std::vector<double> q(op.rank());
    for (int a = 0; a < op.rank(); ++a) q[a] = op.evaluate(a, phi);
    for (int i = 0; i < N; ++i) {
        const Jet pj = ff.grid->field_jet(phi, i);
        const double dS = moment_laplacian_jet(ff.F[i], ff.S[i], ff.n)[0];
        r.first[i] = 2.0 * ff.F[i][0] * pj[1] * ff.S[i][1];
        r.zeroth[i] = 0.25 * pj[0] * dS;
        for (int a = 0; a < op.rank(); ++a) r.kernel[i] += q[a] * op.f[a][i];
        if (mode == EquationMode::star2 && gamma) r.g[i] = ff.eps * ff.eps * gamma->g_value(ff.pts[i].base);
    }
    return r;
}

double sup_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

SolveReport picard_solve(const GluedFamily& fam, const GammaData* gamma, const KernelBasis& kernel,
                         const PicardOptions& opt) {
    const FamilyFields ff = FamilyFields::build(fam);
    DiscreteOperator op = discretize_Ltilde(fam, ff, kernel, fam.config.delta);
    op.factor();
    return picard_solve(op, ff, fam, gamma, opt);
}

SolveReport picard_solve(const DiscreteOperator& op, const FamilyFields& ff, const GluedFamily& fam,
                         const GammaData* gamma, const PicardOptions& opt) {
    if (opt.mode == EquationMode::star2 && ff.n == 2 && !gamma)
        throw std::invalid_argument("picard_solve: (*2) needs Gamma");
    SolveReport rep;
    rep.eps = fam.config.eps;
    rep.r_eps = fam.r_inner;
    rep.delta = op.delta;
    rep.beta = fam.config.beta;
    rep.mode = opt.mode == EquationMode::star2 ? "star2" : "star1";
    rep.class_coeffs = fam.class_coeffs;

    const int N = ff.grid->size();
    const std::vector<double> src = picard_source(ff, gamma, opt);
    std::vector<double> phi(N, 0.0);
    auto residual_of = [&](const std::vector<double>& S) {
        double m = 0.0;
        for (int i = 0; i < N; ++i) m = std::max(m, std::abs(S[i] - ff.S_base[i]));
        return m;
    };
    int above = 0;
    for (int k = 1; k <= opt.max_iter; ++k) {
        std::vector<double> next;
        try {
            next = picard_map(op, ff, src, phi);
        } catch (const PositivityError& e) {
            if (opt.throw_on_failure) throw;
            rep.failure = std::string("positivity: ") + e.what();
            break;
        }
        std::vector<double> diff(N);
        for (int i = 0; i < N; ++i) diff[i] = next[i] - phi[i];
        const double upd = field_norm(ff, diff, op.delta);
        if (!rep.update_norms.empty()) rep.ratios.push_back(rep.update_norms.back() > 0 ? upd / rep.update_norms.back() : 0.0);
        rep.update_norms.push_back(upd);
        try {
            rep.residual_history.push_back(residual_of(perturbed_scalar(ff, next)));
        } catch (const PositivityError& e) {
            if (opt.throw_on_failure) throw;
            rep.update_norms.pop_back();
            if (!rep.ratios.empty() && rep.ratios.size() >= rep.update_norms.size()) rep.ratios.pop_back();
            rep.failure = std::string("positivity: ") + e.what();
            break;
        }
        phi = next;
        rep.iterations = k;
        if (upd < opt.tol) {
            rep.converged = true;
            break;
        }
        if (k > 3 && !rep.ratios.empty() && rep.ratios.back() > 0.5) {
            if (++above >= 3) {
                std::ostringstream os;
                os << "picard_solve: contraction failed at eps = " << rep.eps << " (ratio " << rep.ratios.back()
                   << " at iteration " << k << ")";
                if (opt.throw_on_failure) throw ContractionError(os.str());
                rep.failure = "contraction: " + os.str();
                break;
            }
        } else {
            above = 0;
        }
    }

    const std::vector<double> S = perturbed_scalar(ff, phi);
    rep.residual = residual_of(S);
    rep.min_S = *std::min_element(S.begin(), S.end());
    {
        const double u = std::numeric_limits<double>::epsilon(), pmax = sup_abs(phi);
        const BandedMatrix& B = op.band;
        for (int i = 0; i < N; ++i) {
            double row = 0.0;
            for (int j = std::max(0, i - B.kl()); j <= std::min(N - 1, i + B.ku()); ++j) row += std::abs(B.get(i, j));
            rep.residual_floor = std::max(rep.residual_floor, u * pmax * row);
        }
    }
    rep.phi_norm = field_norm(ff, phi, op.delta);
    const RhsTerms r = rhs_terms(op, ff, gamma, opt.mode, phi);
    rep.rhs_breakdown["first_order"] = sup_abs(r.first);
    rep.rhs_breakdown["zeroth_order"] = sup_abs(r.zeroth);
    rep.rhs_breakdown["kernel"] = sup_abs(r.kernel);
    rep.rhs_breakdown["eps2_g"] = sup_abs(r.g);
    for (int i = 0; i < N; ++i) {
        const double target = opt.target.empty() ? ff.S_base[i] : opt.target[i];
        const double rhs = -r.first[i] - r.zeroth[i] + r.kernel[i] + r.g[i];
        rep.weighted_consistency =
            std::max(rep.weighted_consistency, std::pow(ff.rho[i], 4.0 - op.delta) * std::abs(S[i] - target - rhs));
    }
    rep.phi = std::move(phi);
    return rep;
}

nlohmann::json SolveReport::to_json() const {
    nlohmann::json j;
    j["eps"] = eps;
    j["r_eps"] = r_eps;
    j["beta"] = beta;
    j["delta"] = delta;
    j["mode"] = mode;
    j["iterations"] = iterations;
    j["converged"] = converged;
    if (!failure.empty()) j["failure"] = failure;
    j["update_norms"] = update_norms;
    j["contraction_ratios"] = ratios;
    j["residual_history"] = residual_history;
    j["residual"] = residual;
    j["residual_floor"] = residual_floor;
    j["min_S"] = min_S;
    j["phi_norm"] = phi_norm;
    j["weighted_consistency"] = weighted_consistency;
    j["rhs_breakdown"] = rhs_breakdown;
    j["class"] = {class_coeffs.first, class_coeffs.second};
    return j;
}

std::string SolveReport::history_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "iter,update_norm,ratio,residual_sup\n";
    for (std::size_t k = 0; k < update_norms.size(); ++k) {
        os << k + 1 << ',' << update_norms[k] << ',';
        if (k > 0) os << ratios[k - 1];
        os << ',' << residual_history[k] << '\n';
    }
    return os.str();
}

}  // namespace blowup

#include "blowup/kahler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace blowup {

struct MultiJet::Layout {
    int nvars = 0;
    int D = 0;
    std::vector<std::vector<int>> exps;
    std::vector<int> deg;
    std::vector<int> lookup;  // dense table over (D+1)^nvars codes, -1 if absent
    std::vector<std::array<int, 3>> products;  // (i, j, k) with deg_i + deg_j = deg_k <= D
    std::vector<std::vector<std::array<int, 3>>> derivs;  // per variable: (src, dst, factor)

    int code(const std::vector<int>& e) const {
        int c = 0;
        for (int v = nvars - 1; v >= 0; --v) c = c * (D + 1) + e[v];
        return c;
    }
    int index(const std::vector<int>& e) const { return lookup[code(e)]; }
};

namespace {

std::shared_ptr<const MultiJet::Layout> make_layout(int nvars, int D) {
    auto L = std::make_shared<MultiJet::Layout>();
    L->nvars = nvars;
    L->D = D;
    for (int total = 0; total <= D; ++total) {
        std::vector<int> e(nvars, 0);
        // Enumerate compositions of `total` into nvars parts.
        std::function<void(int, int)> rec = [&](int v, int left) {
            if (v == nvars - 1) {
                e[v] = left;
                L->exps.push_back(e);
                L->deg.push_back(total);
                return;
            }
            for (int k = left; k >= 0; --k) {
                e[v] = k;
                rec(v + 1, left - k);
            }
        };
        rec(0, total);
    }
    int size = 1;
    for (int v = 0; v < nvars; ++v) size *= D + 1;
    L->lookup.assign(size, -1);
    for (int i = 0; i < static_cast<int>(L->exps.size()); ++i) L->lookup[L->code(L->exps[i])] = i;

    const int m = static_cast<int>(L->exps.size());
    std::vector<int> e(nvars);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            if (L->deg[i] + L->deg[j] > D) continue;
            for (int v = 0; v < nvars; ++v) e[v] = L->exps[i][v] + L->exps[j][v];
            L->products.push_back({i, j, L->index(e)});
        }
    L->derivs.resize(nvars);
    for (int v = 0; v < nvars; ++v)
        for (int i = 0; i < m; ++i) {
            if (L->exps[i][v] == 0) continue;
            e = L->exps[i];
            e[v] -= 1;
            L->derivs[v].push_back({i, L->index(e), L->exps[i][v]});
        }
    return L;
}

std::shared_ptr<const MultiJet::Layout> layout_for(int nvars, int D) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const MultiJet::Layout>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{nvars, D}];
    if (!slot) slot = make_layout(nvars, D);
    return slot;
}

double factorial(int k) {
    double r = 1.0;
    for (int i = 2; i <= k; ++i) r *= i;
    return r;
}

}  // namespace

MultiJet::MultiJet(int n, int degree, cplx constant) : n_(n), degree_(degree) {
    if (n < 1 || degree < 0 || degree > 8) throw std::invalid_argument("MultiJet: bad dimension or degree");
    layout_ = layout_for(2 * n, degree);
    c_.assign(layout_->exps.size(), 0.0);
    c_[0] = constant;
}

MultiJet MultiJet::coordinate(int n, int degree, int j, bool conj, cplx v) {
    MultiJet m(n, degree, v);
    if (degree >= 1) {
        std::vector<int> e(2 * n, 0);
        e[conj ? n + j : j] = 1;
        m.c_[m.layout_->index(e)] = 1.0;
    }
    return m;
}

cplx MultiJet::partial(std::span<const int> a, std::span<const int> b) const {
    std::vector<int> e(2 * n_);
    int total = 0;
    double fac = 1.0;
    for (int j = 0; j < n_; ++j) {
        e[j] = a[j];
        e[n_ + j] = b[j];
        total += a[j] + b[j];
        fac *= factorial(a[j]) * factorial(b[j]);
    }
    if (total > degree_) throw std::invalid_argument("MultiJet::partial: order exceeds valid degree");
    return c_[layout_->index(e)] * fac;
}

MultiJet MultiJet::d(int j, bool conj) const {
    if (degree_ < 1) throw std::invalid_argument("MultiJet::d: no valid derivatives left");
    MultiJet out(n_, layout_->D, 0.0);
    out.degree_ = degree_ - 1;
    const int v = conj ? n_ + j : j;
    for (const auto& [src, dst, fac] : layout_->derivs[v])
        if (layout_->deg[dst] <= out.degree_) out.c_[dst] = c_[src] * static_cast<double>(fac);
    return out;
}

MultiJet MultiJet::truncated(int degree) const {
    MultiJet out = *this;
    out.degree_ = std::min(degree, degree_);
    for (std::size_t i = 0; i < c_.size(); ++i)
        if (layout_->deg[i] > out.degree_) out.c_[i] = 0.0;
    return out;
}

MultiJet& MultiJet::operator+=(const MultiJet& o) {
    if (o.layout_ != layout_) throw std::invalid_argument("MultiJet: layout mismatch");
    degree_ = std::min(degree_, o.degree_);
    for (std::size_t i = 0; i < c_.size(); ++i)
        c_[i] = layout_->deg[i] <= degree_ ? c_[i] + o.c_[i] : 0.0;
    return *this;
}

MultiJet& MultiJet::operator-=(const MultiJet& o) {
    if (o.layout_ != layout_) throw std::invalid_argument("MultiJet: layout mismatch");
    degree_ = std::min(degree_, o.degree_);
    for (std::size_t i = 0; i < c_.size(); ++i)
        c_[i] = layout_->deg[i] <= degree_ ? c_[i] - o.c_[i] : 0.0;
    return *this;
}

MultiJet& MultiJet::operator*=(cplx s) {
    for (cplx& v : c_) v *= s;
    return *this;
}

MultiJet& MultiJet::operator+=(cplx s) {
    c_[0] += s;
    return *this;
}

MultiJet operator*(const MultiJet& a, const MultiJet& b) {
    if (a.layout_ != b.layout_) throw std::invalid_argument("MultiJet: layout mismatch");
    MultiJet out(a.n_, a.layout_->D, 0.0);
    out.degree_ = std::min(a.degree_, b.degree_);
    const auto& deg = a.layout_->deg;
    for (const auto& [i, j, k] : a.layout_->products)
        if (deg[k] <= out.degree_) out.c_[k] += a.c_[i] * b.c_[j];
    return out;
}

MultiJet compose_series(std::span<const cplx> b, const MultiJet& x) {
    const int K = std::min(static_cast<int>(b.size()) - 1, x.degree_);
    MultiJet u = x;
    u.c_[0] = 0.0;
    MultiJet acc(x.n_, x.layout_->D, b[K]);
    acc.degree_ = x.degree_;
    for (int k = K - 1; k >= 0; --k) {
        acc = acc * u;
        acc.c_[0] += b[k];
    }
    if (K < x.degree_) acc = acc.truncated(K);
    return acc;
}

double MultiJet::reality_defect() const {
    double worst = 0.0;
    std::vector<int> e(2 * n_);
    for (std::size_t i = 0; i < c_.size(); ++i) {
        if (layout_->deg[i] > degree_) continue;
        const auto& ex = layout_->exps[i];
        for (int j = 0; j < n_; ++j) {
            e[j] = ex[n_ + j];
            e[n_ + j] = ex[j];
        }
        worst = std::max(worst, std::abs(c_[i] - std::conj(c_[layout_->index(e)])));
    }
    return worst;
}

MultiJet compose(const Jet& f, const MultiJet& x) {
    const cplx x0 = x.value();
    if (std::abs(x0.imag()) > 1e-9 * (1.0 + std::abs(x0)) ||
        std::abs(f.base() - x0.real()) > 1e-10 * (1.0 + std::abs(x0)))
        throw std::invalid_argument("compose: 1-D jet not based at the MultiJet value");
    if (f.order() < x.degree()) throw std::invalid_argument("compose: 1-D jet order below MultiJet degree");
    std::vector<cplx> b(f.order() + 1);
    for (int k = 0; k <= f.order(); ++k) b[k] = f[k] / factorial(k);
    return compose_series(b, x);
}

MultiJet reciprocal(const MultiJet& x) {
    const cplx c0 = x.value();
    if (c0 == 0.0) throw JetError("reciprocal of a MultiJet with zero constant term");
    std::vector<cplx> b(x.degree() + 1);
    cplx p = 1.0 / c0;
    for (int k = 0; k <= x.degree(); ++k) {
        b[k] = (k % 2 == 0 ? 1.0 : -1.0) * p;
        p /= c0;
    }
    return compose_series(b, x);
}

MultiJet log(const MultiJet& x) {
    const cplx c0 = x.value();
    if (c0 == 0.0) throw JetError("log of a MultiJet with zero constant term");
    std::vector<cplx> b(x.degree() + 1);
    b[0] = std::log(c0);
    cplx p = 1.0;
    for (int k = 1; k <= x.degree(); ++k) {
        p /= c0;
        b[k] = (k % 2 == 1 ? 1.0 : -1.0) * p / static_cast<double>(k);
    }
    return compose_series(b, x);
}

MultiJet exp(const MultiJet& x) {
    std::vector<cplx> b(x.degree() + 1);
    const cplx e0 = std::exp(x.value());
    for (int k = 0; k <= x.degree(); ++k) b[k] = e0 / factorial(k);
    return compose_series(b, x);
}

namespace {

MultiJet log_abs2(const Point& z, int degree) {
    const int n = static_cast<int>(z.size());
    MultiJet r2(n, degree, 0.0);
    for (int j = 0; j < n; ++j)
        r2 += MultiJet::coordinate(n, degree, j, false, z[j]) *
              MultiJet::coordinate(n, degree, j, true, std::conj(z[j]));
    if (std::abs(r2.value()) == 0.0) throw std::invalid_argument("radial field evaluated at the origin");
    return log(r2);
}

}  // namespace

ScalarField radial_field(std::function<Jet(double)> u) {
    return [u = std::move(u)](const Point& z, int degree) {
        const MultiJet t = log_abs2(z, degree);
        return compose(u(t.value().real()), t);
    };
}

CoordinatePotential radial_potential(std::function<Jet(double)> f, int n, std::string label) {
    return CoordinatePotential{n, radial_field(std::move(f)), std::move(label)};
}

// ---------------------------------------------------------------------------

namespace {

using Mat = std::vector<MultiJet>;

MultiJet determinant(const Mat& a, int n) {
    if (n == 1) return a[0];
    if (n == 2) return a[0] * a[3] - a[1] * a[2];
    MultiJet det = a[0] * 0.0;
    for (int c = 0; c < n; ++c) {
        Mat minor;
        for (int r = 1; r < n; ++r)
            for (int k = 0; k < n; ++k)
                if (k != c) minor.push_back(a[r * n + k]);
        const MultiJet term = a[c] * determinant(minor, n - 1);
        det = c % 2 == 0 ? det + term : det - term;
    }
    return det;
}

Mat inverse(const Mat& a, int n, const MultiJet& det) {
    const MultiJet inv_det = reciprocal(det);
    Mat out(n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            MultiJet cof;
            if (n == 1) {
                cof = a[0] * 0.0 + 1.0;
            } else {
                Mat minor;
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < n; ++k)
                        if (i != r && k != c) minor.push_back(a[i * n + k]);
                cof = determinant(minor, n - 1);
            }
            if ((r + c) % 2 == 1) cof = -cof;
            out[c * n + r] = cof * inv_det;  // (A^-1)_{cr} = C_{rc} / det
        }
    return out;
}

Mat matmul(const Mat& a, const Mat& b, int n) {
    Mat out(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            MultiJet s = a[i * n] * b[j];
            for (int k = 1; k < n; ++k) s += a[i * n + k] * b[k * n + j];
            out[i * n + j] = s;
        }
    return out;
}

HermMatrix values(const Mat& a, int n) {
    HermMatrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = a[i * n + j].value();
    return m;
}

Mat ddbar(const MultiJet& u, int n) {
    Mat out(n * n);
    for (int j = 0; j < n; ++j) {
        const MultiJet uj = u.d(j, false);
        for (int k = 0; k < n; ++k) out[j * n + k] = uj.d(k, true);
    }
    return out;
}

// h^{jk} = h_inv[k*n + j]
const MultiJet& hup(const CurvatureJets& cj, int j, int k) { return cj.h_inv[k * cj.n + j]; }

}  // namespace

void check_positive(const HermMatrix& g, const std::string& where) {
    Eigen::SelfAdjointEigenSolver<HermMatrix> es(g, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const double tr = g.trace().real();
    if (!(lmin > 1e-12 * std::abs(tr)) || !(tr > 0.0)) {
        std::ostringstream os;
        os << "metric not positive definite at " << where << " (min eigenvalue " << lmin << ", trace " << tr << ")";
        throw NotKahlerError(os.str());
    }
}

CurvatureJets curvature_jets(const CoordinatePotential& pot, const Point& z) {
    if (static_cast<int>(z.size()) != pot.n) throw std::invalid_argument("point dimension mismatch");
    const int n = pot.n;
    const MultiJet phi = pot.eval(z, kPotentialDegree);
    if (phi.degree() < 4) throw std::invalid_argument("potential jet degree below 4");
    CurvatureJets cj;
    cj.n = n;
    cj.h = ddbar(phi, n);
    check_positive(values(cj.h, n), pot.label);
    cj.det = determinant(cj.h, n);
    cj.h_inv = inverse(cj.h, n, cj.det);
    cj.ricci = ddbar(log(cj.det), n);
    for (MultiJet& r : cj.ricci) r = -r;
    MultiJet s = cj.ricci[0] * 0.0;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) s += hup(cj, j, k) * cj.ricci[j * n + k];
    cj.scalar = 4.0 * s;
    return cj;
}

CurvatureData curvature_at(const CoordinatePotential& pot, const Point& z) {
    const CurvatureJets cj = curvature_jets(pot, z);
    const int n = cj.n;
    CurvatureData out;
    out.n = n;
    out.g = values(cj.h, n);
    out.g_inv = out.g.inverse();
    out.ricci = values(cj.ricci, n);
    out.scalar = cj.scalar.value().real();
    out.riemann.assign(n * n * n * n, 0.0);
    // Rm_{i jbar k lbar} = -d_k dbar_l h_{i jbar} + h^{p qbar} d_k h_{i qbar} dbar_l h_{p jbar}
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    cplx v = -cj.h[i * n + j].d(k, false).d(l, true).value();
                    for (int p = 0; p < n; ++p)
                        for (int q = 0; q < n; ++q)
                            v += hup(cj, p, q).value() * cj.h[i * n + q].d(k, false).value() *
                                 cj.h[p * n + j].d(l, true).value();
                    out.riemann[((i * n + j) * n + k) * n + l] = v;
                }
    return out;
}

MultiJet laplacian_jet(const CurvatureJets& cj, const MultiJet& u) {
    const int n = cj.n;
    MultiJet s;
    bool first = true;
    for (int j = 0; j < n; ++j) {
        const MultiJet uj = u.d(j, false);
        for (int k = 0; k < n; ++k) {
            const MultiJet term = hup(cj, j, k) * uj.d(k, true);
            if (first) {
                s = term;
                first = false;
            } else {
                s += term;
            }
        }
    }
    return 4.0 * s;
}

double laplacian(const CoordinatePotential& pot, const ScalarField& f, const Point& z, int order) {
    if (order != 1 && order != 2) throw std::invalid_argument("laplacian order must be 1 or 2");
    const CurvatureJets cj = curvature_jets(pot, z);
    const MultiJet u = f(z, kPotentialDegree);
    if (u.degree() < 2 * order) throw std::invalid_argument("laplacian: insufficient jet order");
    MultiJet v = laplacian_jet(cj, u);
    if (order == 2) v = laplacian_jet(cj, v);
    return v.value().real();
}

namespace {

double L_from_jets(const CurvatureJets& cj, const MultiJet& u) {
    const int n = cj.n;
    if (u.degree() < 4) throw std::invalid_argument("linearized_L: insufficient jet order");
    const MultiJet bih = laplacian_jet(cj, laplacian_jet(cj, u));
    const HermMatrix Hinv = values(cj.h, n).inverse();
    const HermMatrix R = values(cj.ricci, n);
    const HermMatrix U = values(ddbar(u, n), n);
    const cplx pair = (Hinv * R * Hinv * U).trace();
    return (-0.25 * bih.value() - 4.0 * pair).real();
}

}  // namespace

double linearized_L(const CoordinatePotential& pot, const ScalarField& phi, const Point& z) {
    return L_from_jets(curvature_jets(pot, z), phi(z, kPotentialDegree));
}

double adjoint_Lstar(const CoordinatePotential& pot, const ScalarField& phi, const Point& z) {
    const CurvatureJets cj = curvature_jets(pot, z);
    const int n = cj.n;
    const MultiJet u = phi(z, kPotentialDegree);
    if (u.degree() < 4) throw std::invalid_argument("adjoint_Lstar: insufficient jet order");
    const MultiJet bih = laplacian_jet(cj, laplacian_jet(cj, u));
    // T^{j kbar} = (H^-1 R H^-1)_{k j}; adjoint of T^{jk} d_j dbar_k is
    // (1/det) d_j dbar_k (det T^{jk} .).
    const Mat T = matmul(matmul(cj.h_inv, cj.ricci, n), cj.h_inv, n);
    cplx div = 0.0;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) div += (cj.det * T[k * n + j] * u).d(j, false).d(k, true).value();
    return (-0.25 * bih.value() - 4.0 * div / cj.det.value()).real();
}

double lstar_minus_l_explicit(const CoordinatePotential& pot, const ScalarField& phi, const Point& z) {
    const CurvatureJets cj = curvature_jets(pot, z);
    const int n = cj.n;
    const MultiJet u = phi(z, kPotentialDegree);
    cplx first = 0.0;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
            first += hup(cj, j, k).value() * (u.d(j, false).value() * cj.scalar.d(k, true).value() +
                                              cj.scalar.d(j, false).value() * u.d(k, true).value());
    const cplx lap_s = laplacian_jet(cj, cj.scalar).value();
    return (-first - 0.25 * u.value() * lap_s).real();
}

CoordinatePotential perturbed(const CoordinatePotential& pot, const ScalarField& phi) {
    CoordinatePotential out = pot;
    out.label = pot.label + "+phi";
    out.eval = [base = pot.eval, phi](const Point& z, int degree) { return base(z, degree) + phi(z, degree); };
    return out;
}

double nonlinear_Q(const CoordinatePotential& pot, const ScalarField& phi, const Point& z) {
    const CurvatureJets base = curvature_jets(pot, z);
    const CurvatureJets pert = curvature_jets(perturbed(pot, phi), z);
    return pert.scalar.value().real() - base.scalar.value().real() - L_from_jets(base, phi(z, kPotentialDegree));
}

}  // namespace blowup

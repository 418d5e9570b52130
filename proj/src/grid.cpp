#include "blowup/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <lapacke.h>

namespace blowup {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::vector<std::vector<double>> fornberg_weights(double x0, const std::vector<double>& x, int m) {
    const int np = static_cast<int>(x.size());
    std::vector<std::vector<double>> c(m + 1, std::vector<double>(np, 0.0));
    double c1 = 1.0, c4 = x[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i < np; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    return c;
}

const std::array<std::array<double, 7>, 5>& Grid::stencil() {
    static const std::array<std::array<double, 7>, 5> w = [] {
        const auto c = fornberg_weights(0.0, {-3, -2, -1, 0, 1, 2, 3}, 4);
        std::array<std::array<double, 7>, 5> out{};
        for (int k = 0; k <= 4; ++k)
            for (int o = 0; o < 7; ++o) out[k][o] = c[k][o];
        return out;
    }();
    return w;
}

Grid::Grid(const GridSpec& spec, double tau_min, double tau_max)
    : spec_(spec), n_(spec.nodes), tau_min_(tau_min), tau_max_(tau_max) {
    if (n_ < 16) throw std::invalid_argument("Grid: at least 16 nodes required");
    if (!(tau_max > tau_min)) throw std::invalid_argument("Grid: empty moment interval");
    if (spec.core_scale < 0.0) throw std::invalid_argument("Grid: negative core scale");
    h_ = 1.0 / n_;
    U_ = tau_max - tau_min;
    A_ = spec.core_scale;
    kappa_ = A_ > 0.0 ? std::log1p(U_ / A_) : 0.0;
    pts_.resize(n_);
    dtau_.resize(n_);
    chain_.resize(n_);
    jet_w_.resize(n_);
    for (int i = 0; i < n_; ++i) pts_[i] = point_at_xi(xi(i));
    for (int i = 0; i < n_; ++i) {
        std::vector<double> x(7);
        for (int m = 0; m < 7; ++m) x[m] = offset(pts_[i], stencil_start(i) + m);
        const auto w = fornberg_weights(0.0, x, 4);
        for (int k = 0; k <= 4; ++k)
            for (int m = 0; m < 7; ++m) jet_w_[i][7 * k + m] = w[k][m];
        const Jet tx = tau_of_xi(xi(i), 4);
        dtau_[i] = tx[1];
        const Jet xt = revert(tx);
        auto& B = chain_[i];
        for (int j = 0; j <= 4; ++j) {
            Jet e(0.0, 4, xi(i));
            e[j] = 1.0;
            const Jet r = compose(e, xt);
            for (int k = 0; k <= 4; ++k) B[5 * k + j] = r[k];
        }
    }
}

Jet Grid::tau_of_xi(double x, int order) const {
    const Jet X = Jet::variable(x, order);
    const Jet eta = 0.5 * (1.0 - cos(kPi * X));
    const TauPoint p = point_at_xi(x);
    Jet u = kappa_ > 0.0 ? A_ * (exp(kappa_ * eta) - 1.0) : U_ * eta;
    u[0] = p.tau;
    return u;
}

TauPoint Grid::point_at_xi(double x) const {
    const double s = std::sin(0.5 * kPi * x), c = std::cos(0.5 * kPi * x);
    const double eta = s * s, ceta = c * c;
    TauPoint p;
    if (kappa_ > 0.0) {
        p.u = A_ * std::expm1(kappa_ * eta);
        p.v = A_ * std::exp(kappa_ * eta) * std::expm1(kappa_ * ceta);
    } else {
        p.u = U_ * eta;
        p.v = U_ * ceta;
    }
    p.tau = p.u <= p.v ? tau_min_ + p.u : tau_max_ - p.v;
    return p;
}

double Grid::xi_of(const TauPoint& p) const {
    if (p.u <= p.v) {
        const double eta = kappa_ > 0.0 ? std::log1p(p.u / A_) / kappa_ : p.u / U_;
        return (2.0 / kPi) * std::asin(std::sqrt(std::clamp(eta, 0.0, 1.0)));
    }
    const double ceta = kappa_ > 0.0 ? -std::log1p(-p.v / (A_ + U_)) / kappa_ : p.v / U_;
    return 1.0 - (2.0 / kPi) * std::asin(std::sqrt(std::clamp(ceta, 0.0, 1.0)));
}

TauPoint Grid::point_from_tau(double tau) const { return {tau, tau - tau_min_, tau_max_ - tau}; }

int Grid::fold(int j) const {
    if (j < 0) return -j - 1;
    if (j >= n_) return 2 * n_ - 1 - j;
    return j;
}

std::array<double, 5> Grid::xi_derivatives(const std::vector<double>& f, int i) const {
    const auto& W = stencil();
    std::array<double, 5> D{};
    double hk = 1.0;
    for (int k = 0; k <= 4; ++k) {
        if (k == 0) {
            D[0] = f[i];
        } else {
            double s = 0.0;
            for (int o = -3; o <= 3; ++o) s += W[k][o + 3] * f[fold(i + o)];
            D[k] = s / hk;
        }
        hk *= h_;
    }
    return D;
}

double Grid::offset(const TauPoint& from, int m) const {
    return from.u <= from.v ? pts_[m].u - from.u : from.v - pts_[m].v;
}

Jet Grid::field_jet(const std::vector<double>& f, int i) const {
    const int s = stencil_start(i);
    std::vector<double> d(5, 0.0);
    for (int k = 0; k <= 4; ++k)
        for (int m = 0; m < 7; ++m) d[k] += jet_w_[i][7 * k + m] * f[s + m];
    d[0] = f[i];
    return Jet(std::move(d), pts_[i].tau);
}

Jet Grid::jet_at(const std::vector<double>& f, const TauPoint& p) const {
    const int i = std::clamp(static_cast<int>(std::lround(xi_of(p) / h_ - 0.5)), 0, n_ - 1);
    const int s = stencil_start(i);
    std::vector<double> x(7);
    for (int m = 0; m < 7; ++m) x[m] = offset(p, s + m);
    const auto w = fornberg_weights(0.0, x, 4);
    std::vector<double> d(5, 0.0);
    for (int k = 0; k <= 4; ++k)
        for (int m = 0; m < 7; ++m) d[k] += w[k][m] * f[s + m];
    return Jet(std::move(d), p.tau);
}

std::vector<Jet> Grid::field_jets(const std::vector<double>& f) const {
    std::vector<Jet> out;
    out.reserve(n_);
    for (int i = 0; i < n_; ++i) out.push_back(field_jet(f, i));
    return out;
}

std::vector<std::pair<int, double>> Grid::interp_row(double x) const {
    const double s = x / h_ - 0.5;
    const int m0 = static_cast<int>(std::floor(s)) - 2;
    std::vector<std::pair<int, double>> row;
    for (int a = 0; a < 6; ++a) {
        double w = 1.0;
        for (int b = 0; b < 6; ++b)
            if (b != a) w *= (s - (m0 + b)) / double(a - b);
        row.emplace_back(fold(m0 + a), w);
    }
    return row;
}

double Grid::interpolate(const std::vector<double>& f, double x) const {
    double s = 0.0;
    for (const auto& [j, w] : interp_row(x)) s += w * f[j];
    return s;
}

std::vector<double> Grid::volume_weights(int n) const {
    const double c = radial_volume_factor(n);
    std::vector<double> w(n_);
    for (int i = 0; i < n_; ++i) w[i] = c * std::pow(pts_[i].tau, n - 1) * dtau_[i] * h_;
    return w;
}

// ---------------------------------------------------------------------------

BandedMatrix::BandedMatrix(int n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1), ab_(static_cast<std::size_t>(ldab_) * n, 0.0) {}

double BandedMatrix::get(int i, int j) const {
    if (!in_band(i, j)) return 0.0;
    return ab_[static_cast<std::size_t>(j) * ldab_ + kl_ + ku_ + i - j];
}

void BandedMatrix::add(int i, int j, double v) {
    if (!in_band(i, j)) throw std::out_of_range("BandedMatrix: entry outside band");
    ab_[static_cast<std::size_t>(j) * ldab_ + kl_ + ku_ + i - j] += v;
    factored_ = false;
}

void BandedMatrix::set(int i, int j, double v) {
    if (!in_band(i, j)) throw std::out_of_range("BandedMatrix: entry outside band");
    ab_[static_cast<std::size_t>(j) * ldab_ + kl_ + ku_ + i - j] = v;
    factored_ = false;
}

std::vector<double> BandedMatrix::multiply(const std::vector<double>& x) const {
    std::vector<double> y(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
        const int j0 = std::max(0, i - kl_), j1 = std::min(n_ - 1, i + ku_);
        double s = 0.0;
        for (int j = j0; j <= j1; ++j) s += get(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Eigen::MatrixXd BandedMatrix::dense() const {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
        for (int j = std::max(0, i - kl_); j <= std::min(n_ - 1, i + ku_); ++j) A(i, j) = get(i, j);
    return A;
}

void BandedMatrix::factor() {
    // Factors live in a second buffer so get()/multiply() keep working.
    lu_ = ab_;
    ipiv_.assign(n_, 0);
    const lapack_int info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n_, n_, kl_, ku_, lu_.data(), ldab_, ipiv_.data());
    if (info != 0) {
        std::ostringstream os;
        os << "BandedMatrix::factor: dgbtrf info = " << info;
        throw std::runtime_error(os.str());
    }
    factored_ = true;
}

std::vector<double> BandedMatrix::solve(const std::vector<double>& b, bool transpose) const {
    if (!factored_) throw std::logic_error("BandedMatrix::solve before factor");
    std::vector<double> x = b;
    const lapack_int info = LAPACKE_dgbtrs(LAPACK_COL_MAJOR, transpose ? 'T' : 'N', n_, kl_, ku_, 1, lu_.data(),
                                           ldab_, ipiv_.data(), x.data(), n_);
    if (info != 0) throw std::runtime_error("BandedMatrix::solve: dgbtrs failed");
    return x;
}

std::vector<std::array<double, 5>> operator_coefficients(const Grid& g, const MomentMetric& F, int n, RadialOp op) {
    std::vector<std::array<double, 5>> c(g.size());
    for (int i = 0; i < g.size(); ++i) {
        const auto ck = moment_coefficients(F(g.point(i)), n, op);
        std::copy(ck.begin(), ck.end(), c[i].begin());
    }
    return c;
}

BandedMatrix assemble(const Grid& g, const std::vector<std::array<double, 5>>& coeffs) {
    const auto& W = Grid::stencil();
    BandedMatrix M(g.size(), 3, 3);
    for (int i = 0; i < g.size(); ++i) {
        const auto& B = g.chain(i);
        std::array<double, 5> a{};
        for (int k = 0; k <= 4; ++k)
            for (int j = 0; j <= k; ++j) a[j] += coeffs[i][k] * B[5 * k + j];
        M.add(i, i, a[0]);
        double hj = 1.0;
        for (int j = 1; j <= 4; ++j) {
            hj *= g.h();
            for (int o = -3; o <= 3; ++o)
                if (W[j][o + 3] != 0.0) M.add(i, g.fold(i + o), a[j] * W[j][o + 3] / hj);
        }
    }
    return M;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd near_kernel(const Eigen::MatrixXd& L, std::vector<double>& sv, int max_dim, double gap_ratio) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(L, Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();  // descending
    const int N = static_cast<int>(s.size());
    const int m = std::min(max_dim + 1, N);
    sv.assign(m, 0.0);
    for (int k = 0; k < m; ++k) sv[k] = s(N - 1 - k);
    int d = 0;
    for (int k = 1; k < m; ++k) {
        if (sv[k] >= gap_ratio * std::max(sv[k - 1], 1e-300)) {
            d = k;
            break;
        }
    }
    Eigen::MatrixXd K(N, d);
    for (int k = 0; k < d; ++k) K.col(k) = svd.matrixV().col(N - 1 - k);
    return K;
}

std::vector<std::vector<double>> orthonormal_kernel(const Eigen::MatrixXd& K, const std::vector<double>& w,
                                                    const std::vector<std::vector<double>>& probes) {
    const int N = static_cast<int>(K.rows()), d = static_cast<int>(K.cols());
    const Eigen::Map<const Eigen::VectorXd> W(w.data(), N);
    const Eigen::MatrixXd G = K.transpose() * W.asDiagonal() * K;
    const Eigen::LDLT<Eigen::MatrixXd> Gs(G);
    std::vector<Eigen::VectorXd> basis;
    for (const auto& p : probes) {
        if (static_cast<int>(basis.size()) == d) break;
        const Eigen::Map<const Eigen::VectorXd> P(p.data(), N);
        Eigen::VectorXd v = K * Gs.solve(K.transpose() * (W.asDiagonal() * P));
        for (const auto& b : basis) v -= b.dot(W.asDiagonal() * v) * b;
        const double nrm = std::sqrt(v.dot(W.asDiagonal() * v));
        if (nrm < 1e-8 * std::sqrt(P.dot(W.asDiagonal() * P))) continue;
        basis.push_back(v / nrm);
    }
    if (static_cast<int>(basis.size()) < d) throw KernelError("orthonormal_kernel: probes do not span the kernel");
    std::vector<std::vector<double>> out;
    for (const auto& b : basis) out.emplace_back(b.data(), b.data() + N);
    return out;
}

double KernelBasis::eval(int i, const TauPoint& p) const { return grid->interpolate(vectors.at(i), grid->xi_of(p)); }

KernelBasis kernel_basis(std::shared_ptr<const Grid> grid, const MomentMetric& F, int n) {
    const Grid& g = *grid;
    const BandedMatrix L = assemble(g, operator_coefficients(g, F, n, RadialOp::L));
    KernelBasis kb;
    kb.grid = std::move(grid);
    kb.n = n;
    const Eigen::MatrixXd K = near_kernel(L.dense(), kb.singular_values);
    std::vector<std::vector<double>> probes;
    for (int p = 0; p < 6; ++p) {
        std::vector<double> f(g.size());
        for (int i = 0; i < g.size(); ++i) f[i] = std::pow(g.point(i).tau, p);
        probes.push_back(std::move(f));
    }
    kb.vectors = orthonormal_kernel(K, g.volume_weights(n), probes);
    return kb;
}

void select_points(KernelBasis& kb, const std::vector<double>& candidate_xi) {
    const int d = kb.dim();
    kb.point_xi.clear();
    kb.points.clear();
    if (d == 0) return;
    const int C = static_cast<int>(candidate_xi.size());
    Eigen::MatrixXd E(d, C);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < d; ++i) E(i, c) = kb.grid->interpolate(kb.vectors[i], candidate_xi[c]);
    std::vector<int> chosen;
    for (int s = 0; s < d; ++s) {
        int best = -1;
        double best_sigma = -1.0;
        for (int c = 0; c < C; ++c) {
            if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
            Eigen::MatrixXd M(d, s + 1);
            for (int a = 0; a < s; ++a) M.col(a) = E.col(chosen[a]);
            M.col(s) = E.col(c);
            const double sig = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(s);
            if (sig > best_sigma) {
                best_sigma = sig;
                best = c;
            }
        }
        if (best < 0) throw KernelError("select_points: not enough candidates");
        chosen.push_back(best);
    }
    kb.gram.resize(d, d);
    for (int a = 0; a < d; ++a) {
        kb.point_xi.push_back(candidate_xi[chosen[a]]);
        kb.points.push_back(kb.grid->point_at_xi(candidate_xi[chosen[a]]));
        kb.gram.col(a) = E.col(chosen[a]);
    }
    kb.gram_sigma_min = Eigen::JacobiSVD<Eigen::MatrixXd>(kb.gram).singularValues()(d - 1);
    if (kb.gram_sigma_min < 1e-10) throw KernelError("select_points: evaluation matrix is singular");
}

std::vector<double> candidate_points(const Grid& g, double lo, double hi) {
    std::vector<double> out;
    for (int i = 0; i < g.size(); ++i)
        if (g.point(i).tau >= lo && g.point(i).tau <= hi) out.push_back(g.xi(i));
    return out;
}

}  // namespace blowup

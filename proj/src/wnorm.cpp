#include "blowup/wnorm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace blowup {

double weight_rho(double eps, double t) {
    const double r = std::exp(0.5 * t);
    if (r >= 1.0) return 1.0;
    return std::max(r, eps);
}

std::vector<double> arc_derivatives(const Jet& f_tau, const Jet& F, int k) {
    if (f_tau.order() < k || (k > 0 && F.order() < k - 1))
        throw std::invalid_argument("arc_derivatives: jets too short");
    std::vector<double> out(k + 1);
    Jet g = f_tau.truncated(k);
    out[0] = g.value();
    if (k == 0) return out;
    const Jet sq = sqrt(F.truncated(k - 1));
    for (int j = 1; j <= k; ++j) {
        g = 2.0 * sq.truncated(k - j) * g.derivative(1);
        out[j] = g.value();
    }
    return out;
}

NormSample sample_from_t(const Jet& f_t, int k) {
    const double t = f_t.base(), r = std::exp(0.5 * t);
    Jet t_of_r = 2.0 * log(Jet::variable(r, f_t.order()));
    t_of_r[0] = t;
    const Jet f_r = compose(f_t, t_of_r);
    NormSample s{t, r, std::vector<double>(k + 1)};
    for (int j = 0; j <= k; ++j) s.D[j] = f_r[j];
    return s;
}

std::vector<NormSample> grid_samples(const Grid& g, const std::vector<Jet>& F, const std::vector<double>& t,
                                    const std::vector<double>& field, int k) {
    const int N = g.size();
    std::vector<NormSample> out(N);
    double s = 0.0;
    for (int i = 0; i < N; ++i) {
        const TauPoint& p = g.point(i);
        const double sf = std::sqrt(F[i].value());
        if (i == 0) {
            s = p.u / sf;
        } else {
            const TauPoint& q = g.point(i - 1);
            const double dtau = p.u <= p.v ? p.u - q.u : q.v - p.v;
            s += dtau / (sf + std::sqrt(F[i - 1].value()));
        }
        out[i].t = t[i];
        out[i].s = s;
        out[i].D = arc_derivatives(g.field_jet(field, i), F[i], k);
    }
    return out;
}

namespace {

// Pairs closer than the 7-point jet stencil share most of their nodes, so
// their D^k differences are rounding rather than the field.
constexpr std::size_t kHolderMinOffset = 4;

double grad_channel(const NormSample& x, int i, double scale) {
    if (i == 0) return std::abs(x.D[0]);
    double v = 0.0;
    for (int j = 1; j <= i; ++j) v += std::pow(scale, j - i) * std::abs(x.D[j]);
    return v;
}

void check_resolution(const std::vector<NormSample>& f, double eps) {
    for (std::size_t a = 1; a < f.size(); ++a) {
        const double ra = std::exp(0.5 * f[a - 1].t), rb = std::exp(0.5 * f[a].t);
        if (ra > eps && rb < 1.0 && std::abs(f[a].t - f[a - 1].t) > 0.5)
            throw std::invalid_argument("weighted_norm: samples do not resolve the neck");
    }
}

// Holder quotient of D^k over pairs with |t1 - t2| <= 1 inside [lo, hi] (|z| range).
template <class Weight>
double holder_term(const std::vector<NormSample>& f, int k, double alpha, double lo, double hi, Weight w) {
    double best = 0.0;
    const std::size_t N = f.size();
    for (std::size_t x = 0; x < N; ++x) {
        const double rx = std::exp(0.5 * f[x].t);
        if (rx < lo || rx > hi) continue;
        for (std::size_t m = kHolderMinOffset; x + m < N; m *= 2) {
            const NormSample& y = f[x + m];
            const double ry = std::exp(0.5 * y.t);
            if (std::abs(y.t - f[x].t) > 1.0 || ry > hi) break;
            const double ds = std::abs(y.s - f[x].s);
            if (ds <= 0.0) continue;
            best = std::max(best, w(f[x], y) * std::abs(y.D[k] - f[x].D[k]) / std::pow(ds, alpha));
        }
    }
    return best;
}

}  // namespace

double weighted_norm(const std::vector<NormSample>& f, const WeightedNormSpec& spec) {
    check_resolution(f, spec.eps);
    double cmax = 0.0;
    for (const auto& x : f) {
        if (static_cast<int>(x.D.size()) <= spec.k) throw std::invalid_argument("weighted_norm: sample order below k");
        const double rho = weight_rho(spec.eps, x.t);
        for (int i = 0; i <= spec.k; ++i)
            cmax = std::max(cmax, std::pow(rho, i - spec.delta) * grad_channel(x, i, rho));
    }
    if (!spec.holder) return cmax;
    const double hold = holder_term(f, spec.k, spec.alpha, 0.0, 1e300, [&](const NormSample& a, const NormSample& b) {
        const double rho = std::min(weight_rho(spec.eps, a.t), weight_rho(spec.eps, b.t));
        return std::pow(rho, spec.k + spec.alpha - spec.delta);
    });
    return cmax + hold;
}

double piecewise_norm(const std::vector<NormSample>& f, const WeightedNormSpec& spec) {
    check_resolution(f, spec.eps);
    const int k = spec.k;
    const double e = spec.eps;
    std::vector<double> outer(k + 1, 0.0), neck(k + 1, 0.0), core(k + 1, 0.0);
    for (const auto& x : f) {
        const double r = std::exp(0.5 * x.t);
        for (int i = 0; i <= k; ++i) {
            if (r >= 0.5) outer[i] = std::max(outer[i], grad_channel(x, i, 1.0));
            if (r >= e && r <= 1.0)
                neck[i] = std::max(neck[i], std::pow(r, i - spec.delta) * grad_channel(x, i, r));
            if (r <= 2.0 * e) core[i] = std::max(core[i], std::pow(e, i) * grad_channel(x, i, e));
        }
    }
    double total = 0.0;
    for (int i = 0; i <= k; ++i) total += outer[i] + neck[i] + std::pow(e, -spec.delta) * core[i];
    if (!spec.holder) return total;
    const auto one = [](const NormSample&, const NormSample&) { return 1.0; };
    total += holder_term(f, k, spec.alpha, 0.5, 1e300, one);
    total += holder_term(f, k, spec.alpha, e, 1.0, [&](const NormSample& a, const NormSample& b) {
        return std::pow(std::min(std::exp(0.5 * a.t), std::exp(0.5 * b.t)), k + spec.alpha - spec.delta);
    });
    total += std::pow(e, k + spec.alpha - spec.delta) * holder_term(f, k, spec.alpha, 0.0, 2.0 * e, one);
    return total;
}

DecayFit fit_decay(const std::vector<double>& r, const std::vector<double>& value) {
    const std::size_t n = r.size();
    if (n < 2 || value.size() != n) throw std::invalid_argument("fit_decay: need two or more matched samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(r[i] > 0.0) || value[i] == 0.0) throw std::invalid_argument("fit_decay: log of non-positive sample");
        const double x = std::log(r[i]), y = std::log(std::abs(value[i]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw std::invalid_argument("fit_decay: degenerate abscissae");
    DecayFit fit;
    fit.exponent = (n * sxy - sx * sy) / den;
    fit.log_constant = (sy - fit.exponent * sx) / n;
    for (std::size_t i = 0; i < n; ++i)
        fit.max_residual = std::max(fit.max_residual, std::abs(std::log(std::abs(value[i])) - fit.log_constant -
                                                                fit.exponent * std::log(r[i])));
    return fit;
}

namespace {

BandedMatrix indicial_matrix(const IndicialModel& m, double& h) {
    if (m.nodes < 3 || !(m.s_lo < 0.0)) throw std::invalid_argument("IndicialModel: need nodes >= 3 and s_lo < 0");
    h = -m.s_lo / (m.nodes + 1);
    const double b = 2.0 * m.delta + 2.0 * m.n - 2.0, c = m.root_product();
    BandedMatrix A(m.nodes, 1, 1);
    for (int i = 0; i < m.nodes; ++i) {
        if (i > 0) A.set(i, i - 1, 1.0 / (h * h) - 0.5 * b / h);
        A.set(i, i, c - 2.0 / (h * h));
        if (i + 1 < m.nodes) A.set(i, i + 1, 1.0 / (h * h) + 0.5 * b / h);
    }
    A.factor();
    return A;
}

}  // namespace

std::vector<double> IndicialModel::solve(const std::vector<double>& g) const {
    if (static_cast<int>(g.size()) != nodes + 2) throw std::invalid_argument("IndicialModel::solve: need nodes + 2 values");
    const double c = root_product();
    if (c == 0.0) throw std::domain_error("IndicialModel::solve: delta is an indicial root");
    double h = 0.0;
    const BandedMatrix A = indicial_matrix(*this, h);
    const double b = 2.0 * delta + 2.0 * n - 2.0;
    const double v0 = g.front() / c, v1 = g.back() / c;
    std::vector<double> rhs(g.begin() + 1, g.end() - 1);
    rhs.front() -= (1.0 / (h * h) - 0.5 * b / h) * v0;
    rhs.back() -= (1.0 / (h * h) + 0.5 * b / h) * v1;
    std::vector<double> v = A.solve(rhs);
    v.insert(v.begin(), v0);
    v.push_back(v1);
    return v;
}

double IndicialModel::inverse_norm() const {
    double h = 0.0;
    const BandedMatrix A = indicial_matrix(*this, h);
    double best = 0.0;
    std::vector<double> e(nodes, 0.0);
    for (int i = 0; i < nodes; ++i) {
        // row i of A^-1 is column i of A^-T
        e[i] = 1.0;
        const auto row = A.solve(e, true);
        e[i] = 0.0;
        double sum = 0.0;
        for (double x : row) sum += std::abs(x);
        best = std::max(best, sum);
    }
    return best;
}

}  // namespace blowup

#include "blowup/jets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace blowup {

namespace {

double factorial(int k) {
    double r = 1.0;
    for (int i = 2; i <= k; ++i) r *= i;
    return r;
}

void check_order(int order) {
    if (order < 0 || order > kMaxJetOrder) {
        std::ostringstream os;
        os << "jet order " << order << " outside [0, " << kMaxJetOrder << "]";
        throw std::invalid_argument(os.str());
    }
}

void check_base(const Jet& a, const Jet& b) {
    const double tol = 1e-12 * (1.0 + std::abs(a.base()));
    if (std::abs(a.base() - b.base()) > tol) {
        std::ostringstream os;
        os << "jets based at different points: " << a.base() << " vs " << b.base();
        throw std::invalid_argument(os.str());
    }
}

using Coeffs = std::vector<double>;

Coeffs cauchy(const Coeffs& a, const Coeffs& b, int K) {
    Coeffs c(K + 1, 0.0);
    for (int k = 0; k <= K; ++k)
        for (int j = 0; j <= k; ++j) c[k] += a[j] * b[k - j];
    return c;
}

}  // namespace

Jet::Jet(double value, int order, double base) : base_(base) {
    check_order(order);
    d_.assign(static_cast<std::size_t>(order) + 1, 0.0);
    d_[0] = value;
}

Jet::Jet(std::vector<double> derivs, double base) : base_(base), d_(std::move(derivs)) {
    if (d_.empty()) throw std::invalid_argument("jet needs at least one coefficient");
    check_order(order());
}

Jet Jet::constant(double value, int order, double base) { return Jet(value, order, base); }

Jet Jet::variable(double base, int order) {
    Jet j(base, order, base);
    if (order >= 1) j.d_[1] = 1.0;
    return j;
}

Jet Jet::derivative(int times) const {
    if (times < 0 || times > order()) throw std::invalid_argument("derivative count exceeds jet order");
    return Jet(std::vector<double>(d_.begin() + times, d_.end()), base_);
}

Jet Jet::truncated(int order) const {
    if (order > this->order()) throw std::invalid_argument("cannot raise jet order by truncation");
    return Jet(std::vector<double>(d_.begin(), d_.begin() + order + 1), base_);
}

Jet Jet::shifted(double dt) const {
    const int K = order();
    std::vector<double> out(K + 1, 0.0);
    for (int k = 0; k <= K; ++k) {
        double p = 1.0;
        for (int j = k; j <= K; ++j) {
            out[k] += d_[j] * p / factorial(j - k);
            p *= dt;
        }
    }
    return Jet(std::move(out), base_ + dt);
}

bool Jet::all_finite() const noexcept {
    return std::all_of(d_.begin(), d_.end(), [](double v) { return std::isfinite(v); });
}

Jet& Jet::operator+=(const Jet& o) {
    check_base(*this, o);
    if (o.order() < order()) d_.resize(o.d_.size());
    for (int k = 0; k <= order(); ++k) d_[k] += o.d_[k];
    return *this;
}

Jet& Jet::operator-=(const Jet& o) {
    check_base(*this, o);
    if (o.order() < order()) d_.resize(o.d_.size());
    for (int k = 0; k <= order(); ++k) d_[k] -= o.d_[k];
    return *this;
}

Jet& Jet::operator*=(const Jet& o) { return *this = *this * o; }
Jet& Jet::operator/=(const Jet& o) { return *this = *this / o; }

Jet& Jet::operator+=(double c) {
    d_[0] += c;
    return *this;
}
Jet& Jet::operator-=(double c) {
    d_[0] -= c;
    return *this;
}
Jet& Jet::operator*=(double c) {
    for (double& v : d_) v *= c;
    return *this;
}
Jet& Jet::operator/=(double c) {
    if (c == 0.0) throw JetError("division of jet by zero scalar");
    for (double& v : d_) v /= c;
    return *this;
}

Jet operator-(Jet a) {
    for (double& v : a.d_) v = -v;
    return a;
}

std::vector<double> taylor_coefficients(const Jet& j) {
    std::vector<double> a(j.derivatives().begin(), j.derivatives().end());
    for (int k = 2; k < static_cast<int>(a.size()); ++k) a[k] /= factorial(k);
    return a;
}

Jet from_taylor(std::span<const double> a, double base) {
    std::vector<double> d(a.begin(), a.end());
    for (int k = 2; k < static_cast<int>(d.size()); ++k) d[k] *= factorial(k);
    return Jet(std::move(d), base);
}

int common_order(const Jet& a, const Jet& b) { return std::min(a.order(), b.order()); }

Jet operator*(const Jet& a, const Jet& b) {
    check_base(a, b);
    const int K = common_order(a, b);
    return from_taylor(cauchy(taylor_coefficients(a), taylor_coefficients(b), K), a.base());
}

Jet operator/(const Jet& a, const Jet& b) {
    check_base(a, b);
    if (b.value() == 0.0) throw JetError("division by a jet with zero leading coefficient");
    const int K = common_order(a, b);
    const Coeffs x = taylor_coefficients(a), y = taylor_coefficients(b);
    Coeffs c(K + 1, 0.0);
    for (int k = 0; k <= K; ++k) {
        double s = x[k];
        for (int j = 0; j < k; ++j) s -= c[j] * y[k - j];
        c[k] = s / y[0];
    }
    return from_taylor(c, a.base());
}

Jet operator/(double c, const Jet& a) { return Jet(c, a.order(), a.base()) / a; }

Jet exp(const Jet& a) {
    const int K = a.order();
    const Coeffs x = taylor_coefficients(a);
    Coeffs e(K + 1, 0.0);
    e[0] = std::exp(x[0]);
    for (int k = 1; k <= K; ++k) {
        double s = 0.0;
        for (int j = 1; j <= k; ++j) s += j * x[j] * e[k - j];
        e[k] = s / k;
    }
    return from_taylor(e, a.base());
}

Jet log(const Jet& a) {
    if (!(a.value() > 0.0)) throw JetError("log of a jet with non-positive leading coefficient");
    const int K = a.order();
    const Coeffs x = taylor_coefficients(a);
    Coeffs l(K + 1, 0.0);
    l[0] = std::log(x[0]);
    for (int k = 1; k <= K; ++k) {
        double s = 0.0;
        for (int j = 1; j < k; ++j) s += j * l[j] * x[k - j];
        l[k] = (x[k] - s / k) / x[0];
    }
    return from_taylor(l, a.base());
}

Jet pow(const Jet& a, double p) {
    const double pi = std::round(p);
    if (p == pi && std::abs(pi) <= 16) {
        const int n = static_cast<int>(pi);
        Jet r(1.0, a.order(), a.base());
        for (int i = 0; i < std::abs(n); ++i) r = r * a;
        return n >= 0 ? r : 1.0 / r;
    }
    if (!(a.value() > 0.0)) throw JetError("non-integer power of a jet with non-positive leading coefficient");
    const int K = a.order();
    const Coeffs x = taylor_coefficients(a);
    Coeffs c(K + 1, 0.0);
    c[0] = std::pow(x[0], p);
    for (int k = 1; k <= K; ++k) {
        double s = 0.0;
        for (int j = 1; j <= k; ++j) s += ((p + 1.0) * j - k) * x[j] * c[k - j];
        c[k] = s / (k * x[0]);
    }
    return from_taylor(c, a.base());
}

Jet sqrt(const Jet& a) {
    if (!(a.value() > 0.0)) throw JetError("sqrt of a jet with non-positive leading coefficient");
    return pow(a, 0.5);
}

namespace {

void sincos(const Jet& a, Jet& sj, Jet& cj) {
    const int K = a.order();
    const Coeffs x = taylor_coefficients(a);
    Coeffs s(K + 1, 0.0), c(K + 1, 0.0);
    s[0] = std::sin(x[0]);
    c[0] = std::cos(x[0]);
    for (int k = 1; k <= K; ++k) {
        double ss = 0.0, cc = 0.0;
        for (int j = 1; j <= k; ++j) {
            ss += j * x[j] * c[k - j];
            cc += j * x[j] * s[k - j];
        }
        s[k] = ss / k;
        c[k] = -cc / k;
    }
    sj = from_taylor(s, a.base());
    cj = from_taylor(c, a.base());
}

}  // namespace

Jet sin(const Jet& a) {
    Jet s, c;
    sincos(a, s, c);
    return s;
}

Jet cos(const Jet& a) {
    Jet s, c;
    sincos(a, s, c);
    return c;
}

Jet compose(const Jet& outer, const Jet& inner) {
    const double y0 = inner.value();
    const double tol = 1e-12 * (1.0 + std::abs(y0));
    if (std::abs(outer.base() - y0) > tol) {
        std::ostringstream os;
        os << "compose: outer jet based at " << outer.base() << ", inner value " << y0;
        throw std::invalid_argument(os.str());
    }
    const int K = common_order(outer, inner);
    const Coeffs b = taylor_coefficients(outer);
    Coeffs h = taylor_coefficients(inner);
    h.resize(K + 1);
    h[0] = 0.0;
    // Horner: b_0 + h (b_1 + h (b_2 + ...)).
    Coeffs acc(K + 1, 0.0);
    acc[0] = b[K];
    for (int k = K - 1; k >= 0; --k) {
        acc = cauchy(acc, h, K);
        acc[0] += b[k];
    }
    return from_taylor(acc, inner.base());
}

Jet revert(const Jet& f) {
    const int K = f.order();
    if (K < 1 || f[1] == 0.0) throw JetError("revert: jet is not locally invertible (zero first derivative)");
    const double x0 = f.base(), y0 = f.value();
    Coeffs a = taylor_coefficients(f);
    a[0] = 0.0;
    Coeffs g(K + 1, 0.0);
    g[1] = 1.0 / a[1];
    // Fix g_k so that the degree-k coefficient of a(g(y)) vanishes for k >= 2.
    for (int k = 2; k <= K; ++k) {
        Coeffs acc(K + 1, 0.0), gp = g;
        for (int m = 1; m <= K; ++m) {
            for (int i = 0; i <= K; ++i) acc[i] += a[m] * gp[i];
            gp = cauchy(gp, g, K);
        }
        g[k] = -acc[k] / a[1];
    }
    g[0] = x0;
    return from_taylor(g, y0);
}

Jet jet_arith(const Jet& a, const Jet& b, JetOp op, double exponent) {
    switch (op) {
        case JetOp::add: return a + b;
        case JetOp::mul: return a * b;
        case JetOp::div: return a / b;
        case JetOp::exp: return exp(a);
        case JetOp::log: return log(a);
        case JetOp::power: return pow(a, exponent);
        case JetOp::compose: return compose(a, b);
    }
    throw std::invalid_argument("unknown jet operation");
}

// ---------------------------------------------------------------------------

void CutoffSpec::validate() const {
    if (!(inner_radius > 0.0)) throw std::invalid_argument("cutoff inner_radius must be positive");
    if (!(outer_radius > inner_radius)) throw std::invalid_argument("cutoff outer_radius must exceed inner_radius");
    if (kind == CutoffKind::polynomial_spline && (smoothness_order < 3 || smoothness_order > 12))
        throw std::invalid_argument("spline cutoff smoothness_order must be in [3, 12]");
}

std::vector<double> smoothstep_coefficients(int m) {
    auto binom = [](int n, int k) {
        double r = 1.0;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    };
    std::vector<double> c(2 * m + 2, 0.0);
    for (int k = 0; k <= m; ++k) {
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        c[m + 1 + k] = sign * binom(m + k, k) * binom(2 * m + 1, m - k);
    }
    return c;
}

Jet cutoff_of(const CutoffSpec& spec, const Jet& x) {
    spec.validate();
    const int K = x.order();
    if (x.value() <= spec.inner_radius) return Jet(0.0, K, x.base());
    if (x.value() >= spec.outer_radius) return Jet(1.0, K, x.base());
    const Jet u = (x - spec.inner_radius) / (spec.outer_radius - spec.inner_radius);
    if (spec.kind == CutoffKind::polynomial_spline) {
        // S(u) = 1 - S(1 - u); evaluating near the nearer junction keeps the
        // vanishing derivatives free of cancellation.
        const bool upper = u.value() > 0.5;
        const Jet v = upper ? 1.0 - u : u;
        const std::vector<double> c = smoothstep_coefficients(spec.smoothness_order);
        Jet acc(c.back(), K, x.base());
        for (int k = static_cast<int>(c.size()) - 2; k >= 0; --k) acc = acc * v + c[k];
        return upper ? 1.0 - acc : acc;
    }
    const Jet a = exp(-1.0 / u);
    const Jet b = exp(-1.0 / (1.0 - u));
    return a / (a + b);
}

Jet cutoff_jet(const CutoffSpec& spec, double x, int order) {
    return cutoff_of(spec, Jet::variable(x, order));
}

std::vector<Jet> grid_sample(const JetFunction& f, std::span<const double> grid) {
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("grid_sample: grid must be strictly increasing");
    std::vector<Jet> out;
    out.reserve(grid.size());
    for (double t : grid) out.push_back(f(t));
    return out;
}

}  // namespace blowup

#pragma once

// Truncated Taylor jets in one real variable.
//
// A Jet stores raw derivatives f(t0), f'(t0), ..., f^(K)(t0) (not divided by
// k!).  Arithmetic is exact through order K: products follow Leibniz, the
// elementary functions follow their own recurrences, and composition is
// Faa di Bruno done by truncated Horner evaluation.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blowup {

inline constexpr int kDefaultJetOrder = 6;
inline constexpr int kMaxJetOrder = 8;

class JetError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class Jet {
public:
    Jet() : Jet(0.0, kDefaultJetOrder) {}
    /// Constant jet of the given order.
    explicit Jet(double value, int order = kDefaultJetOrder, double base = 0.0);
    /// Jet from raw derivatives; order = derivs.size() - 1.
    Jet(std::vector<double> derivs, double base);

    static Jet constant(double value, int order = kDefaultJetOrder, double base = 0.0);
    /// The identity function t at t = base.
    static Jet variable(double base, int order = kDefaultJetOrder);

    int order() const noexcept { return static_cast<int>(d_.size()) - 1; }
    double base() const noexcept { return base_; }
    double value() const noexcept { return d_[0]; }
    double operator[](int k) const { return d_.at(static_cast<std::size_t>(k)); }
    double& operator[](int k) { return d_.at(static_cast<std::size_t>(k)); }
    std::span<const double> derivatives() const noexcept { return d_; }

    /// Jet of f' (order drops by one).
    Jet derivative(int times = 1) const;
    /// Same function, fewer orders.
    Jet truncated(int order) const;
    /// Function value and derivatives at base + dt from the Taylor polynomial.
    Jet shifted(double dt) const;
    bool all_finite() const noexcept;

    Jet& operator+=(const Jet& o);
    Jet& operator-=(const Jet& o);
    Jet& operator*=(const Jet& o);
    Jet& operator/=(const Jet& o);
    Jet& operator+=(double c);
    Jet& operator-=(double c);
    Jet& operator*=(double c);
    Jet& operator/=(double c);

    friend Jet operator-(Jet a);
    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
    friend Jet operator*(const Jet& a, const Jet& b);
    friend Jet operator/(const Jet& a, const Jet& b);
    friend Jet operator+(Jet a, double c) { return a += c; }
    friend Jet operator+(double c, Jet a) { return a += c; }
    friend Jet operator-(Jet a, double c) { return a -= c; }
    friend Jet operator-(double c, const Jet& a) { return -a + c; }
    friend Jet operator*(Jet a, double c) { return a *= c; }
    friend Jet operator*(double c, Jet a) { return a *= c; }
    friend Jet operator/(Jet a, double c) { return a /= c; }
    friend Jet operator/(double c, const Jet& a);

private:
    double base_;
    std::vector<double> d_;
};

// Taylor-normalised view (coefficient k = f^(k)/k!).
std::vector<double> taylor_coefficients(const Jet& j);
Jet from_taylor(std::span<const double> a, double base);

Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet pow(const Jet& a, double p);
Jet sqrt(const Jet& a);
Jet sin(const Jet& a);
Jet cos(const Jet& a);

/// outer o inner: `outer` must be a jet based at inner.value().
Jet compose(const Jet& outer, const Jet& inner);
/// Jet of the inverse function at y0 = f.value(), given the jet of f at x0.
Jet revert(const Jet& f);

enum class JetOp { add, mul, div, exp, log, power, compose };
/// Dispatcher over the binary/unary operations; `exponent` is used by power.
Jet jet_arith(const Jet& a, const Jet& b, JetOp op, double exponent = 1.0);

/// Order at which two jets can be combined.
int common_order(const Jet& a, const Jet& b);

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

enum class CutoffKind { smooth_reference, polynomial_spline };

struct CutoffSpec {
    CutoffKind kind = CutoffKind::polynomial_spline;
    double inner_radius = 1.0;
    double outer_radius = 2.0;
    /// Number of continuous derivatives at the junctions (spline degree 2m+1).
    int smoothness_order = 6;

    void validate() const;
};

/// Jet of the cutoff (0 below inner, 1 above outer) at x, order `order`.
Jet cutoff_jet(const CutoffSpec& spec, double x, int order = kDefaultJetOrder);
/// Cutoff composed with a jet-valued argument.
Jet cutoff_of(const CutoffSpec& spec, const Jet& x);

/// Coefficients c_k of the smoothstep S(u) = sum c_k u^k on [0,1] with
/// S(0)=0, S(1)=1 and derivatives 1..m vanishing at both ends.
std::vector<double> smoothstep_coefficients(int m);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

using JetFunction = std::function<Jet(double)>;

/// Evaluates f at each node; the grid must be strictly increasing.
std::vector<Jet> grid_sample(const JetFunction& f, std::span<const double> grid);

}  // namespace blowup

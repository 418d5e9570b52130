#pragma once

// Coordinate Kaehler curvature engine.
//
// Conventions (fixed once, audited by the tests):
//   h_{jk}  = d_j dbar_k Phi                     metric components
//   Delta   = 4 h^{jk} d_j dbar_k                Euclidean Laplacian for |z|^2
//   R_{jk}  = -d_j dbar_k log det h
//   S       = 4 h^{jk} R_{jk}                    S(Fubini-Study, n=2) = 24
//   L phi   = -1/4 Delta^2 phi - 4 <R, d dbar phi>_h
//   L* phi  = L phi - h^{jk}(phi_j S_kbar + S_j phi_kbar) - 1/4 phi Delta S
// With these choices L is exactly the derivative of S along Phi -> Phi + phi.

#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "blowup/jets.hpp"

namespace blowup {

using cplx = std::complex<double>;
using Point = std::vector<cplx>;
using HermMatrix = Eigen::MatrixXcd;

class NotKahlerError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Truncated Taylor polynomial in the 2n independent variables
/// (w_1..w_n, wbar_1..wbar_n) about a base point, complex coefficients.
/// Coefficients are Taylor-normalised; partial() returns true derivatives.
class MultiJet {
public:
    struct Layout;

    MultiJet() = default;
    MultiJet(int n, int degree, cplx constant = 0.0);

    /// Coordinate z_j (holomorphic, conj = false) or zbar_j about value v.
    static MultiJet coordinate(int n, int degree, int j, bool conj, cplx v);

    int n() const noexcept { return n_; }
    int degree() const noexcept { return degree_; }
    cplx value() const { return c_.at(0); }

    /// d^a dbar^b of the function at the base point.
    cplx partial(std::span<const int> a, std::span<const int> b) const;
    /// d/dz_j (conj = false) or d/dzbar_j; valid degree drops by one.
    MultiJet d(int j, bool conj) const;
    /// Same polynomial, lower valid degree.
    MultiJet truncated(int degree) const;

    MultiJet& operator+=(const MultiJet& o);
    MultiJet& operator-=(const MultiJet& o);
    MultiJet& operator*=(cplx s);
    MultiJet& operator+=(cplx s);

    friend MultiJet operator+(MultiJet a, const MultiJet& b) { return a += b; }
    friend MultiJet operator-(MultiJet a, const MultiJet& b) { return a -= b; }
    friend MultiJet operator*(const MultiJet& a, const MultiJet& b);
    friend MultiJet operator*(MultiJet a, cplx s) { return a *= s; }
    friend MultiJet operator*(cplx s, MultiJet a) { return a *= s; }
    friend MultiJet operator*(MultiJet a, double s) { return a *= cplx(s); }
    friend MultiJet operator*(double s, MultiJet a) { return a *= cplx(s); }
    friend MultiJet operator+(MultiJet a, double s) { return a += cplx(s); }
    friend MultiJet operator-(MultiJet a) { return a *= cplx(-1.0); }

    /// sum_k b[k] (x - x(0))^k, b Taylor coefficients of the outer function.
    friend MultiJet compose_series(std::span<const cplx> b, const MultiJet& x);

    /// Largest |c_{ab} - conj(c_{ba})| over paired coefficients (0 for a real function).
    double reality_defect() const;

private:
    int n_ = 0;
    int degree_ = 0;
    std::shared_ptr<const Layout> layout_;
    std::vector<cplx> c_;
};

MultiJet compose_series(std::span<const cplx> b, const MultiJet& x);
/// f(x) for a real 1-D jet f based at Re x(0).
MultiJet compose(const Jet& f, const MultiJet& x);
MultiJet reciprocal(const MultiJet& x);
MultiJet log(const MultiJet& x);
MultiJet exp(const MultiJet& x);

using ScalarField = std::function<MultiJet(const Point& z, int degree)>;

struct CoordinatePotential {
    int n = 2;
    ScalarField eval;
    std::string label;
};

/// Phi(z) = f(log |z|^2) for a radial profile f given as t -> jet.
CoordinatePotential radial_potential(std::function<Jet(double)> f, int n, std::string label);
/// The radial field phi(z) = u(log |z|^2) as a scalar field.
ScalarField radial_field(std::function<Jet(double)> u);

inline constexpr int kPotentialDegree = 6;

struct CurvatureData {
    HermMatrix g;
    HermMatrix g_inv;
    HermMatrix ricci;
    /// Rm_{i jbar k lbar}, flattened as ((i*n + j)*n + k)*n + l.
    std::vector<cplx> riemann;
    double scalar = 0.0;
    int n = 0;

    cplx rm(int i, int j, int k, int l) const { return riemann[((i * n + j) * n + k) * n + l]; }
};

/// Jet-valued curvature quantities about a point (degrees 4, 4, 4, 2, 2).
struct CurvatureJets {
    int n = 0;
    std::vector<MultiJet> h;      // h[j*n+k] = h_{j kbar}
    std::vector<MultiJet> h_inv;  // h_inv[k*n+j] = h^{j kbar}: matrix inverse of h
    MultiJet det;
    std::vector<MultiJet> ricci;  // R_{j kbar}
    MultiJet scalar;
};

CurvatureJets curvature_jets(const CoordinatePotential& pot, const Point& z);
CurvatureData curvature_at(const CoordinatePotential& pot, const Point& z);

/// 4 h^{jk} d_j dbar_k u, as a jet (valid degree = min(h_inv, u - 2)).
MultiJet laplacian_jet(const CurvatureJets& cj, const MultiJet& u);

double laplacian(const CoordinatePotential& pot, const ScalarField& f, const Point& z, int order);
double linearized_L(const CoordinatePotential& pot, const ScalarField& phi, const Point& z);
/// Formal adjoint computed by coordinate integration by parts against det h.
double adjoint_Lstar(const CoordinatePotential& pot, const ScalarField& phi, const Point& z);
/// Explicit first-order difference L* phi - L phi.
double lstar_minus_l_explicit(const CoordinatePotential& pot, const ScalarField& phi, const Point& z);
double nonlinear_Q(const CoordinatePotential& pot, const ScalarField& phi, const Point& z);

/// Phi + phi as a potential.
CoordinatePotential perturbed(const CoordinatePotential& pot, const ScalarField& phi);

/// Throws NotKahlerError unless min eigenvalue > 1e-12 trace.
void check_positive(const HermMatrix& g, const std::string& where);

}  // namespace blowup

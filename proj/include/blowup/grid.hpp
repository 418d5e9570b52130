#pragma once

// Radial discretization shared by gluing and solver.
//
// Nodes are cell centred in xi in (0, 1). The moment coordinate is
//   tau = tau_min + u,  u = A (exp(kappa eta) - 1),  eta = sin^2(pi xi / 2),
// with A (exp(kappa) - 1) = tau_max - tau_min (kappa = 0 gives u = U eta).
// Functions smooth on the manifold are even in xi at both ends, so the
// boundary closure is a mirror ghost: index -m-1 <-> m and N+m <-> N-1-m.
// Derivatives use 7-point central stencils; operators are banded with
// kl = ku = 3.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "blowup/jets.hpp"
#include "blowup/radial.hpp"

namespace blowup {

struct GridSpec {
    int nodes = 2048;
    /// Width A of the linear layer above tau_min; 0 means the plain sin^2 map.
    double core_scale = 0.0;
};

class Grid {
public:
    Grid(const GridSpec& spec, double tau_min, double tau_max);

    int size() const noexcept { return n_; }
    double h() const noexcept { return h_; }
    double tau_min() const noexcept { return tau_min_; }
    double tau_max() const noexcept { return tau_max_; }
    double kappa() const noexcept { return kappa_; }
    const GridSpec& spec() const noexcept { return spec_; }

    double xi(int i) const { return (i + 0.5) * h_; }
    const TauPoint& point(int i) const { return pts_[i]; }
    const std::vector<TauPoint>& points() const { return pts_; }
    double dtau_dxi(int i) const { return dtau_[i]; }

    /// tau as a jet in xi at arbitrary xi (order K).
    Jet tau_of_xi(double xi, int order = 6) const;
    TauPoint point_at_xi(double xi) const;
    /// Inverse map, accurate near both ends.
    double xi_of(const TauPoint& p) const;
    TauPoint point_from_tau(double tau) const;

    /// B(k, j): d_tau^k = sum_j B(k, j) d_xi^j at node i (k, j <= 4).
    const std::array<double, 25>& chain(int i) const { return chain_[i]; }

    /// Column index after mirror folding.
    int fold(int j) const;
    /// xi-derivatives 0..4 of a grid field at node i.
    std::array<double, 5> xi_derivatives(const std::vector<double>& f, int i) const;
    /// tau-jet (order 4) of a grid field at node i. Uses 7-point weights in
    /// tau itself (one-sided at the ends): the xi chain rule loses about
    /// N^6 eps at the end nodes.
    Jet field_jet(const std::vector<double>& f, int i) const;
    /// tau-jet (order 4) of a grid field at an arbitrary point.
    Jet jet_at(const std::vector<double>& f, const TauPoint& p) const;
    std::vector<Jet> field_jets(const std::vector<double>& f) const;

    /// 6-point Lagrange row (folded indices, weights) at arbitrary xi.
    std::vector<std::pair<int, double>> interp_row(double xi) const;
    double interpolate(const std::vector<double>& f, double xi) const;

    /// Volume quadrature weights: vol_factor(n) tau^{n-1} dtau/dxi h.
    std::vector<double> volume_weights(int n) const;

    /// Central 7-point weights for derivative k (offsets -3..3, unit spacing).
    static const std::array<std::array<double, 7>, 5>& stencil();

private:
    GridSpec spec_;
    int n_;
    double h_, tau_min_, tau_max_, U_, A_, kappa_;
    std::vector<TauPoint> pts_;
    std::vector<double> dtau_;
    std::vector<std::array<double, 25>> chain_;
    std::vector<std::array<double, 35>> jet_w_;

    int stencil_start(int i) const { return std::clamp(i - 3, 0, n_ - 7); }
    double offset(const TauPoint& from, int m) const;
};

/// Finite-difference weights (Fornberg) for derivative orders 0..m at x0.
std::vector<std::vector<double>> fornberg_weights(double x0, const std::vector<double>& x, int m);

// ---------------------------------------------------------------------------

class BandedMatrix {
public:
    BandedMatrix() = default;
    BandedMatrix(int n, int kl, int ku);

    int size() const noexcept { return n_; }
    int kl() const noexcept { return kl_; }
    int ku() const noexcept { return ku_; }
    bool in_band(int i, int j) const { return j - i <= ku_ && i - j <= kl_; }
    double get(int i, int j) const;
    void add(int i, int j, double v);
    void set(int i, int j, double v);

    std::vector<double> multiply(const std::vector<double>& x) const;
    Eigen::MatrixXd dense() const;

    /// LU factorization (LAPACK dgbtrf); throws on breakdown.
    void factor();
    bool factored() const noexcept { return factored_; }
    /// Solves A x = b (or A^T x = b) with the stored factors.
    std::vector<double> solve(const std::vector<double>& b, bool transpose = false) const;

private:
    int n_ = 0, kl_ = 0, ku_ = 0, ldab_ = 0;
    std::vector<double> ab_;  // column-major band storage with kl extra rows for LU
    std::vector<double> lu_;
    std::vector<int> ipiv_;
    bool factored_ = false;
};

/// Per-node tau-derivative coefficients of a radial operator.
std::vector<std::array<double, 5>> operator_coefficients(const Grid& g, const MomentMetric& F, int n, RadialOp op);
/// Banded xi-discretization of sum_k c_k d_tau^k.
BandedMatrix assemble(const Grid& g, const std::vector<std::array<double, 5>>& coeffs);

// ---------------------------------------------------------------------------

struct KernelBasis {
    std::shared_ptr<const Grid> grid;
    int n = 2;
    /// Grid fields, orthonormal for the volume quadrature.
    std::vector<std::vector<double>> vectors;
    /// Leading singular values (ascending) of the discretized operator.
    std::vector<double> singular_values;
    /// Selected points q_i as positions on the grid (xi) and moment coordinates.
    std::vector<double> point_xi;
    std::vector<TauPoint> points;
    Eigen::MatrixXd gram;  // gram(i, j) = f_i(q_j)
    double gram_sigma_min = 0.0;

    int dim() const { return static_cast<int>(vectors.size()); }
    /// f_i at an arbitrary point of M given by its base moment coordinate.
    double eval(int i, const TauPoint& p) const;
};

class KernelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Null space of a square operator matrix by SVD with a gap test.
/// Returns columns spanning the near-kernel; `sv` gets the smallest singular values.
Eigen::MatrixXd near_kernel(const Eigen::MatrixXd& L, std::vector<double>& sv, int max_dim = 6,
                            double gap_ratio = 1e4);
/// Orthonormalizes kernel columns under weights w, ordered by probe functions.
std::vector<std::vector<double>> orthonormal_kernel(const Eigen::MatrixXd& K, const std::vector<double>& w,
                                                    const std::vector<std::vector<double>>& probes);

/// Radial kernel of L for a base metric on `g`.
KernelBasis kernel_basis(std::shared_ptr<const Grid> grid, const MomentMetric& F, int n);

/// Greedy point selection maximizing the smallest singular value of the
/// evaluation matrix; candidates are xi positions on the kernel's grid.
void select_points(KernelBasis& kb, const std::vector<double>& candidate_xi);
/// Node positions with tau in [lo, hi]: the default candidates keep q_i away
/// from the blown-up point and from the far pole, where the gluing and the
/// end closures act.
std::vector<double> candidate_points(const Grid& g, double lo = 0.5, double hi = 0.95);

}  // namespace blowup

#pragma once

// Weighted Holder norms on the blown-up manifold for radial fields.
//
// The weight is rho = 1 outside B_1, |z| on the neck, eps on the core.
// Derivatives are taken along the radial geodesic, D = d/ds = 2 sqrt(F) d/dtau
// in moment terms (on the neck D agrees with d/d|z| to leading order), and
//
//   |grad^i f| ~ sum_{j=1..i} rho^{j-i} |D^j f|,   |grad^0 f| = |f|.
//
// The Holder term compares D^k f at node pairs with |t1 - t2| <= 1.

#include <vector>

#include "blowup/grid.hpp"
#include "blowup/jets.hpp"

namespace blowup {

struct WeightedNormSpec {
    int k = 4;
    double alpha = 0.5;
    double delta = -0.1;
    double eps = 0.1;
    bool holder = true;
};

/// rho at the point with t = log |z|^2.
double weight_rho(double eps, double t);

struct NormSample {
    double t = 0.0;          // log |z|^2
    double s = 0.0;          // radial arc length
    std::vector<double> D;  // D^j f, j = 0..k
};

/// D^j f for j = 0..k from tau-jets of f and F (orders >= k and k - 1).
std::vector<double> arc_derivatives(const Jet& f_tau, const Jet& F, int k);
/// Flat-neck sample from a t-jet: s = |z|, D = d/d|z|.
NormSample sample_from_t(const Jet& f_t, int k);
/// Samples of a grid field; metric F and t given per node.
std::vector<NormSample> grid_samples(const Grid& g, const std::vector<Jet>& F, const std::vector<double>& t,
                                    const std::vector<double>& field, int k);

/// max over nodes and i <= k of rho^{i - delta} |grad^i f| plus the Holder
/// term. Throws std::invalid_argument when neck samples are coarser than
/// half a unit in t.
double weighted_norm(const std::vector<NormSample>& f, const WeightedNormSpec& spec);

/// Three-region form: C^{k,alpha} outside B_{1/2}, the |z|-weighted neck
/// norm on eps <= |z| <= 1 and eps^{-delta} times the C^{k,alpha} norm of
/// f(eps w) on |w| <= 2, summed. Equivalent to weighted_norm uniformly in eps.
double piecewise_norm(const std::vector<NormSample>& f, const WeightedNormSpec& spec);

struct DecayFit {
    double exponent = 0.0;
    double log_constant = 0.0;
    double max_residual = 0.0;  // in log |value|
};

/// Least-squares fit of log |value| = c + p log r.
DecayFit fit_decay(const std::vector<double>& r, const std::vector<double>& value);

// Flat radial Laplacian on r^delta-weighted functions. With s = log r,
// u = r^delta v and Delta u = r^(delta - 2) g,
//   g = v'' + (2 delta + 2n - 2) v' + delta (delta + 2n - 2) v,
// which is not invertible uniformly in the interval length when delta is an
// indicial root 0 or 2 - 2n.
struct IndicialModel {
    int n = 2;
    double delta = -0.5;
    double s_lo = -20.0;  // log of the inner radius; the outer radius is 1
    int nodes = 512;      // interior nodes, Dirichlet v = g / (delta (delta + 2n - 2)) at both ends

    double root_product() const { return delta * (delta + 2 * n - 2); }
    /// Solves for v at the interior nodes.
    std::vector<double> solve(const std::vector<double>& g) const;
    /// sup norm of the discrete inverse (homogeneous ends): max row sum of |A^-1|.
    double inverse_norm() const;
};

}  // namespace blowup

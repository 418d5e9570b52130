#pragma once

// U(n)-invariant reduction. A potential Phi(z) = f(t), t = log |z|^2, has
// metric eigenvalues e^{-t} f' (multiplicity n-1) and e^{-t} f'', Ricci
// potential P = n t - (n-1) log f' - log f'' and
//
//   S       = 4 [(n-1) P'/f' + P''/f'']
//   Delta u = 4 [(n-1) u'/f' + u''/f'']
//   L phi   = -1/4 Delta^2 phi - 4 [(n-1) P' phi'/f'^2 + P'' phi''/f''^2]
//   L* phi  = L phi - 2 phi' S'/f'' - 1/4 phi Delta S
//
// in the conventions of kahler.hpp; cross_check() compares every formula
// against the coordinate engine.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "blowup/jets.hpp"

namespace blowup {

using RadialField = std::function<Jet(double)>;

/// A point given by its moment coordinate, with both offsets held exactly.
struct TauPoint {
    double tau = 0.0;
    double u = 0.0;  // tau - tau_min
    double v = 0.0;  // tau_max - tau
};

/// F(tau) of a metric as a tau-jet of order >= 4.
using MomentMetric = std::function<Jet(const TauPoint&)>;

struct RadialProfile {
    int n = 2;
    RadialField f;
    double t_min = -40.0;
    double t_max = 40.0;
    std::string label;
    /// Optional: radial part of the normal-form potential f - e^t (O(e^{2t})).
    RadialField normal_phi;
    /// Optional: exact moment data on [0, 1] and the inverse map tau -> t.
    MomentMetric moment;
    std::function<double(const TauPoint&)> t_of_moment;

    Jet jet(double t) const { return f(t); }
};

struct RadialCurvature {
    double S = 0.0;
    Jet P;
    std::pair<double, double> eigen_g;
    std::pair<double, double> eigen_ric;
};

enum class RadialOp { L, Lstar, Q };

class PositivityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Jet of S from a potential jet of order K (result order K-4).
Jet radial_scalar_jet(const Jet& f, int n);
/// Jet of Delta u (order min(u, f-2) - 2).
Jet radial_laplacian_jet(const Jet& f, const Jet& u, int n);
/// Operator value at the base point; f needs order 6, phi order 4.
double radial_apply(const Jet& f, const Jet& phi, int n, RadialOp which);
/// Coefficients c_k with op(phi) = sum c_k phi^(k), k = 0..4 (L, Lstar only).
std::vector<double> radial_coefficients(const Jet& f, int n, RadialOp which);

RadialCurvature radial_curvature(const RadialProfile& p, double t);
double radial_operator(const RadialProfile& p, const RadialField& phi, double t, RadialOp which);

/// Jets of the logistic sigma = e^t/(1+e^t) and of 1 - sigma, free of cancellation.
std::pair<Jet, Jet> logistic_jets(double t, int order = kDefaultJetOrder);
Jet fubini_study_jet(double t, int order = kDefaultJetOrder);
/// log(1+e^t) - e^t, accurate at both ends.
Jet fs_normal_phi_jet(double t, int order = kDefaultJetOrder);

/// F = tau (1 - tau) on [0, 1] (order 6), exact.
Jet fubini_study_moment(const TauPoint& q);

/// name in {flat, burns_simanca, fubini_study, fs_normal_phi}.
RadialProfile profile_library(const std::string& name, int n);

// ---------------------------------------------------------------------------
// Moment coordinate tau = f'(t) with F(tau) = f''(t). In these terms
//   P_t     = n - (n-1) F/tau - F_tau
//   S       = 4 [(n-1) P_t/tau + d_tau P_t]
//   Delta u = 4 [(n-1) F u_tau/tau + (F u_tau)_tau]
//   <Ric, ddbar u> = (n-1) P_t F u_tau/tau^2 + d_tau P_t (F u_tau)_tau
// and L* u - L u = -2 F u_tau S_tau - 1/4 u Delta S. Every profile used here is
// smooth in tau up to both ends, so nothing cancels near the line at infinity.
// All jets below are jets in tau.
// ---------------------------------------------------------------------------

/// S as a jet (order F - 2).
Jet moment_scalar_jet(const Jet& F, int n);
/// Delta u (order min(u, F + 1) - 2).
Jet moment_laplacian_jet(const Jet& F, const Jet& u, int n);
/// Operator value at the base point. L needs F order 3, L* and Q order 4; u order 4.
double moment_apply(const Jet& F, const Jet& u, int n, RadialOp which);
/// L u as a jet (order min(u - 4, F - 3)).
Jet moment_L_jet(const Jet& F, const Jet& u, int n);
/// c_k with op(u) = sum c_k d_tau^k u, k = 0..4.
std::vector<double> moment_coefficients(const Jet& F, int n, RadialOp which);
/// F(tau) from the t-jet of f (order K -> K - 2).
Jet moment_from_t(const Jet& f);
/// Moment data of f + u: F_new as a jet in the new coordinate
/// tau_new = tau + F u_tau, based at tau_new(tau0). Order min(F, u - 1) - 1.
Jet moment_perturb(const Jet& F, const Jet& u);

/// Volume density: omega^n/n! = vol_density(n) f'^{n-1} f'' dt.
double radial_volume_factor(int n);

struct QuadratureSpec {
    double t_lo = -30.0;
    double t_hi = 30.0;
    double panel_width = 0.05;  // in t
    int points_per_panel = 8;
    /// When positive, panels must resolve |z| = cutoff_radius to radius/16.
    double cutoff_radius = 0.0;
};

/// Integral of S omega^n/n! over the t-interval of `q`.
double total_scalar_curvature(const RadialProfile& p, const QuadratureSpec& q);
/// 4 * 2 pi c_1 . [omega] for n = 2 on Bl(CP^2) with areas 2 pi tau_max on a
/// line and 2 pi tau_min on the exceptional curve.
double total_scalar_intersection(double tau_max, double tau_min);

struct CrossCheckReport {
    std::string label;
    int count = 0;
    double max_rel_dev_S = 0.0;
    double max_rel_dev_L = 0.0;
    double max_rel_dev_Lstar = 0.0;
    double max_rel_dev_Q = 0.0;
    double max_rel_dev = 0.0;
    bool passed = false;  // max_rel_dev <= 1e-6
};

/// Random (t, direction) samples, comparing the radial formulas with the
/// coordinate engine on the same potential.
CrossCheckReport cross_check(const RadialProfile& p, int count, std::uint64_t seed, double t_lo = -3.0,
                             double t_hi = 3.0);

nlohmann::json profile_to_json(const RadialProfile& p, const std::vector<double>& grid);
nlohmann::json to_json(const CrossCheckReport& r);

}  // namespace blowup

#pragma once

// Glued metrics on the blowup of a U(n)-fixed point.
//
//   f_eps    = e^t + g1 phi + eps^2 g2 (t/2 - log eps)          (omega_eps)
//   f_tilde  = e^t + g1 phi + eps^2 (t/2 - log eps) + eps^2 g1 psi
//
// with g1 = cutoff(|z|/r_eps) (0 on B_{r_eps}, 1 outside B_{2 r_eps}),
// g2 = 1 - g1, phi the normal-form part of the base and psi = Gamma - t/2.
// Inside B_{r_eps} both are eps^2 times the Burns-Simanca potential in
// w = z/eps; outside B_{2 r_eps} they are the base and base + eps^2 Gamma.
//
// Every family is evaluated in its own moment coordinate tau in
// [eps^2/2, 1]: the core is F = tau - eps^2/2 exactly, the outer region is
// the base's moment data (perturbed by eps^2 Gamma for the improved family)
// and the neck is converted from t-jets, where t is moderate.

#include <memory>
#include <utility>
#include <vector>

#include "json.hpp"

#include "blowup/grid.hpp"
#include "blowup/jets.hpp"
#include "blowup/radial.hpp"

namespace blowup {

struct GluingConfig {
    double eps = 0.1;
    double beta = 0.6;
    double delta = -0.1;
    CutoffSpec cutoff;
    int n = 2;
    GridSpec grid;
    /// n >= 3 only: the core correction psi(s) of the scalar-flat model, s = log |w|^2.
    RadialField core_psi;

    double r_eps() const;
    /// Throws std::invalid_argument on a violated invariant.
    void validate() const;
};

enum class Region { core, neck, outer };

/// One point of a glued family.
struct MomentPoint {
    TauPoint p;       // moment coordinate of the family
    Jet F;            // F(tau) (order 4), based at p.tau
    double t = 0.0;   // log |z|^2
    TauPoint base;    // moment coordinate of the same point for the base metric
    Region region = Region::core;
};

struct GammaData;

struct GluedFamily {
    RadialProfile profile;  // potential in t
    GluingConfig config;
    std::pair<double, double> class_coeffs{1.0, 0.0};
    double r_inner = 0.0, r_outer = 0.0;
    double tau_min = 0.0, tau_max = 1.0;
    double tau_in = 0.0, tau_out = 0.0;  // neck boundaries in tau
    bool improved = false;
    RadialProfile base;
    std::shared_ptr<const GammaData> gamma;

    MomentPoint at(const TauPoint& p) const;
    /// Family coordinate of a base point outside B_{2 r_eps}.
    TauPoint from_base(const TauPoint& p0) const;
    MomentMetric metric() const;
    /// The family's grid: core layer of width eps^2/4 unless the config sets one.
    Grid make_grid() const;

    // implementation hooks
    std::function<MomentPoint(const TauPoint&)> eval;
    std::function<TauPoint(const TauPoint&)> outer_map;
};

/// omega_eps from a base with normal-form data (profile_library("fubini_study", n)).
GluedFamily make_glued_profile(const RadialProfile& base, const GluingConfig& cfg);

/// |z|^2 + chi_r phi: the base on B_r, flat outside B_{2r}.
RadialProfile make_omega_prime(const RadialProfile& base, double r, const CutoffSpec& cutoff = {});

struct GammaData {
    KernelBasis kernel;
    RadialProfile base;
    CutoffSpec cutoff;
    double r = 0.6;  // chi_r = 1 on B_r, 0 outside B_{2r}
    std::vector<double> g_coeffs;
    std::vector<double> theta;     // Gamma - chi_r log|z| on the kernel grid
    std::vector<double> theta_lo;  // low-order part: theta + theta_lo solves the discrete system
    double theta_at_p = 0.0;
    double residual = 0.0;      // sup over nodes of |L Gamma - g|, in extended precision
    double rel_residual = 0.0;  // residual over sum_j |L_ij theta_j| + |g|
    int gauge_rows = 0;

    const Grid& grid() const { return *kernel.grid; }
    /// chi_r t/2 as a jet in the base moment coordinate.
    Jet singular_jet(const TauPoint& p0, int order = 6) const;
    /// theta as an order-6 jet: derivatives 0..3 from the grid, the rest from L Gamma = g.
    Jet theta_jet(const TauPoint& p0) const;
    Jet gamma_jet(const TauPoint& p0) const;
    /// psi = Gamma - t/2.
    Jet psi_jet(const TauPoint& p0) const;
    double g_value(const TauPoint& p0) const;
    Jet g_jet(const TauPoint& p0) const;
};

/// Solves L_omega Gamma = g with Gamma = chi_r log|z| + theta, g in the
/// kernel span, theta(p) = 0 and theta orthogonal to the non-constant kernel
/// vectors, as one bordered system. Throws KernelError if it is singular.
GammaData build_gamma(const RadialProfile& base, const KernelBasis& kernel, double r,
                      const CutoffSpec& cutoff = {});

/// omega_tilde_eps from omega_eps and Gamma (n = 2).
GluedFamily make_improved_profile(const GluedFamily& fam, std::shared_ptr<const GammaData> gamma);
/// Same, without requiring omega_eps itself to be positive: the cut-off
/// eps^2 log term of omega_eps is what fails first at large eps, and
/// omega_tilde_eps does not contain it.
GluedFamily make_improved_profile(const RadialProfile& base, const GluingConfig& cfg,
                                  std::shared_ptr<const GammaData> gamma);

/// Samples f', f'' of the profile across the neck; throws PositivityError.
void check_neck_positivity(const GluedFamily& fam, int samples = 400);

nlohmann::json family_to_json(const GluedFamily& fam, int samples = 64);

}  // namespace blowup

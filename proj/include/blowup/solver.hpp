#pragma once

// L~* phi = L* phi - sum_i phi(q_i) f_i on a family grid, its inverse, and
// the Picard iteration
//
//   phi_{k+1} = (L~*)^{-1} (S(omega) - S(omega~) + eps^2 g - Q(phi_k)),
//   Q(phi) = S(omega~ + i ddbar phi) - S(omega~) - L phi.
//
// The banded part is L* plus a shift sigma_i e_{r_i} E_i (E_i the
// interpolation row of q_i, r_i the node just below q_i), so the factored
// matrix is banded and nonsingular; L~* is recovered with a rank-d Woodbury
// correction. Rows are equilibrated before factoring.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "blowup/gluing.hpp"
#include "blowup/grid.hpp"
#include "blowup/wnorm.hpp"

namespace blowup {

/// Per-node data of a glued family on its grid.
struct FamilyFields {
    std::shared_ptr<const Grid> grid;
    int n = 2;
    double eps = 0.1;
    std::vector<MomentPoint> pts;
    std::vector<Jet> F;        // order 4
    std::vector<double> t;     // log |z|^2
    std::vector<Jet> S;        // S of the family, order 2
    std::vector<double> S_base;  // S of the base metric at the same point
    std::vector<double> rho;

    static FamilyFields build(const GluedFamily& fam);
    static FamilyFields build(const GluedFamily& fam, std::shared_ptr<const Grid> grid);
};

class DiscreteOperator {
public:
    DiscreteOperator() = default;

    std::shared_ptr<const Grid> grid;
    int n = 2;
    double delta = -0.1, eps = 0.1;
    BandedMatrix band;                                    // L* (unscaled)
    std::vector<std::vector<double>> f;                   // lifted kernel fields f_i
    std::vector<std::vector<std::pair<int, double>>> eval;  // phi -> phi(q_i)
    std::vector<int> shift_rows;
    std::vector<double> shift;
    /// Residual-correction steps after each forward solve.
    int refine_steps = 2;

    int rank() const { return static_cast<int>(f.size()); }
    std::vector<double> apply(const std::vector<double>& phi) const;
    /// Solves L~* x = b (or its transpose).
    std::vector<double> solve(const std::vector<double>& b, bool transpose = false) const;
    double evaluate(int i, const std::vector<double>& phi) const;

    /// Factors the shifted band and the capacitance matrix.
    void factor();

private:
    std::vector<double> solve_once(const std::vector<double>& b, bool transpose) const;

    BandedMatrix scaled_;           // D (L* + shifts), factored
    std::vector<double> row_scale_;  // D
    Eigen::MatrixXd U_;             // D (f + sigma e_r), N x d
    Eigen::MatrixXd Z_, Zt_;        // B^-1 U and B^-T V
    Eigen::PartialPivLU<Eigen::MatrixXd> cap_, cap_t_;
    bool factored_ = false;
};

/// Lifts the base kernel to the family and attaches the evaluation rows at
/// the kernel's selected points (which must lie outside B_{2 r_eps}).
DiscreteOperator discretize_Ltilde(const GluedFamily& fam, const FamilyFields& ff, const KernelBasis& kernel,
                                   double delta);

/// sup rho^{4 - delta} |h|
double rhs_norm(const FamilyFields& ff, const std::vector<double>& h, double delta);
/// Weighted C^{4,alpha}_delta norm of a grid field.
double field_norm(const FamilyFields& ff, const std::vector<double>& phi, double delta, double alpha = 0.5);

struct InverseNormEstimate {
    double value = 0.0;      // best ratio ||L~*^-1 h||_{4,delta} / ||h||_{0,delta-4}
    int starts = 0;
    int steps = 0;
    std::uint64_t seed = 0;
};

/// Power iteration on the weighted inverse: a lower bound for the operator norm.
InverseNormEstimate estimate_inverse_norm(const DiscreteOperator& op, const FamilyFields& ff, int starts = 3,
                                          int steps = 20, std::uint64_t seed = 1);

/// Solution and estimate together.
std::pair<std::vector<double>, InverseNormEstimate> invert_Ltilde(const DiscreteOperator& op, const FamilyFields& ff,
                                                                 const std::vector<double>& rhs);

// ---------------------------------------------------------------------------

enum class EquationMode { star1, star2 };

struct PicardOptions {
    double tol = 1e-9;
    int max_iter = 50;
    EquationMode mode = EquationMode::star2;
    /// Replaces S(omega) in the right side when set (one entry per node).
    std::vector<double> target;
    /// When false, contraction and positivity failures end the iteration and
    /// are recorded in SolveReport::failure instead of thrown.
    bool throw_on_failure = true;
};

class ContractionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolveReport {
    double eps = 0.0, r_eps = 0.0, delta = 0.0, beta = 0.0;
    std::string mode;
    int iterations = 0;
    bool converged = false;
    std::string failure;  // empty unless the iteration stopped early
    std::vector<double> update_norms;
    std::vector<double> ratios;
    std::vector<double> residual_history;  // sup |S(omega_phi) - S(omega)| per iterate
    double residual = 0.0;
    /// sup over nodes of the value-rounding bound u ||phi|| sum_j |L_ij| on
    /// S(omega_phi): near the divisor tip it can exceed the residual itself.
    double residual_floor = 0.0;
    double min_S = 0.0;
    double phi_norm = 0.0;
    double weighted_consistency = 0.0;  // sup rho^{4-delta} |S(omega_phi) - S(omega) - rhs(phi)|
    std::map<std::string, double> rhs_breakdown;
    std::pair<double, double> class_coeffs{1.0, 0.0};
    std::vector<double> phi;

    nlohmann::json to_json() const;
    /// iter, update_norm, ratio, residual_sup
    std::string history_csv() const;
};

/// S(omega~ + i ddbar phi) at every node.
std::vector<double> perturbed_scalar(const FamilyFields& ff, const std::vector<double>& phi);
/// Q(phi) at every node.
std::vector<double> nonlinear_remainder(const FamilyFields& ff, const std::vector<double>& phi);
/// One application of N_eps.
std::vector<double> picard_map(const DiscreteOperator& op, const FamilyFields& ff, const std::vector<double>& source,
                               const std::vector<double>& phi);
/// S(omega) - S(omega~) (+ eps^2 g in (*2) mode) at every node.
std::vector<double> picard_source(const FamilyFields& ff, const GammaData* gamma, const PicardOptions& opt);

SolveReport picard_solve(const GluedFamily& fam, const GammaData* gamma, const KernelBasis& kernel,
                         const PicardOptions& opt = {});
SolveReport picard_solve(const DiscreteOperator& op, const FamilyFields& ff, const GluedFamily& fam,
                         const GammaData* gamma, const PicardOptions& opt = {});

/// sup rho^{4-delta} |S(omega~) - S(omega) - eps^2 g| (the gluing error).
double weighted_scalar_error(const FamilyFields& ff, const GammaData* gamma, double delta);

}  // namespace blowup

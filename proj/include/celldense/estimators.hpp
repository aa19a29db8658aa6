#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "celldense/grid.hpp"

namespace celldense {

struct EmConfig {
    int max_iters = 5000;
    // Stop when the largest per-tile relative change falls below tol, or
    // when the ML-optimality residual falls below tol_ml, whichever first.
    double tol = 1e-10;
    double tol_ml = 1e-8;
};

struct MapConfig {
    int max_iters = 20000;
    double tol = 1e-6;        // sup norm of the unit-step projected gradient
    double initial_step = 1.0;
    double backtrack = 0.5;   // step shrink factor inside the line search
    double armijo = 1e-4;     // sufficient-increase fraction
    int max_backtracks = 60;
};

// Single-pass Bayes-rule estimate u = diag(alpha) P' diag(P alpha)^-1 c.
// Mass equals the count total up to roundoff.
DensityEstimate sb_estimate(const AssignmentMatrix& P, const CountVector& c,
                            const PriorVector& alpha);

// Multiplicative fixed-point iteration for the Poisson ML problem, started
// from u0 = C * alpha. Every iterate is nonnegative with mass C; zero tiles
// stay zero. Tiles that decay below C*1e-14 are flushed to exact zero on
// return and the mass renormalized, so the returned point satisfies the
// optimality residual bound on its positive tiles.
DensityEstimate em_estimate(const AssignmentMatrix& P, const CountVector& c,
                            const PriorVector& a0, const EmConfig& cfg = {});

// Same iteration from an arbitrary nonnegative start (zeros allowed, and
// they persist). Exposed so callers can continue from a known point.
DensityEstimate em_iterate(const AssignmentMatrix& P, const CountVector& c,
                           std::vector<double> start, const EmConfig& cfg = {});

// Fixed-point defect of the ML stationarity condition: with
// m_j = sum_i c_i p_ij / (p_i'u), returns max_j of |m_j - 1| on tiles with
// u_j > 0 and of max(m_j - 1, 0) on tiles with u_j = 0 (at the boundary
// the condition is one-sided).
double ml_optimality_residual(const AssignmentMatrix& P, const CountVector& c,
                              std::span<const double> u);

// sum_i c_i log(p_i'u); terms with c_i = 0 contribute zero. Returns
// -infinity when some c_i > 0 meets p_i'u = 0.
double loglikelihood(const AssignmentMatrix& P, const CountVector& c,
                     std::span<const double> u);

// Gradient of the log-likelihood: grad_j = sum_i c_i p_ij / (p_i'u).
std::vector<double> loglik_gradient(const AssignmentMatrix& P, const CountVector& c,
                                    std::span<const double> u);

// x'Hx = -sum_i c_i (p_i'x)^2 / (p_i'u)^2, never positive.
double loglik_hessian_quadform(const AssignmentMatrix& P, const CountVector& c,
                               std::span<const double> u, std::span<const double> x);

// True iff u >= -tol entrywise and ||P u - c||_inf <= tol * max(1, C).
bool mlbs_membership(const AssignmentMatrix& P, const CountVector& c,
                     std::span<const double> u, double tol = 1e-9);

// Maximize c'log(Pu) + u'log(alpha) - sum_j lgamma(u_j + 1) over the scaled
// simplex {u >= 0, ||u||_1 = C} by projected gradient ascent with a
// backtracking line search.
DensityEstimate map_estimate(const AssignmentMatrix& P, const CountVector& c,
                             const PriorVector& alpha, const MapConfig& cfg = {});

// Maximize c'log(Pu) - (u-a)'A^-1(u-a)/2 over the same simplex, where
// a = C * alpha and A = diag(a).
DensityEstimate approx_map_estimate(const AssignmentMatrix& P, const CountVector& c,
                                    const PriorVector& alpha, const MapConfig& cfg = {});

// Euclidean projection onto {u >= 0, ||u||_1 = total}. Exposed for tests.
std::vector<double> project_simplex(std::vector<double> v, double total);

// Precomputed closed-form projector onto the count-consistent subspace:
// F = A P'(P A P')^-1 and the offset g = (F P - I)a. F does not change when
// the prior is rescaled, and g is stored for unit mass and scaled by the
// count total at estimate time, so one operator serves any count vector
// over the same network. Rows of P that coincide within 1e-12 are merged
// (their counts sum) before factorization; all-zero rows are dropped.
class DfOperator {
public:
    int cells() const { return static_cast<int>(Pm_.rows()); }       // merged rows
    int tiles() const { return static_cast<int>(Pm_.cols()); }
    int original_cells() const { return static_cast<int>(row_group_.size()); }
    std::uint64_t fingerprint() const { return fingerprint_; }
    const Eigen::MatrixXd& F() const { return F_; }
    const Eigen::VectorXd& g_unit() const { return g_unit_; }
    // row_group()[i] is the merged row for original cell i, or -1 if the
    // cell's footprint row was all zeros and had to be dropped.
    const std::vector<int>& row_group() const { return row_group_; }

    // Binary snapshot for fingerprint-keyed caching. Machine-local format
    // (native endianness); load validates the magic and dimensions.
    void save(std::ostream& out) const;
    static DfOperator load(std::istream& in);

    friend DfOperator df_precompute(const AssignmentMatrix& P, const PriorVector& alpha);
    friend DensityEstimate df_estimate(const DfOperator& op, const CountVector& c, bool refine);

private:
    Eigen::MatrixXd F_;       // tiles x merged cells
    Eigen::MatrixXd Pm_;      // merged cells x tiles (dense copy for refine/diagnostics)
    Eigen::VectorXd alpha_;   // normalized prior
    Eigen::VectorXd g_unit_;  // g for a prior of unit mass
    std::vector<int> row_group_;
    std::uint64_t fingerprint_ = 0;
};

DfOperator df_precompute(const AssignmentMatrix& P, const PriorVector& alpha);

// Hash of (P, alpha) identifying a DfOperator's inputs. Cheap relative to
// the factorization, so callers can key snapshot caches before deciding
// whether to precompute.
std::uint64_t df_fingerprint(const AssignmentMatrix& P, const PriorVector& alpha);

// u = max(F c - g, 0) elementwise. With refine, the equality-constrained
// system is re-solved on the unclipped coordinates until no new negative
// entries appear (active-set iteration); this goes beyond the single
// projection and restores count consistency when clipping occurred.
DensityEstimate df_estimate(const DfOperator& op, const CountVector& c, bool refine = false);

}  // namespace celldense

#pragma once

#include <iosfwd>
#include <optional>
#include <span>

#include "bers/neural_linear.hpp"
#include "bers/numerics.hpp"

namespace bers {

/// Probability vector over source demonstrators.
struct SourceWeights {
    Vector a;

    std::size_t size() const { return static_cast<std::size_t>(a.size()); }
    static SourceWeights uniform(std::size_t n);
    static SourceWeights unit(std::size_t n, std::size_t k);
    /// Entries non-negative and summing to one within `tol`.
    bool on_simplex(double tol = 1e-9) const;
};

/// min_a  -mu_t^T M a + 1/2 a^T (M^T M + S) a  over the probability simplex.
struct QpInstance {
    /// (d+1) x N, column i is the posterior mean of source i.
    Matrix means;
    /// Diagonal of S: E[sigma_i^2] tr(Sigma_i).
    Vector penalties;
    Vector target_mean;

    std::size_t sources() const { return static_cast<std::size_t>(means.cols()); }
    Matrix hessian() const;
    Vector linear() const;
    double objective(const Vector& a) const;
};

struct QpSolution {
    SourceWeights weights;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// beta/(alpha-1) tr(Lambda^{-1}); throws AlphaTooSmall for alpha <= 1.
double variance_penalty(const NigHead& head);

/// Throws AlphaTooSmall when any source has alpha <= 1.
QpInstance build_qp(std::span<const NigHead> sources, const NigHead& target);

/// Primal active-set solve restricted to the simplex. `warm_start`, when
/// given, seeds the iterate and its zero pattern seeds the active set.
QpSolution solve_qp(const QpInstance& qp, const std::optional<Vector>& warm_start = std::nullopt);

/// Largest violation among primal feasibility, stationarity on the support,
/// dual feasibility off the support, and complementarity.
double kkt_residual(const QpInstance& qp, const Vector& a);

/// E||w_t - sum_i a_i w_i||^2 in closed form, including the target term
/// E[sigma_t^2] tr(Sigma_t). Accepts any real `a`.
double expected_distance(const Vector& a, std::span<const NigHead> sources, const NigHead& target);

/// Appends `iteration,a_1,...,a_N`.
void write_weight_row(std::ostream& out, std::size_t iteration, const Vector& a);

}  // namespace bers

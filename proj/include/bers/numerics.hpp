#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "bers/errors.hpp"

namespace bers {

/// Dense row-major matrix. Sizes in this library stay in the hundreds, so
/// there is no sparse path.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// Builds a matrix from row-major entries; rejects non-finite values.
Matrix make_matrix(Index rows, Index cols, std::span<const double> entries);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

/// Lower-triangular factor L of a symmetric positive-definite A = L L^T.
class CholeskyFactor {
public:
    /// Throws NotPositiveDefinite when a pivot falls to 1e-12 or below.
    explicit CholeskyFactor(const Matrix& a);

    static constexpr double pivot_floor = 1e-12;

    const Matrix& lower() const { return lower_; }
    Index dim() const { return lower_.rows(); }

    Vector solve(const Vector& b) const;
    Matrix solve(const Matrix& b) const;
    Matrix inverse() const;
    double log_det() const;
    /// tr(A^{-1}) via solves against the basis vectors.
    double trace_inverse() const;

private:
    Matrix lower_;
};

CholeskyFactor cholesky(const Matrix& a);
double log_det(const Matrix& a);
Vector solve_spd(const Matrix& a, const Vector& b);

}  // namespace bers

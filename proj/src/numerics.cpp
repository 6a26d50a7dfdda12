#include "bers/numerics.hpp"

#include <cmath>
#include <string>

namespace bers {

Matrix make_matrix(Index rows, Index cols, std::span<const double> entries) {
    if (rows <= 0 || cols <= 0) {
        throw DimensionMismatch("matrix dimensions must be positive");
    }
    if (static_cast<Index>(entries.size()) != rows * cols) {
        throw DimensionMismatch("expected " + std::to_string(rows * cols) + " entries, got " +
                                std::to_string(entries.size()));
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows * cols; ++i) {
        if (!std::isfinite(entries[static_cast<std::size_t>(i)])) {
            throw NumericalError("non-finite matrix entry at position " + std::to_string(i));
        }
        m.data()[i] = entries[static_cast<std::size_t>(i)];
    }
    return m;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

namespace {

void check_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionMismatch("cholesky requires a square matrix");
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < i; ++j) {
            if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale) {
                throw NotSymmetric("matrix is not symmetric at (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
            }
        }
    }
}

}  // namespace

CholeskyFactor::CholeskyFactor(const Matrix& a) : lower_(Matrix::Zero(a.rows(), a.cols())) {
    check_symmetric(a);
    const Index n = a.rows();
    // Row-oriented Cholesky-Banachiewicz; reads only the lower triangle.
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (Index k = 0; k < j; ++k) {
                s -= lower_(i, k) * lower_(j, k);
            }
            if (i == j) {
                if (!(s > pivot_floor)) {
                    throw NotPositiveDefinite("pivot " + std::to_string(i) + " is " +
                                              std::to_string(s));
                }
                lower_(i, i) = std::sqrt(s);
            } else {
                lower_(i, j) = s / lower_(j, j);
            }
        }
    }
}

Vector CholeskyFactor::solve(const Vector& b) const {
    if (b.size() != dim()) {
        throw DimensionMismatch("right-hand side has wrong length");
    }
    const auto l = lower_.triangularView<Eigen::Lower>();
    Vector z = l.solve(b);
    return l.transpose().solve(z);
}

Matrix CholeskyFactor::solve(const Matrix& b) const {
    if (b.rows() != dim()) {
        throw DimensionMismatch("right-hand side has wrong row count");
    }
    const auto l = lower_.triangularView<Eigen::Lower>();
    Matrix z = l.solve(b);
    return l.transpose().solve(z);
}

Matrix CholeskyFactor::inverse() const {
    Matrix inv = solve(Matrix(Matrix::Identity(dim(), dim())));
    // Symmetrize away round-off.
    return 0.5 * (inv + inv.transpose());
}

double CholeskyFactor::log_det() const {
    double s = 0.0;
    for (Index k = 0; k < dim(); ++k) {
        s += std::log(lower_(k, k));
    }
    return 2.0 * s;
}

double CholeskyFactor::trace_inverse() const {
    double tr = 0.0;
    Vector e = Vector::Zero(dim());
    for (Index k = 0; k < dim(); ++k) {
        e.setZero();
        e(k) = 1.0;
        tr += solve(e)(k);
    }
    return tr;
}

CholeskyFactor cholesky(const Matrix& a) { return CholeskyFactor(a); }

double log_det(const Matrix& a) { return CholeskyFactor(a).log_det(); }

Vector solve_spd(const Matrix& a, const Vector& b) { return CholeskyFactor(a).solve(b); }

}  // namespace bers

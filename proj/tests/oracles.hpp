#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "bers/numerics.hpp"

namespace oracle {

using bers::Index;
using bers::Matrix;
using bers::Rng;
using bers::Vector;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            m(r, c) = n(rng);
        }
    }
    return m;
}

inline Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        v(i) = d(rng);
    }
    return v;
}

/// B^T B + shift I, computed with plain loops.
inline Matrix random_spd(Index n, Rng& rng, double shift = 1.0) {
    const Matrix b = random_matrix(n, n, rng);
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double s = 0.0;
            for (Index k = 0; k < n; ++k) {
                s += b(k, i) * b(k, j);
            }
            a(i, j) = s + (i == j ? shift : 0.0);
        }
    }
    return a;
}

inline Matrix minor_of(const Matrix& a, Index row, Index col) {
    const Index n = a.rows();
    Matrix m(n - 1, n - 1);
    for (Index i = 0, r = 0; i < n; ++i) {
        if (i == row) {
            continue;
        }
        for (Index j = 0, c = 0; j < n; ++j) {
            if (j == col) {
                continue;
            }
            m(r, c++) = a(i, j);
        }
        ++r;
    }
    return m;
}

/// Laplace expansion along the first row.
inline double cofactor_det(const Matrix& a) {
    const Index n = a.rows();
    if (n == 0) {
        return 1.0;
    }
    if (n == 1) {
        return a(0, 0);
    }
    if (n == 2) {
        return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    }
    double det = 0.0;
    for (Index j = 0; j < n; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        det += sign * a(0, j) * cofactor_det(minor_of(a, 0, j));
    }
    return det;
}

/// adj(A) / det(A).
inline Matrix adjugate_inverse(const Matrix& a) {
    const Index n = a.rows();
    const double det = cofactor_det(a);
    Matrix inv(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            inv(j, i) = sign * cofactor_det(minor_of(a, i, j)) / det;
        }
    }
    return inv;
}

/// log of the 1-D evidence p(y) for y_j ~ N(phi_j w, s2), w | s2 ~ N(mu0, s2 / lambda0),
/// s2 ~ InvGamma(alpha0, beta0), by 2-D Simpson quadrature over (w, log s2).
/// The w window follows the conditional posterior so it stays resolved at small s2.
inline double evidence_quadrature_1d(const std::vector<double>& phi, const std::vector<double>& y,
                                     double mu0, double lambda0, double alpha0, double beta0,
                                     int s_nodes = 2400, int w_nodes = 400) {
    const double log2pi = std::log(2.0 * std::numbers::pi);
    double spp = lambda0;
    double spy = lambda0 * mu0;
    for (std::size_t j = 0; j < phi.size(); ++j) {
        spp += phi[j] * phi[j];
        spy += phi[j] * y[j];
    }
    const double centre = spy / spp;

    auto log_joint = [&](double w, double s2) {
        double lj = 0.0;
        for (std::size_t j = 0; j < phi.size(); ++j) {
            const double r = y[j] - phi[j] * w;
            lj += -0.5 * (log2pi + std::log(s2)) - 0.5 * r * r / s2;
        }
        const double dw = w - mu0;
        lj += -0.5 * (log2pi + std::log(s2 / lambda0)) - 0.5 * lambda0 * dw * dw / s2;
        lj += alpha0 * std::log(beta0) - std::lgamma(alpha0) - (alpha0 + 1.0) * std::log(s2) -
              beta0 / s2;
        return lj;
    };

    auto simpson_weight = [](int k, int last) {
        if (k == 0 || k == last) {
            return 1.0;
        }
        return (k % 2 == 1) ? 4.0 : 2.0;
    };

    const double s_lo = -16.0;
    const double s_hi = 12.0;
    const double hs = (s_hi - s_lo) / s_nodes;
    std::vector<double> inner(static_cast<std::size_t>(s_nodes) + 1);
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= s_nodes; ++i) {
        const double s = s_lo + i * hs;
        const double s2 = std::exp(s);
        const double half = 14.0 * std::sqrt(s2 / spp);
        const double hw = 2.0 * half / w_nodes;
        std::vector<double> lv(static_cast<std::size_t>(w_nodes) + 1);
        double m = -std::numeric_limits<double>::infinity();
        for (int k = 0; k <= w_nodes; ++k) {
            lv[static_cast<std::size_t>(k)] = log_joint(centre - half + k * hw, s2);
            m = std::max(m, lv[static_cast<std::size_t>(k)]);
        }
        double acc = 0.0;
        for (int k = 0; k <= w_nodes; ++k) {
            acc += simpson_weight(k, w_nodes) * std::exp(lv[static_cast<std::size_t>(k)] - m);
        }
        // log of the w integral, plus log of the Jacobian ds2 = s2 ds.
        inner[static_cast<std::size_t>(i)] = m + std::log(acc * hw / 3.0) + s;
        peak = std::max(peak, inner[static_cast<std::size_t>(i)]);
    }
    double total = 0.0;
    for (int i = 0; i <= s_nodes; ++i) {
        total += simpson_weight(i, s_nodes) * std::exp(inner[static_cast<std::size_t>(i)] - peak);
    }
    return peak + std::log(total * hs / 3.0);
}

/// log p(y) through the marginal of y, which is multivariate Student-t with
/// 2 alpha0 degrees of freedom, location Phi mu0 and scale (beta0/alpha0)(I + Phi Lambda0^-1 Phi^T).
/// Determinant and inverse come from the cofactor routines, so keep n small.
inline double student_t_evidence(const Matrix& phi, const Vector& y, const Vector& mu0,
                                 const Matrix& lambda0, double alpha0, double beta0) {
    const Index n = phi.rows();
    const Matrix cov0 = adjugate_inverse(lambda0);
    Matrix scale = phi * cov0 * phi.transpose();
    for (Index i = 0; i < n; ++i) {
        scale(i, i) += 1.0;
    }
    scale *= beta0 / alpha0;
    const double nu = 2.0 * alpha0;
    const Vector delta = y - phi * mu0;
    const double q = delta.dot(adjugate_inverse(scale) * delta);
    const double dn = static_cast<double>(n);
    return std::lgamma(0.5 * (nu + dn)) - std::lgamma(0.5 * nu) -
           0.5 * dn * std::log(nu * std::numbers::pi) - 0.5 * std::log(cofactor_det(scale)) -
           0.5 * (nu + dn) * std::log1p(q / nu);
}

/// min of 1/2 a^T H a - c^T a over a simplex grid with the given step (N = 3).
inline double simplex_grid_min3(const Matrix& h, const Vector& c, double step,
                                Vector* argmin = nullptr) {
    const int n = static_cast<int>(std::lround(1.0 / step));
    double best = std::numeric_limits<double>::infinity();
    Vector a(3);
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; i + j <= n; ++j) {
            a << i * step, j * step, (n - i - j) * step;
            double v = 0.0;
            for (Index r = 0; r < 3; ++r) {
                v -= c(r) * a(r);
                for (Index s = 0; s < 3; ++s) {
                    v += 0.5 * a(r) * h(r, s) * a(s);
                }
            }
            if (v < best) {
                best = v;
                if (argmin != nullptr) {
                    *argmin = a;
                }
            }
        }
    }
    return best;
}

/// Largest KKT violation of a on the simplex for min 1/2 a^T H a - c^T a.
inline double simplex_kkt(const Matrix& h, const Vector& c, const Vector& a, double support = 1e-12) {
    const Vector g = h * a - c;
    double nu = 0.0;
    int count = 0;
    for (Index i = 0; i < a.size(); ++i) {
        if (a(i) > support) {
            nu += g(i);
            ++count;
        }
    }
    nu /= std::max(count, 1);
    double worst = std::abs(a.sum() - 1.0);
    for (Index i = 0; i < a.size(); ++i) {
        worst = std::max(worst, -a(i));
        if (a(i) > support) {
            worst = std::max(worst, std::abs(g(i) - nu));
        } else {
            worst = std::max(worst, nu - g(i));
        }
    }
    return worst;
}

/// Draw from InvGamma(shape, scale).
inline double inv_gamma(double shape, double scale, Rng& rng) {
    std::gamma_distribution<double> g(shape, 1.0 / scale);
    return 1.0 / g(rng);
}

}  // namespace oracle

#include "bers/source_weighting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

namespace bers {

SourceWeights SourceWeights::uniform(std::size_t n) {
    return SourceWeights{Vector::Constant(static_cast<Index>(n), 1.0 / static_cast<double>(n))};
}

SourceWeights SourceWeights::unit(std::size_t n, std::size_t k) {
    SourceWeights w{Vector::Zero(static_cast<Index>(n))};
    w.a(static_cast<Index>(k)) = 1.0;
    return w;
}

bool SourceWeights::on_simplex(double tol) const {
    return a.size() > 0 && a.minCoeff() >= 0.0 && std::abs(a.sum() - 1.0) <= tol;
}

Matrix QpInstance::hessian() const {
    Matrix h = means.transpose() * means;
    h.diagonal() += penalties;
    return 0.5 * (h + h.transpose());
}

Vector QpInstance::linear() const { return means.transpose() * target_mean; }

double QpInstance::objective(const Vector& a) const {
    return -linear().dot(a) + 0.5 * a.dot(hessian() * a);
}

double variance_penalty(const NigHead& head) {
    return head.noise_mean() * cholesky(head.posterior.precision).trace_inverse();
}

QpInstance build_qp(std::span<const NigHead> sources, const NigHead& target) {
    if (sources.empty()) {
        throw DimensionMismatch("the QP needs at least one source head");
    }
    const Index dim = target.dim();
    QpInstance qp;
    qp.means.resize(dim, static_cast<Index>(sources.size()));
    qp.penalties.resize(static_cast<Index>(sources.size()));
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (sources[i].dim() != dim) {
            throw DimensionMismatch("source and target heads differ in dimension");
        }
        qp.means.col(static_cast<Index>(i)) = sources[i].posterior.mean;
        qp.penalties(static_cast<Index>(i)) = variance_penalty(sources[i]);
    }
    qp.target_mean = target.posterior.mean;
    return qp;
}

double kkt_residual(const QpInstance& qp, const Vector& a) {
    const Vector g = qp.hessian() * a - qp.linear();
    constexpr double support_tol = 1e-12;
    double nu = 0.0;
    int support = 0;
    for (Index i = 0; i < a.size(); ++i) {
        if (a(i) > support_tol) {
            nu += g(i);
            ++support;
        }
    }
    double res = std::abs(a.sum() - 1.0);
    if (support == 0) {
        return std::max(res, 1.0);
    }
    nu /= support;
    for (Index i = 0; i < a.size(); ++i) {
        res = std::max(res, -a(i));
        if (a(i) > support_tol) {
            res = std::max(res, std::abs(g(i) - nu));
        } else {
            res = std::max(res, nu - g(i));
        }
        res = std::max(res, std::abs(a(i) * (g(i) - nu)));
    }
    return res;
}

QpSolution solve_qp(const QpInstance& qp, const std::optional<Vector>& warm_start) {
    const Index n = static_cast<Index>(qp.sources());
    if (n == 0) {
        throw DimensionMismatch("empty QP");
    }
    const Matrix h = qp.hessian();
    const Vector c = qp.linear();
    // Positive definiteness of the full Hessian also covers every principal block.
    (void)cholesky(h);

    Vector a = Vector::Constant(n, 1.0 / static_cast<double>(n));
    if (warm_start && warm_start->size() == n && warm_start->allFinite()) {
        Vector w = warm_start->cwiseMax(0.0);
        if (w.sum() > 0.0) {
            a = w / w.sum();
        }
    }
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
        active[static_cast<std::size_t>(i)] = a(i) == 0.0;
    }

    QpSolution sol;
    const int cap = 50 * static_cast<int>(n) + 50;
    for (; sol.iterations < cap; ++sol.iterations) {
        std::vector<Index> free;
        for (Index i = 0; i < n; ++i) {
            if (!active[static_cast<std::size_t>(i)]) {
                free.push_back(i);
            }
        }
        const Index m = static_cast<Index>(free.size());
        Matrix hff(m, m);
        Vector cf(m);
        for (Index r = 0; r < m; ++r) {
            cf(r) = c(free[r]);
            for (Index s = 0; s < m; ++s) {
                hff(r, s) = h(free[r], free[s]);
            }
        }
        // Equality-constrained minimizer on the free set: H a - nu 1 = c, 1^T a = 1.
        const CholeskyFactor chol(hff);
        const Vector u = chol.solve(cf);
        const Vector v = chol.solve(Vector(Vector::Ones(m)));
        const double nu = (1.0 - u.sum()) / v.sum();
        const Vector target = u + nu * v;

        Vector step(m);
        for (Index r = 0; r < m; ++r) {
            step(r) = target(r) - a(free[r]);
        }
        if (step.lpNorm<Eigen::Infinity>() <= 1e-13) {
            for (Index r = 0; r < m; ++r) {
                a(free[r]) = target(r);
            }
            const Vector g = h * a - c;
            double worst = -1e-12 * std::max(1.0, std::abs(nu));
            Index enter = -1;
            for (Index i = 0; i < n; ++i) {
                if (active[static_cast<std::size_t>(i)] && g(i) - nu < worst) {
                    worst = g(i) - nu;
                    enter = i;
                }
            }
            if (enter < 0) {
                break;
            }
            active[static_cast<std::size_t>(enter)] = false;
            continue;
        }
        double t = 1.0;
        Index blocking = -1;
        for (Index r = 0; r < m; ++r) {
            if (step(r) < 0.0) {
                const double ratio = -a(free[r]) / step(r);
                if (ratio < t) {
                    t = ratio;
                    blocking = free[r];
                }
            }
        }
        for (Index r = 0; r < m; ++r) {
            a(free[r]) += t * step(r);
        }
        if (blocking >= 0) {
            a(blocking) = 0.0;
            active[static_cast<std::size_t>(blocking)] = true;
        }
    }
    sol.weights.a = a;
    sol.objective = qp.objective(a);
    sol.kkt_residual = kkt_residual(qp, a);
    return sol;
}

double expected_distance(const Vector& a, std::span<const NigHead> sources, const NigHead& target) {
    if (static_cast<std::size_t>(a.size()) != sources.size()) {
        throw DimensionMismatch("weight vector length differs from source count");
    }
    double value = variance_penalty(target);
    Vector mix = target.posterior.mean;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const double ai = a(static_cast<Index>(i));
        value += ai * ai * variance_penalty(sources[i]);
        mix -= ai * sources[i].posterior.mean;
    }
    return value + mix.squaredNorm();
}

void write_weight_row(std::ostream& out, std::size_t iteration, const Vector& a) {
    out << iteration;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Index i = 0; i < a.size(); ++i) {
        out << ',' << a(i);
    }
    out << '\n';
}

}  // namespace bers

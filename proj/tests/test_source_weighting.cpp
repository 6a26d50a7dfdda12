#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "bers/source_weighting.hpp"
#include "oracles.hpp"

using namespace bers;

namespace {

NigHead random_head(Index dim, Rng& rng, double alpha_lo = 2.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NigHead h = NigHead::from_prior(standard_prior(dim));
    h.posterior.mean = oracle::random_vector(dim, rng);
    h.posterior.precision = oracle::random_spd(dim, rng, 1.0);
    h.posterior.shape = alpha_lo + 4.0 * u(rng);
    h.posterior.scale = 0.5 + 2.0 * u(rng);
    return h;
}

// Hessian and linear term assembled by hand from the heads.
void reference_qp(const std::vector<NigHead>& src, const NigHead& tgt, Matrix& h, Vector& c) {
    const Index n = static_cast<Index>(src.size());
    h.resize(n, n);
    c.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& mi = src[static_cast<std::size_t>(i)].posterior;
        c(i) = tgt.posterior.mean.dot(mi.mean);
        for (Index j = 0; j < n; ++j) {
            h(i, j) = mi.mean.dot(src[static_cast<std::size_t>(j)].posterior.mean);
        }
        h(i, i) += mi.scale / (mi.shape - 1.0) * oracle::adjugate_inverse(mi.precision).trace();
    }
}

}  // namespace

TEST_CASE("variance penalty by hand") {
    NigHead h = NigHead::from_prior(standard_prior(3));
    h.posterior.precision = 2.0 * Matrix::Identity(3, 3);
    h.posterior.shape = 2.0;
    h.posterior.scale = 2.0;
    CHECK(variance_penalty(h) == doctest::Approx(3.0));
    CHECK_THROWS_AS(variance_penalty(NigHead::from_prior(standard_prior(3))), AlphaTooSmall);
    const std::vector<NigHead> bad{NigHead::from_prior(standard_prior(3))};
    CHECK_THROWS_AS(build_qp(bad, h), AlphaTooSmall);
}

TEST_CASE("identical heads get equal penalties and equal weights") {
    Rng rng(1);
    const NigHead h = random_head(4, rng);
    const std::vector<NigHead> src{h, h, h};
    const QpInstance qp = build_qp(src, random_head(4, rng));
    CHECK(qp.penalties(0) == qp.penalties(1));
    CHECK(qp.penalties(1) == qp.penalties(2));
    const QpSolution sol = solve_qp(qp);
    for (Index i = 0; i < 3; ++i) {
        CHECK(sol.weights.a(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    }
    const QpSolution two = solve_qp(build_qp(std::vector<NigHead>{h, h}, random_head(4, rng)));
    CHECK(two.weights.a(0) == doctest::Approx(0.5));
    CHECK(two.weights.a(1) == doctest::Approx(0.5));
}

TEST_CASE("single source gets all the weight") {
    Rng rng(2);
    const QpSolution sol = solve_qp(build_qp(std::vector<NigHead>{random_head(3, rng)},
                                             random_head(3, rng)));
    CHECK(sol.weights.a.size() == 1);
    CHECK(sol.weights.a(0) == 1.0);
}

TEST_CASE("qp pieces match the hand-built quadratic") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<NigHead> src;
        for (int i = 0; i < 3; ++i) {
            src.push_back(random_head(5, rng));
        }
        const NigHead tgt = random_head(5, rng);
        Matrix h;
        Vector c;
        reference_qp(src, tgt, h, c);
        const QpInstance qp = build_qp(src, tgt);
        CHECK((qp.hessian() - h).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((qp.linear() - c).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("solver matches a simplex grid search and satisfies KKT") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<NigHead> src;
        for (int i = 0; i < 3; ++i) {
            src.push_back(random_head(5, rng));
        }
        const NigHead tgt = random_head(5, rng);
        Matrix h;
        Vector c;
        reference_qp(src, tgt, h, c);
        const QpSolution sol = solve_qp(build_qp(src, tgt));
        const double grid = oracle::simplex_grid_min3(h, c, 0.005);
        const double got = 0.5 * sol.weights.a.dot(h * sol.weights.a) - c.dot(sol.weights.a);
        CHECK(got <= grid + 1e-12);
        CHECK(grid - got < 1e-4);
        CHECK(oracle::simplex_kkt(h, c, sol.weights.a) <= 1e-8);
        CHECK(sol.kkt_residual <= 1e-8);
        CHECK(sol.weights.on_simplex(1e-9));
    }
}

TEST_CASE("vertex optimum is found") {
    // One source matches the target exactly and has a tiny penalty.
    Rng rng(5);
    NigHead tgt = random_head(4, rng);
    NigHead exact = tgt;
    exact.posterior.precision = 1e6 * Matrix::Identity(4, 4);
    std::vector<NigHead> src{random_head(4, rng), exact, random_head(4, rng)};
    src[0].posterior.mean = -tgt.posterior.mean;
    src[2].posterior.mean = -tgt.posterior.mean;
    const QpSolution sol = solve_qp(build_qp(src, tgt));
    CHECK(sol.weights.a(1) == doctest::Approx(1.0));
    CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("different starting points reach the same minimizer") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 2 + trial % 5;
        std::vector<NigHead> src;
        for (Index i = 0; i < n; ++i) {
            src.push_back(random_head(4, rng));
        }
        const QpInstance qp = build_qp(src, random_head(4, rng));
        const QpSolution cold = solve_qp(qp);
        for (Index k = 0; k < n; ++k) {
            const QpSolution warm = solve_qp(qp, SourceWeights::unit(static_cast<std::size_t>(n),
                                                                     static_cast<std::size_t>(k)).a);
            CHECK((warm.weights.a - cold.weights.a).cwiseAbs().maxCoeff() < 1e-7);
        }
    }
}

TEST_CASE("dominant penalties drive the weights to inverse-penalty proportions") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<NigHead> src;
        for (int i = 0; i < 4; ++i) {
            NigHead h = random_head(3, rng);
            h.posterior.scale *= 1e6;
            src.push_back(h);
        }
        const QpInstance qp = build_qp(src, random_head(3, rng));
        const QpSolution sol = solve_qp(qp);
        const Vector inv = qp.penalties.cwiseInverse();
        const Vector want = inv / inv.sum();
        CHECK((sol.weights.a - want).cwiseAbs().maxCoeff() < 1e-3);
    }
}

TEST_CASE("expected distance special cases") {
    Rng rng(8);
    const NigHead tgt = random_head(4, rng);
    const double target_term = variance_penalty(tgt);
    std::vector<NigHead> src{random_head(4, rng), random_head(4, rng)};
    CHECK(expected_distance(Vector::Zero(2), src, tgt) ==
          doctest::Approx(target_term + tgt.posterior.mean.squaredNorm()));

    // Perfect match, vanishing penalty.
    src[1].posterior.mean = tgt.posterior.mean;
    src[1].posterior.precision = 1e12 * Matrix::Identity(4, 4);
    CHECK(expected_distance(Vector::Unit(2, 1), src, tgt) ==
          doctest::Approx(target_term).epsilon(1e-9));

    // Means combine exactly: the distance is the target term plus the weighted penalties.
    std::vector<NigHead> pair{random_head(4, rng), random_head(4, rng)};
    NigHead t2 = random_head(4, rng);
    Vector a(2);
    a << 0.3, 0.5;
    t2.posterior.mean = a(0) * pair[0].posterior.mean + a(1) * pair[1].posterior.mean;
    const double want = variance_penalty(t2) + a(0) * a(0) * variance_penalty(pair[0]) +
                        a(1) * a(1) * variance_penalty(pair[1]);
    CHECK(expected_distance(a, pair, t2) == doctest::Approx(want));
    CHECK(expected_distance(a, pair, t2) > variance_penalty(t2));
}

TEST_CASE("expected distance agrees with Monte Carlo") {
    Rng rng(9);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<NigHead> src{random_head(3, rng, 4.0), random_head(3, rng, 4.0)};
        const NigHead tgt = random_head(3, rng, 4.0);
        const Vector a = oracle::random_vector(2, rng);
        const double closed = expected_distance(a, src, tgt);

        std::vector<const NigHead*> all{&tgt, &src[0], &src[1]};
        std::vector<Matrix> chol;
        for (const NigHead* h : all) {
            chol.push_back(Eigen::LLT<Matrix>(oracle::adjugate_inverse(h->posterior.precision))
                               .matrixL());
        }
        const int draws = 40000;
        double sum = 0.0;
        double sum2 = 0.0;
        for (int s = 0; s < draws; ++s) {
            Vector diff = Vector::Zero(3);
            for (std::size_t k = 0; k < all.size(); ++k) {
                const auto& p = all[k]->posterior;
                const double s2 = oracle::inv_gamma(p.shape, p.scale, rng);
                const Vector w = p.mean + std::sqrt(s2) * chol[k] * oracle::random_vector(3, rng);
                diff += (k == 0 ? 1.0 : -a(static_cast<Index>(k) - 1)) * w;
            }
            const double v = diff.squaredNorm();
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / draws;
        const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
        CHECK(std::abs(mean - closed) <= 4.0 * se);
    }
}

TEST_CASE("weight row format and simplex helpers") {
    std::ostringstream out;
    Vector a(2);
    a << 0.25, 0.75;
    write_weight_row(out, 3, a);
    CHECK(out.str().rfind("3,0.25,0.75", 0) == 0);
    CHECK(SourceWeights::uniform(4).on_simplex());
    CHECK(SourceWeights::unit(3, 2).a(2) == 1.0);
    SourceWeights bad{Vector::Constant(2, 0.6)};
    CHECK_FALSE(bad.on_simplex());
}

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "bers/benchmark_functions.hpp"
#include "bers/diffevo.hpp"
#include "oracles.hpp"

using namespace bers;

namespace {

const BenchmarkTask sphere{BenchmarkKind::sphere};

Objective sphere_fn() {
    return [](const Vector& x) { return evaluate_transformed(sphere, x); };
}

}  // namespace

TEST_CASE("config validation") {
    DEConfig cfg;
    cfg.np = 3;
    CHECK_THROWS_AS(cfg.validate(), PopulationTooSmall);
    cfg.np = 4;
    CHECK_NOTHROW(cfg.validate());
    cfg.cr = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("initial population is inside the box with cached fitness") {
    Rng rng(1);
    const Population pop = initialize_population(sphere_fn(), DEConfig{}, rng);
    CHECK(pop.size() == 32);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        CHECK(pop.points[i].minCoeff() >= -4.0);
        CHECK(pop.points[i].maxCoeff() <= 4.0);
        CHECK(pop.fitness[i] == evaluate_transformed(sphere, pop.points[i]));
        CHECK(pop.fitness[pop.best] <= pop.fitness[i]);
    }
}

TEST_CASE("F = 0 and CR = 1 copy the base vector") {
    DEConfig cfg;
    cfg.f = 0.0;
    cfg.cr = 1.0;
    cfg.np = 8;
    Rng rng(2);
    const Population pop = initialize_population(sphere_fn(), cfg, rng);
    std::vector<Vector> trials;
    const EvaluationSink sink = [&](const Vector& x, double) { trials.push_back(x); };
    de_generation(pop, sphere_fn(), cfg, rng, nullptr, sink);
    REQUIRE(trials.size() == pop.size());
    for (std::size_t i = 0; i < trials.size(); ++i) {
        bool is_member = false;
        for (std::size_t j = 0; j < pop.size(); ++j) {
            is_member = is_member || (j != i && trials[i] == pop.points[j]);
        }
        CHECK(is_member);
    }
}

TEST_CASE("CR = 0 changes exactly one coordinate") {
    DEConfig cfg;
    cfg.cr = 0.0;
    Rng rng(3);
    const Population pop = initialize_population(sphere_fn(), cfg, rng);
    std::vector<Vector> trials;
    const EvaluationSink sink = [&](const Vector& x, double) { trials.push_back(x); };
    de_generation(pop, sphere_fn(), cfg, rng, nullptr, sink);
    for (std::size_t i = 0; i < trials.size(); ++i) {
        int changed = 0;
        for (Index k = 0; k < cfg.dimension; ++k) {
            changed += trials[i](k) != pop.points[i](k);
        }
        CHECK(changed == 1);
    }
}

TEST_CASE("injected point with F = 0, CR = 1 becomes the trial") {
    DEConfig cfg;
    cfg.f = 0.0;
    cfg.cr = 1.0;
    Rng rng(4);
    const Population pop = initialize_population(sphere_fn(), cfg, rng);
    Injection inj{Vector::Constant(10, 9.0), [] { return true; }};
    std::vector<Vector> trials;
    const EvaluationSink sink = [&](const Vector& x, double) { trials.push_back(x); };
    de_generation(pop, sphere_fn(), cfg, rng, &inj, sink);
    for (const Vector& t : trials) {
        CHECK((t.array() == 4.0).all());  // clipped
    }
}

TEST_CASE("injection that never fires matches the plain path bit for bit") {
    DEConfig cfg;
    Rng init(5);
    const Population pop = initialize_population(sphere_fn(), cfg, init);
    Rng r1(6);
    Rng r2(6);
    Injection inj{Vector::Zero(10), [] { return false; }};
    const Population a = de_generation(pop, sphere_fn(), cfg, r1);
    const Population b = de_generation(pop, sphere_fn(), cfg, r2, &inj);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.points[i] == b.points[i]);
        CHECK(a.fitness[i] == b.fitness[i]);
    }
    CHECK(r1() == r2());
}

TEST_CASE("generations keep bounds and never lose the best") {
    for (bool in_place : {false, true}) {
        DEConfig cfg;
        cfg.in_place = in_place;
        Rng rng(7);
        Population pop = initialize_population(sphere_fn(), cfg, rng);
        double best = pop.best_fitness();
        for (int g = 0; g < 60; ++g) {
            pop = de_generation(pop, sphere_fn(), cfg, rng);
            CHECK(pop.best_fitness() <= best);
            best = pop.best_fitness();
            for (std::size_t i = 0; i < pop.size(); ++i) {
                CHECK(pop.points[i].cwiseAbs().maxCoeff() <= 4.0);
                CHECK(pop.fitness[i] == evaluate_transformed(sphere, pop.points[i]));
            }
        }
    }
}

TEST_CASE("run_de stop rules and recording") {
    DEConfig cfg;
    {
        Rng rng(8);
        Dataset sink(0, 10);
        const DEResult r = run_de(sphere_fn(), cfg, StopRule{0, 0.15}, rng, &sink);
        CHECK(r.history.size() == 1);
        CHECK(sink.size() == 32);
        CHECK(r.best_value == r.population.best_fitness());
    }
    {
        Rng rng(8);
        const DEResult r =
            run_de(sphere_fn(), cfg, StopRule{400, std::numeric_limits<double>::infinity()}, rng);
        CHECK(r.history.size() == 2);
    }
    {
        Rng rng(9);
        Dataset sink(0, 10);
        const BenchmarkTask rosen{BenchmarkKind::rosenbrock};
        const DEResult r = run_de([&](const Vector& x) { return evaluate_transformed(rosen, x); },
                                  cfg, StopRule{50, 0.15}, rng, &sink);
        CHECK(sink.size() % cfg.np == 0);
        CHECK(sink.size() == cfg.np * r.history.size());
    }
}

TEST_CASE("seeded runs are deterministic") {
    Rng a(10);
    Rng b(10);
    const DEResult ra = run_de(sphere_fn(), DEConfig{}, StopRule{30, 0.0}, a);
    const DEResult rb = run_de(sphere_fn(), DEConfig{}, StopRule{30, 0.0}, b);
    CHECK(ra.best_point == rb.best_point);
    CHECK(ra.best_value == rb.best_value);
}

TEST_CASE("generation csv") {
    std::ostringstream out;
    write_generation_csv(out, {{0, 2.0, 3.0}, {1, 1.0, 2.5}});
    CHECK(out.str() == "generation,best_fitness,mean_fitness\n0,2,3\n1,1,2.5\n");
}

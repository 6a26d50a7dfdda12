#include "bers/diffevo.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace bers {

void DEConfig::validate() const {
    if (np < 4) {
        throw PopulationTooSmall("DE needs NP >= 4, got " + std::to_string(np));
    }
    if (!(cr >= 0.0 && cr <= 1.0)) {
        throw std::invalid_argument("CR must lie in [0, 1]");
    }
    if (!(f >= 0.0 && f <= 2.0)) {
        throw std::invalid_argument("F must lie in [0, 2]");
    }
    if (dimension <= 0 || !(lower < upper)) {
        throw std::invalid_argument("DE needs a positive dimension and lower < upper");
    }
}

double Population::mean_fitness() const {
    return std::accumulate(fitness.begin(), fitness.end(), 0.0) /
           static_cast<double>(fitness.size());
}

void Population::update_best() {
    best = static_cast<std::size_t>(std::min_element(fitness.begin(), fitness.end()) -
                                    fitness.begin());
}

Population initialize_population(const Objective& f, const DEConfig& cfg, Rng& rng,
                                 const EvaluationSink& sink) {
    cfg.validate();
    std::uniform_real_distribution<double> u(cfg.lower, cfg.upper);
    Population pop;
    pop.points.reserve(cfg.np);
    pop.fitness.reserve(cfg.np);
    for (std::size_t k = 0; k < cfg.np; ++k) {
        Vector x(cfg.dimension);
        for (Index i = 0; i < cfg.dimension; ++i) {
            x(i) = u(rng);
        }
        const double fx = f(x);
        if (sink) {
            sink(x, fx);
        }
        pop.points.push_back(std::move(x));
        pop.fitness.push_back(fx);
    }
    pop.update_best();
    return pop;
}

Population de_generation(const Population& pop, const Objective& f, const DEConfig& cfg, Rng& rng,
                         const Injection* inject, const EvaluationSink& sink) {
    cfg.validate();
    if (pop.size() != cfg.np) {
        throw PopulationTooSmall("population size differs from NP");
    }
    std::uniform_int_distribution<std::size_t> pick(0, cfg.np - 1);
    std::uniform_int_distribution<Index> pick_dim(0, cfg.dimension - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Population next = pop;
    // The sequential variant reads and writes the same population.
    const Population& donors = cfg.in_place ? next : pop;

    for (std::size_t k = 0; k < cfg.np; ++k) {
        std::size_t a = 0;
        std::size_t b = 0;
        std::size_t c = 0;
        do { a = pick(rng); } while (a == k);
        do { b = pick(rng); } while (b == k || b == a);
        do { c = pick(rng); } while (c == k || c == a || c == b);

        const Vector& base = (inject != nullptr && inject->coin && inject->coin())
                                 ? inject->point
                                 : donors.points[a];
        const Vector& x = donors.points[k];
        const Index forced = pick_dim(rng);
        Vector y(cfg.dimension);
        for (Index i = 0; i < cfg.dimension; ++i) {
            const double r = unit(rng);
            if (r < cfg.cr || i == forced) {
                y(i) = base(i) + cfg.f * (donors.points[b](i) - donors.points[c](i));
            } else {
                y(i) = x(i);
            }
            y(i) = std::clamp(y(i), cfg.lower, cfg.upper);
        }
        const double fy = f(y);
        if (sink) {
            sink(y, fy);
        }
        if (fy <= donors.fitness[k]) {
            next.points[k] = std::move(y);
            next.fitness[k] = fy;
        }
    }
    next.update_best();
    return next;
}

DEResult run_de(const Objective& f, const DEConfig& cfg, const StopRule& stop, Rng& rng,
                Dataset* demo_sink) {
    EvaluationSink sink;
    if (demo_sink != nullptr) {
        sink = [demo_sink](const Vector& x, double y) { demo_sink->add(Demonstration{x, y}); };
    }
    DEResult result;
    result.population = initialize_population(f, cfg, rng, sink);
    result.history.push_back(
        {0, result.population.best_fitness(), result.population.mean_fitness()});
    for (std::size_t g = 1; g <= stop.max_generations; ++g) {
        result.population = de_generation(result.population, f, cfg, rng, nullptr, sink);
        result.history.push_back(
            {g, result.population.best_fitness(), result.population.mean_fitness()});
        if (result.population.best_fitness() <= stop.target_fitness) {
            break;
        }
    }
    result.best_point = result.population.best_point();
    result.best_value = result.population.best_fitness();
    return result;
}

void write_generation_csv(std::ostream& out, const std::vector<GenerationStats>& history) {
    out << "generation,best_fitness,mean_fitness\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const GenerationStats& g : history) {
        out << g.generation << ',' << g.best << ',' << g.mean << '\n';
    }
}

}  // namespace bers

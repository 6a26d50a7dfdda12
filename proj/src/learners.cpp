#include "bers/learners.hpp"

#include <algorithm>
#include <cmath>

namespace bers {

DeLearner::DeLearner(BenchmarkTask task, DEConfig config)
    : task_(task), config_(config) {
    if (config_.dimension != task_.dimension) {
        throw DimensionMismatch("DE dimension differs from the benchmark dimension");
    }
    config_.validate();
}

void DeLearner::initialize(EpisodeContext& ctx) {
    const auto f = [this](const Vector& x) { return evaluate_transformed(task_, x); };
    const auto sink = [&ctx](const Vector& x, double y) {
        ctx.collect(Demonstration{x, model_target_transform(y)});
    };
    population_ = initialize_population(f, config_, ctx.environment(), sink);
}

const Vector& DeLearner::best_of(const Dataset& ds) {
    auto it = std::find_if(cache_.begin(), cache_.end(),
                           [&](const BestCache& c) { return c.data == &ds; });
    if (it == cache_.end()) {
        cache_.push_back(BestCache{&ds, 0, 0});
        it = std::prev(cache_.end());
    }
    if (it->scanned > ds.size()) {
        *it = BestCache{&ds, 0, 0};
    }
    for (std::size_t i = it->scanned; i < ds.size(); ++i) {
        if (ds[i].y < ds[it->best].y) {
            it->best = i;
        }
    }
    it->scanned = ds.size();
    return ds[it->best].x;
}

void DeLearner::run_episode(EpisodeContext& ctx) {
    if (population_.size() == 0) {
        throw std::logic_error("DE learner used before initialize");
    }
    const auto f = [this](const Vector& x) { return evaluate_transformed(task_, x); };
    const auto sink = [&ctx](const Vector& x, double y) {
        ctx.collect(Demonstration{x, model_target_transform(y)});
    };

    Injection injection;
    const Injection* active = nullptr;
    long source = -1;
    if (ctx.p() > 0.0 && ctx.source_count() > 0) {
        const std::size_t i = ctx.choose_source();
        const Dataset& ds = ctx.source(i);
        if (!ds.empty() && ds.input_dim() == config_.dimension) {
            source = static_cast<long>(i);
            injection.point = best_of(ds);
            injection.coin = [this, &ctx] {
                const bool hit = ctx.reuse_coin();
                injections_ += hit ? 1 : 0;
                return hit;
            };
            active = &injection;
        }
    }
    const double before = population_.best_fitness();
    population_ = de_generation(population_, f, config_, ctx.environment(), active, sink);
    if (source >= 0) {
        ctx.report_improvement(static_cast<std::size_t>(source),
                               before - population_.best_fitness());
    }
}

SupplyCollector::SupplyCollector(supply::ScenarioCosts scenario, supply::EconParams econ,
                                 supply::StochasticPolicy policy, std::size_t batches,
                                 std::size_t batch_size)
    : scenario_(std::move(scenario)), econ_(econ), policy_(std::move(policy)),
      batches_(batches), batch_size_(batch_size) {}

void SupplyCollector::run_episode(EpisodeContext& ctx) {
    Rng& env = ctx.environment();
    supply::SupplyChainState state = supply::random_state(econ_, env);
    double ret = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < econ_.horizon; ++t) {
        const supply::ActionVector a = policy_.sample(env);
        const supply::StepResult r = supply::step(state, a, scenario_, econ_, env);
        ctx.collect(Demonstration{supply::encode_sa(state, a, r.next, econ_), r.reward});
        ret += discount * r.reward;
        discount *= econ_.discount;
        state = r.next;
    }
    last_return_ = ret;

    batch_sources_.resize(ctx.source_count() + 1, 0);
    for (std::size_t b = 0; b < batches_; ++b) {
        long from = -1;
        if (!ctx.sample_batch(batch_size_, &from).empty()) {
            batch_sources_[static_cast<std::size_t>(from + 1)] += 1;
        }
    }
}

}  // namespace bers

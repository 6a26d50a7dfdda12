#include "bers/bers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace bers {

double schedule_p(const ReuseSchedule& schedule, std::size_t m) {
    if (m == 0) {
        throw std::invalid_argument("episode index starts at 1");
    }
    if (!(schedule.value >= 0.0 && schedule.value <= 1.0)) {
        throw std::invalid_argument("schedule parameter must lie in [0, 1]");
    }
    if (schedule.mode == ReuseSchedule::Mode::constant) {
        return schedule.value;
    }
    return std::pow(schedule.value, static_cast<double>(m));
}

std::size_t sample_source(const SourceWeights& a, Rng& rng) {
    if (a.size() == 0) {
        throw EmptyDataset("no source weights to sample from");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng) * a.a.sum();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double w = a.a(static_cast<Index>(i));
        if (w <= 0.0) {
            continue;
        }
        acc += w;
        last = i;
        if (u < acc) {
            return i;
        }
    }
    return last;  // u landed on the rounding gap at the top
}

// ---------------------------------------------------------------------------
// UCB

std::size_t ucb_select(const ArmStats& stats, std::size_t t) {
    if (stats.arms() == 0) {
        throw std::invalid_argument("UCB needs at least one arm");
    }
    for (std::size_t i = 0; i < stats.arms(); ++i) {
        if (stats.pulls[i] == 0) {
            return i;
        }
    }
    const double log_t = std::log(static_cast<double>(std::max<std::size_t>(t, 1)));
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < stats.arms(); ++i) {
        const double n = static_cast<double>(stats.pulls[i]);
        const double score = stats.reward_sum[i] / n + std::sqrt(2.0 * log_t / n);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

UcbSelector::UcbSelector(std::size_t arms, std::size_t window) : stats_(arms), window_(window) {
    if (window_ == 0) {
        throw std::invalid_argument("UCB window must be positive");
    }
}

std::size_t UcbSelector::select() const { return ucb_select(stats_, t_ + 1); }

void UcbSelector::record(std::size_t arm, double improvement) {
    if (arm >= stats_.arms()) {
        throw std::out_of_range("UCB arm out of range");
    }
    recent_.push_back(improvement);
    if (recent_.size() > window_) {
        recent_.erase(recent_.begin());
    }
    const auto [lo, hi] = std::minmax_element(recent_.begin(), recent_.end());
    const double reward = *hi > *lo ? (improvement - *lo) / (*hi - *lo) : 0.0;
    stats_.pulls[arm] += 1;
    stats_.reward_sum[arm] += reward;
    ++t_;
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::bers: return "bers";
        case Strategy::ucb: return "ucb";
        case Strategy::equal: return "equal";
        case Strategy::single: return "single";
        case Strategy::none: return "none";
    }
    return "unknown";
}

std::optional<Strategy> parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::bers, Strategy::ucb, Strategy::equal, Strategy::single,
                       Strategy::none}) {
        if (strategy_name(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

RngStreams::RngStreams(std::uint64_t seed, std::uint64_t salt) {
    auto make = [&](std::uint32_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32),
                          stream};
        return Rng(seq);
    };
    environment = make(1);
    reuse = make(2);
    model = make(3);
}

// ---------------------------------------------------------------------------
// Episode context

EpisodeContext::EpisodeContext(std::size_t episode, double p, Rng& environment, Rng& reuse,
                               std::span<const Dataset* const> sources, Dataset& target)
    : episode_(episode), p_(p), environment_(environment), reuse_(reuse), sources_(sources),
      target_(target) {}

bool EpisodeContext::reuse_coin() {
    if (p_ <= 0.0 || sources_.empty()) {
        return false;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return unit(reuse_) < p_;
}

std::size_t EpisodeContext::choose_source() {
    if (!selector) {
        throw std::logic_error("no source selector configured");
    }
    return selector(reuse_);
}

void EpisodeContext::report_improvement(std::size_t source, double improvement) {
    if (improvement_sink) {
        improvement_sink(source, improvement);
    }
}

const Dataset& EpisodeContext::source(std::size_t i) const {
    if (i >= sources_.size() || sources_[i] == nullptr) {
        throw MissingDataset("source " + std::to_string(i) + " is not available");
    }
    return *sources_[i];
}

void EpisodeContext::collect(Demonstration d) { target_.add(std::move(d)); }

std::vector<Demonstration> EpisodeContext::sample_batch(std::size_t batch_size, long* from_source) {
    const Dataset* ds = &target_;
    long which = -1;
    if (reuse_coin()) {
        const std::size_t i = choose_source();
        if (!source(i).empty()) {
            ds = &source(i);
            which = static_cast<long>(i);
        }
    }
    if (from_source != nullptr) {
        *from_source = which;
    }
    std::vector<Demonstration> out;
    if (ds->empty()) {
        return out;
    }
    std::uniform_int_distribution<std::size_t> pick(0, ds->size() - 1);
    out.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) {
        out.push_back((*ds)[pick(reuse_)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Traces

void RunTrace::write_csv(std::ostream& out) const {
    const Index n = weights.empty() ? 0 : weights.front().size();
    out << "episode,p_m,objective";
    for (Index i = 0; i < n; ++i) {
        out << ",a_" << (i + 1);
    }
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t m = 0; m < objective.size(); ++m) {
        out << (m + 1) << ',' << p[m] << ',' << objective[m];
        if (m < weights.size()) {
            for (Index i = 0; i < weights[m].size(); ++i) {
                out << ',' << weights[m](i);
            }
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Runners

namespace {

QpSolution solve_for(const MultiHeadModel& model, std::span<const std::size_t> source_heads,
                     std::size_t target_head, const std::optional<Vector>& warm) {
    std::vector<NigHead> heads;
    heads.reserve(source_heads.size());
    for (std::size_t h : source_heads) {
        heads.push_back(model.head(h));
    }
    return solve_qp(build_qp(heads, model.head(target_head)), warm);
}

bool wants_snapshot(const BersConfig& config, std::size_t episode) {
    return std::find(config.snapshot_episodes.begin(), config.snapshot_episodes.end(), episode) !=
           config.snapshot_episodes.end();
}

}  // namespace

RunTrace run_bers(std::span<const Dataset> sources, BaseLearner& base, MultiHeadModel& model,
                  const BersConfig& config, std::uint64_t seed, Dataset& target) {
    const std::size_t n = sources.size();
    if (n == 0) {
        throw EmptyDataset("the reuse loop needs at least one source dataset");
    }
    if (model.head_count() != n + 1) {
        throw UnknownHead("model needs one head per source plus the target");
    }
    if (config.strategy == Strategy::single && config.single_source >= n) {
        throw ConfigError("single-source index out of range");
    }

    RngStreams rs(seed);
    RunTrace trace;
    trace.seed = seed;
    target = Dataset(n, base.input_dim());

    std::vector<const Dataset*> all;
    all.reserve(n + 1);
    for (const Dataset& ds : sources) {
        all.push_back(&ds);
    }
    const std::span<const Dataset* const> source_ptrs(all.data(), n);
    all.push_back(&target);

    std::vector<std::size_t> source_heads(n);
    for (std::size_t i = 0; i < n; ++i) {
        source_heads[i] = i;
    }

    const bool uses_model = config.strategy == Strategy::bers;
    if (uses_model && config.pretrain_batches > 0) {
        pretrain(model, sources, config.pretrain_batches, config.batch_size, rs.model);
    }

    SourceWeights weights = config.strategy == Strategy::single
                                ? SourceWeights::unit(n, config.single_source)
                                : SourceWeights::uniform(n);
    UcbSelector ucb(n);

    EpisodeContext init(0, 0.0, rs.environment, rs.reuse, source_ptrs, target);
    base.initialize(init);
    trace.initial_objective = base.objective();

    if (uses_model) {
        recompute_heads(model, all);
        weights = solve_for(model, source_heads, n, std::nullopt).weights;
        ++trace.qp_solves;
    }
    if (wants_snapshot(config, 0)) {
        trace.snapshots.push_back({0, model.heads()});
    }

    for (std::size_t m = 1; m <= config.episodes; ++m) {
        const double p = config.strategy == Strategy::none ? 0.0 : schedule_p(config.schedule, m);
        EpisodeContext ctx(m, p, rs.environment, rs.reuse, source_ptrs, target);
        if (config.strategy == Strategy::ucb) {
            ctx.selector = [&ucb](Rng&) { return ucb.select(); };
            ctx.improvement_sink = [&ucb](std::size_t i, double r) { ucb.record(i, r); };
        } else {
            ctx.selector = [&weights](Rng& rng) { return sample_source(weights, rng); };
        }
        base.run_episode(ctx);

        trace.objective.push_back(base.objective());
        trace.p.push_back(p);
        trace.weights.push_back(weights.a);
        trace.target_size.push_back(target.size());

        if (uses_model) {
            refine(model, all, config.refine_batches, config.batch_size, rs.model);
            weights = solve_for(model, source_heads, n, weights.a).weights;
            ++trace.qp_solves;
        }
        if (wants_snapshot(config, m)) {
            trace.snapshots.push_back({m, model.heads()});
        }
    }
    return trace;
}

RunTrace run_base_alone(BaseLearner& base, std::size_t episodes, std::uint64_t seed,
                        Dataset& target) {
    RngStreams rs(seed);
    RunTrace trace;
    trace.seed = seed;
    target = Dataset(0, base.input_dim());
    const std::span<const Dataset* const> none;

    EpisodeContext init(0, 0.0, rs.environment, rs.reuse, none, target);
    base.initialize(init);
    trace.initial_objective = base.objective();
    for (std::size_t m = 1; m <= episodes; ++m) {
        EpisodeContext ctx(m, 0.0, rs.environment, rs.reuse, none, target);
        base.run_episode(ctx);
        trace.objective.push_back(base.objective());
        trace.p.push_back(0.0);
        trace.weights.emplace_back();
        trace.target_size.push_back(target.size());
    }
    return trace;
}

std::vector<QpSolution> run_weights_only(std::span<const Dataset> sources, const Dataset& target,
                                         MultiHeadModel& model, std::size_t pretrain_batches,
                                         std::size_t rounds, std::size_t refine_batches,
                                         std::size_t batch_size, std::uint64_t seed) {
    const std::size_t n = sources.size();
    if (n == 0) {
        throw EmptyDataset("weights need at least one source dataset");
    }
    if (model.head_count() != n + 1) {
        throw UnknownHead("model needs one head per source plus the target");
    }
    RngStreams rs(seed);
    if (pretrain_batches > 0) {
        pretrain(model, sources, pretrain_batches, batch_size, rs.model);
    }
    std::vector<const Dataset*> all;
    for (const Dataset& ds : sources) {
        all.push_back(&ds);
    }
    all.push_back(&target);
    std::vector<std::size_t> source_heads(n);
    for (std::size_t i = 0; i < n; ++i) {
        source_heads[i] = i;
    }

    std::vector<QpSolution> out;
    recompute_heads(model, all);
    out.push_back(solve_for(model, source_heads, n, std::nullopt));
    for (std::size_t r = 0; r < rounds; ++r) {
        refine(model, all, refine_batches, batch_size, rs.model);
        out.push_back(solve_for(model, source_heads, n, out.back().weights.a));
    }
    return out;
}

std::vector<RunTrace> run_multitask(std::span<BaseLearner* const> learners, MultiHeadModel& model,
                                    const BersConfig& config, std::uint64_t seed,
                                    std::vector<Dataset>& data) {
    const std::size_t n = learners.size();
    if (n < 2) {
        throw ConfigError("multi-task runs need at least two tasks");
    }
    if (model.head_count() != n) {
        throw UnknownHead("model needs one head per task");
    }
    RngStreams shared(seed);
    std::vector<RngStreams> streams;
    std::vector<RunTrace> traces(n);
    data.clear();
    for (std::size_t j = 0; j < n; ++j) {
        streams.emplace_back(seed, j + 1);
        data.emplace_back(j, learners[j]->input_dim());
        traces[j].seed = seed;
    }

    std::vector<const Dataset*> all;
    for (const Dataset& ds : data) {
        all.push_back(&ds);
    }
    // others[j]: every task except j, in task order.
    std::vector<std::vector<std::size_t>> others(n);
    std::vector<std::vector<const Dataset*>> other_data(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
            if (k != j) {
                others[j].push_back(k);
                other_data[j].push_back(&data[k]);
            }
        }
    }

    for (std::size_t j = 0; j < n; ++j) {
        EpisodeContext init(0, 0.0, streams[j].environment, streams[j].reuse, other_data[j],
                            data[j]);
        learners[j]->initialize(init);
        traces[j].initial_objective = learners[j]->objective();
    }

    const bool uses_model = config.strategy == Strategy::bers;
    std::vector<SourceWeights> weights(n, SourceWeights::uniform(n - 1));
    auto solve_all = [&] {
        for (std::size_t j = 0; j < n; ++j) {
            const std::optional<Vector> warm =
                traces[j].qp_solves > 0 ? std::optional<Vector>(weights[j].a) : std::nullopt;
            weights[j] = solve_for(model, others[j], j, warm).weights;
            ++traces[j].qp_solves;
        }
    };
    if (uses_model) {
        recompute_heads(model, all);
        solve_all();
    }

    for (std::size_t m = 1; m <= config.episodes; ++m) {
        const double p = config.strategy == Strategy::none ? 0.0 : schedule_p(config.schedule, m);
        for (std::size_t j = 0; j < n; ++j) {
            EpisodeContext ctx(m, p, streams[j].environment, streams[j].reuse, other_data[j],
                               data[j]);
            const SourceWeights& w = weights[j];
            ctx.selector = [&w](Rng& rng) { return sample_source(w, rng); };
            learners[j]->run_episode(ctx);
            traces[j].objective.push_back(learners[j]->objective());
            traces[j].p.push_back(p);
            traces[j].weights.push_back(weights[j].a);
            traces[j].target_size.push_back(data[j].size());
        }
        if (uses_model) {
            refine(model, all, config.refine_batches, config.batch_size, shared.model);
            solve_all();
        }
    }
    return traces;
}

}  // namespace bers

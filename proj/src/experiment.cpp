#include "bers/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "bers/benchmark_functions.hpp"
#include "bers/learners.hpp"

namespace bers {

namespace fs = std::filesystem;
using nlohmann::json;

std::string profile_name(Profile p) { return p == Profile::paper ? "paper" : "desk"; }

std::optional<Profile> parse_profile(const std::string& name) {
    if (name == "paper") {
        return Profile::paper;
    }
    if (name == "desk") {
        return Profile::desk;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

json model_json(Index h1, Index h2, Index d, std::size_t pretrain, std::size_t refine,
                std::size_t batch, bool refine_sources) {
    return json{{"hidden1", h1},
                {"hidden2", h2},
                {"latent_dim", d},
                {"learning_rate", 1e-4},
                {"l2", 1e-4},
                {"optimizer", "gradient_ascent"},
                {"refine_source_heads", refine_sources},
                {"pretrain_batches", pretrain},
                {"refine_batches", refine},
                {"batch_size", batch}};
}

json schedule_json(const char* mode, double value) {
    return json{{"mode", mode}, {"value", value}};
}

// Rejects keys that the defaults do not know about.
void check_keys(const json& doc, const json& reference, const std::string& where) {
    if (!doc.is_object() || !reference.is_object()) {
        return;
    }
    for (const auto& [key, value] : doc.items()) {
        if (!reference.contains(key)) {
            throw ConfigError("unknown config key '" + where + key + "'");
        }
        check_keys(value, reference.at(key), where + key + ".");
    }
}

ReuseSchedule schedule_from(const json& j) {
    const auto mode = j.at("mode").get<std::string>();
    const double v = j.at("value").get<double>();
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError("schedule value must lie in [0, 1]");
    }
    if (mode == "geometric") {
        return ReuseSchedule::geometric(v);
    }
    if (mode == "constant") {
        return ReuseSchedule::constant(v);
    }
    throw ConfigError("schedule mode must be geometric or constant, got '" + mode + "'");
}

json schedule_to(const ReuseSchedule& s) {
    return schedule_json(s.mode == ReuseSchedule::Mode::geometric ? "geometric" : "constant",
                         s.value);
}

ModelSettings model_from(const json& j) {
    ModelSettings m;
    m.shape.hidden1 = j.at("hidden1").get<Index>();
    m.shape.hidden2 = j.at("hidden2").get<Index>();
    m.shape.latent_dim = j.at("latent_dim").get<Index>();
    m.train.learning_rate = j.at("learning_rate").get<double>();
    m.train.l2 = j.at("l2").get<double>();
    const auto opt = j.at("optimizer").get<std::string>();
    if (opt == "gradient_ascent") {
        m.train.optimizer = OptimizerKind::gradient_ascent;
    } else if (opt == "adam") {
        m.train.optimizer = OptimizerKind::adam;
    } else {
        throw ConfigError("optimizer must be gradient_ascent or adam, got '" + opt + "'");
    }
    m.train.refine_source_heads = j.at("refine_source_heads").get<bool>();
    m.pretrain_batches = j.at("pretrain_batches").get<std::size_t>();
    m.refine_batches = j.at("refine_batches").get<std::size_t>();
    m.batch_size = j.at("batch_size").get<std::size_t>();
    if (m.shape.hidden1 <= 0 || m.shape.hidden2 <= 0 || m.shape.latent_dim <= 0 ||
        m.batch_size == 0 || !(m.train.learning_rate > 0.0) || m.train.l2 < 0.0) {
        throw ConfigError("model sizes, batch size and learning rate must be positive");
    }
    return m;
}

json model_to(const ModelSettings& m) {
    json j = model_json(m.shape.hidden1, m.shape.hidden2, m.shape.latent_dim, m.pretrain_batches,
                        m.refine_batches, m.batch_size, m.train.refine_source_heads);
    j["learning_rate"] = m.train.learning_rate;
    j["l2"] = m.train.l2;
    j["optimizer"] = m.train.optimizer == OptimizerKind::adam ? "adam" : "gradient_ascent";
    return j;
}

void check_benchmark(const std::string& name) {
    if (!parse_benchmark(name)) {
        throw ConfigError("unknown benchmark '" + name + "'");
    }
}

}  // namespace

json default_config_json(Profile profile) {
    const bool paper = profile == Profile::paper;
    json j;
    j["profile"] = profile_name(profile);
    j["seed"] = 1;
    j["trials"] = 0;
    j["jobs"] = 0;
    j["out"] = "runs";
    j["source_dir"] = "";
    j["opt"] = {
        {"model", paper ? model_json(200, 200, 20, 4000, 1, 64, true)
                        : model_json(64, 64, 8, 2000, 20, 256, false)},
        {"sources", {"rosenbrock", "ackley", "sphere"}},
        {"target", "rastrigin"},
        {"strategy", "bers"},
        {"single_source", 0},
        {"schedule", schedule_json("geometric", 0.99)},
        {"generations", 200},
        {"de",
         {{"cr", 0.7},
          {"f", 0.5},
          {"np", 32},
          {"dimension", 10},
          {"lower", -4.0},
          {"upper", 4.0},
          {"in_place", false}}},
        {"source_stop", {{"max_generations", paper ? 100000 : 400}, {"target_fitness", 0.15}}},
        {"multitask", {"rosenbrock", "ackley", "sphere", "rastrigin"}},
        {"multitask_p", 0.3}};
    j["supply"] = {
        {"model", paper ? model_json(300, 200, 20, 4000, 20, 64, true)
                        : model_json(64, 64, 8, 2000, 20, 256, false)},
        {"sources", {"scenario1", "scenario2", "scenario3"}},
        {"target", "target"},
        {"collect_steps", 30000},
        {"subsample", 10000},
        {"horizon", 200},
        {"trim", 0.025},
        {"cheap_bias", 0.0},
        {"schedule", schedule_json("geometric", 0.95)},
        {"episodes", 200},
        {"train_batches", 1},
        {"train_batch_size", 32},
        {"snapshots", {0, 10, 50, 100, 200}}};
    j["weights_only"] = {
        {"model", paper ? model_json(200, 200, 20, 4000, 20, 64, true)
                        : model_json(64, 64, 8, 2000, 20, 256, false)},
        {"sources", json::array()},
        {"target", ""},
        {"transform", "identity"},
        {"rounds", 50}};
    return j;
}

ExperimentConfig make_config(Profile profile, const json& overrides) {
    const json defaults = default_config_json(profile);
    json doc = defaults;
    if (!overrides.is_null()) {
        if (!overrides.is_object()) {
            throw ConfigError("config overrides must be a JSON object");
        }
        check_keys(overrides, defaults, "");
        doc.merge_patch(overrides);
    }

    ExperimentConfig c;
    try {
        c.profile = profile;
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.trials = doc.at("trials").get<std::size_t>();
        c.jobs = doc.at("jobs").get<std::size_t>();
        c.out = doc.at("out").get<std::string>();
        c.source_dir = doc.at("source_dir").get<std::string>();

        const json& o = doc.at("opt");
        c.opt.model = model_from(o.at("model"));
        c.opt.sources = o.at("sources").get<std::vector<std::string>>();
        c.opt.target = o.at("target").get<std::string>();
        const auto strategy = parse_strategy(o.at("strategy").get<std::string>());
        if (!strategy) {
            throw ConfigError("unknown strategy '" + o.at("strategy").get<std::string>() + "'");
        }
        c.opt.strategy = *strategy;
        c.opt.single_source = o.at("single_source").get<std::size_t>();
        c.opt.schedule = schedule_from(o.at("schedule"));
        c.opt.generations = o.at("generations").get<std::size_t>();
        const json& de = o.at("de");
        c.opt.de.cr = de.at("cr").get<double>();
        c.opt.de.f = de.at("f").get<double>();
        c.opt.de.np = de.at("np").get<std::size_t>();
        c.opt.de.dimension = de.at("dimension").get<Index>();
        c.opt.de.lower = de.at("lower").get<double>();
        c.opt.de.upper = de.at("upper").get<double>();
        c.opt.de.in_place = de.at("in_place").get<bool>();
        c.opt.source_stop.max_generations =
            o.at("source_stop").at("max_generations").get<std::size_t>();
        c.opt.source_stop.target_fitness = o.at("source_stop").at("target_fitness").get<double>();
        c.opt.multitask = o.at("multitask").get<std::vector<std::string>>();
        c.opt.multitask_p = o.at("multitask_p").get<double>();

        const json& s = doc.at("supply");
        c.supply.model = model_from(s.at("model"));
        c.supply.sources = s.at("sources").get<std::vector<std::string>>();
        c.supply.target = s.at("target").get<std::string>();
        c.supply.collection.collect_steps = s.at("collect_steps").get<std::size_t>();
        c.supply.collection.subsample = s.at("subsample").get<std::size_t>();
        c.supply.collection.horizon = s.at("horizon").get<std::size_t>();
        c.supply.trim = s.at("trim").get<double>();
        c.supply.cheap_bias = s.at("cheap_bias").get<double>();
        c.supply.schedule = schedule_from(s.at("schedule"));
        c.supply.episodes = s.at("episodes").get<std::size_t>();
        c.supply.train_batches = s.at("train_batches").get<std::size_t>();
        c.supply.train_batch_size = s.at("train_batch_size").get<std::size_t>();
        c.supply.snapshots = s.at("snapshots").get<std::vector<std::size_t>>();

        const json& w = doc.at("weights_only");
        c.weights_only.model = model_from(w.at("model"));
        c.weights_only.sources = w.at("sources").get<std::vector<std::string>>();
        c.weights_only.target = w.at("target").get<std::string>();
        c.weights_only.transform = w.at("transform").get<std::string>();
        c.weights_only.rounds = w.at("rounds").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }

    try {
        c.opt.de.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const PopulationTooSmall& e) {
        throw ConfigError(e.what());
    }
    for (const auto& name : c.opt.sources) {
        check_benchmark(name);
    }
    for (const auto& name : c.opt.multitask) {
        check_benchmark(name);
    }
    check_benchmark(c.opt.target);
    if (c.opt.sources.empty() || c.supply.sources.empty()) {
        throw ConfigError("at least one source is required");
    }
    if (c.opt.strategy == Strategy::single && c.opt.single_source >= c.opt.sources.size()) {
        throw ConfigError("single_source out of range");
    }
    if (!(c.supply.trim >= 0.0 && c.supply.trim < 0.5)) {
        throw ConfigError("supply.trim must lie in [0, 0.5)");
    }
    if (!(c.opt.multitask_p >= 0.0 && c.opt.multitask_p <= 1.0)) {
        throw ConfigError("multitask_p must lie in [0, 1]");
    }
    if (c.weights_only.transform != "identity" && c.weights_only.transform != "log1p") {
        throw ConfigError("weights_only.transform must be identity or log1p");
    }
    return c;
}

ExperimentConfig load_config(const fs::path& path, std::optional<Profile> profile_override) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config root must be an object");
    }
    Profile profile = Profile::desk;
    if (doc.contains("profile")) {
        const auto p = parse_profile(doc.at("profile").get<std::string>());
        if (!p) {
            throw ConfigError("profile must be paper or desk");
        }
        profile = *p;
    }
    if (profile_override) {
        profile = *profile_override;
    }
    doc.erase("profile");
    return make_config(profile, doc);
}

json ExperimentConfig::to_json() const {
    json j;
    j["profile"] = profile_name(profile);
    j["seed"] = seed;
    j["trials"] = trials;
    j["jobs"] = jobs;
    j["out"] = out.string();
    j["source_dir"] = source_dir.string();
    j["opt"] = {{"model", model_to(opt.model)},
                {"sources", opt.sources},
                {"target", opt.target},
                {"strategy", strategy_name(opt.strategy)},
                {"single_source", opt.single_source},
                {"schedule", schedule_to(opt.schedule)},
                {"generations", opt.generations},
                {"de",
                 {{"cr", opt.de.cr},
                  {"f", opt.de.f},
                  {"np", opt.de.np},
                  {"dimension", opt.de.dimension},
                  {"lower", opt.de.lower},
                  {"upper", opt.de.upper},
                  {"in_place", opt.de.in_place}}},
                {"source_stop",
                 {{"max_generations", opt.source_stop.max_generations},
                  {"target_fitness", opt.source_stop.target_fitness}}},
                {"multitask", opt.multitask},
                {"multitask_p", opt.multitask_p}};
    j["supply"] = {{"model", model_to(supply.model)},
                   {"sources", supply.sources},
                   {"target", supply.target},
                   {"collect_steps", supply.collection.collect_steps},
                   {"subsample", supply.collection.subsample},
                   {"horizon", supply.collection.horizon},
                   {"trim", supply.trim},
                   {"cheap_bias", supply.cheap_bias},
                   {"schedule", schedule_to(supply.schedule)},
                   {"episodes", supply.episodes},
                   {"train_batches", supply.train_batches},
                   {"train_batch_size", supply.train_batch_size},
                   {"snapshots", supply.snapshots}};
    j["weights_only"] = {{"model", model_to(weights_only.model)},
                         {"sources", weights_only.sources},
                         {"target", weights_only.target},
                         {"transform", weights_only.transform},
                         {"rounds", weights_only.rounds}};
    return j;
}

fs::path ExperimentConfig::sources_path() const {
    return source_dir.empty() ? out / "sources" : source_dir;
}

std::size_t ExperimentConfig::opt_trials() const {
    if (trials > 0) {
        return trials;
    }
    return profile == Profile::paper ? 20 : 5;
}

std::size_t ExperimentConfig::supply_trials() const { return trials > 0 ? trials : 5; }

// ---------------------------------------------------------------------------
// Hashing and files

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingDataset("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a(ss.str());
}

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    return fnv1a(config.to_json().dump());
}

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IOFailure("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        ensure_dir(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IOFailure("cannot write " + path.string());
    }
    return out;
}

}  // namespace

void write_dataset_csv(const fs::path& path, const Dataset& ds) {
    std::ofstream out = open_out(path);
    for (Index i = 0; i < ds.input_dim(); ++i) {
        out << 'x' << i << ',';
    }
    out << "y,task\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const Demonstration& d : ds) {
        for (Index i = 0; i < d.x.size(); ++i) {
            out << d.x(i) << ',';
        }
        out << d.y << ',' << ds.task_id() << '\n';
    }
    if (!out) {
        throw IOFailure("write failed for " + path.string());
    }
}

Dataset read_dataset_csv(const fs::path& path, std::size_t task_id) {
    std::ifstream in(path);
    if (!in) {
        throw MissingDataset("dataset " + path.string() + " not found");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IOFailure("dataset " + path.string() + " is empty");
    }
    const auto columns = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
    if (columns < 3 || line.rfind("y,task") != line.size() - 6) {
        throw IOFailure("dataset " + path.string() + " has an unexpected header");
    }
    const Index dim = columns - 2;
    Dataset ds(task_id, dim);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(columns));
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t comma = std::min(line.find(',', start), line.size());
            const std::string cell = line.substr(start, comma - start);
            try {
                std::size_t used = 0;
                values.push_back(std::stod(cell, &used));
                if (used != cell.size()) {
                    throw std::invalid_argument(cell);
                }
            } catch (const std::exception&) {
                throw IOFailure("bad number '" + cell + "' in " + path.string() + " row " +
                                std::to_string(row));
            }
            start = comma + 1;
        }
        if (static_cast<Index>(values.size()) != columns) {
            throw IOFailure("row " + std::to_string(row) + " of " + path.string() +
                            " has the wrong column count");
        }
        Demonstration d;
        d.x = Eigen::Map<const Vector>(values.data(), dim);
        d.y = values[static_cast<std::size_t>(dim)];
        ds.add(std::move(d));
    }
    return ds;
}

Dataset with_log1p_targets(const Dataset& ds) {
    Dataset out(ds.task_id(), ds.input_dim());
    out.reserve(ds.size());
    for (const Demonstration& d : ds) {
        out.add(Demonstration{d.x, model_target_transform(d.y)});
    }
    return out;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                    const std::vector<fs::path>& datasets) {
    json j;
    j["command"] = command;
    j["config"] = config.to_json();
    j["config_hash"] = hex64(config_hash(config));
    j["seeds"] = seeds;
    json files = json::array();
    for (const fs::path& p : datasets) {
        files.push_back({{"path", p.string()}, {"fnv1a", hex64(file_hash(p))}});
    }
    j["datasets"] = files;
    std::ofstream out = open_out(dir / "manifest.json");
    out << j.dump(2) << '\n';
}

std::uint64_t trial_seed(const ExperimentConfig& config, std::size_t trial) {
    return config.seed + trial;
}

Aggregate aggregate_objectives(const std::vector<RunTrace>& traces) {
    Aggregate a;
    if (traces.empty()) {
        return a;
    }
    std::size_t len = traces.front().episodes();
    for (const RunTrace& t : traces) {
        len = std::min(len, t.episodes());
    }
    const double n = static_cast<double>(traces.size());
    for (std::size_t m = 0; m < len; ++m) {
        double s = 0.0;
        for (const RunTrace& t : traces) {
            s += t.objective[m];
        }
        const double mean = s / n;
        double ss = 0.0;
        for (const RunTrace& t : traces) {
            ss += (t.objective[m] - mean) * (t.objective[m] - mean);
        }
        const double se = traces.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
        a.mean.push_back(mean);
        a.stderr_.push_back(se);
    }
    return a;
}

void write_aggregate_csv(const fs::path& path, const std::vector<RunTrace>& traces) {
    const Aggregate a = aggregate_objectives(traces);
    std::ofstream out = open_out(path);
    const Index n = traces.empty() || traces.front().weights.empty()
                        ? 0
                        : traces.front().weights.front().size();
    out << "episode,objective_mean,objective_se";
    for (Index i = 0; i < n; ++i) {
        out << ",a_" << (i + 1) << "_mean";
    }
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t m = 0; m < a.mean.size(); ++m) {
        out << (m + 1) << ',' << a.mean[m] << ',' << a.stderr_[m];
        for (Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (const RunTrace& t : traces) {
                s += t.weights[m](i);
            }
            out << ',' << s / static_cast<double>(traces.size());
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Shared pieces

namespace {

// Runs job(k) for k in [0, count) on a small worker pool; rethrows the first failure.
template <class Job>
void run_parallel(std::size_t count, std::size_t jobs, Job job) {
    std::size_t workers = jobs > 0 ? jobs : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < count; k = next++) {
            try {
                job(k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

fs::path trial_dir(const fs::path& root, std::size_t k) {
    return root / ("trial_" + std::to_string(k));
}

BenchmarkTask benchmark_task(const std::string& name, const DEConfig& de) {
    BenchmarkTask t{*parse_benchmark(name)};
    t.dimension = de.dimension;
    t.lower = de.lower;
    t.upper = de.upper;
    return t;
}

std::vector<Dataset> load_opt_sources(const ExperimentConfig& config,
                                      std::vector<fs::path>* paths) {
    std::vector<Dataset> sources;
    for (std::size_t i = 0; i < config.opt.sources.size(); ++i) {
        const fs::path p = config.sources_path() / (config.opt.sources[i] + ".csv");
        sources.push_back(with_log1p_targets(read_dataset_csv(p, i)));
        if (paths != nullptr) {
            paths->push_back(p);
        }
    }
    return sources;
}

json head_json(const NigHead& h) {
    json precision = json::array();
    for (Index r = 0; r < h.posterior.precision.rows(); ++r) {
        std::vector<double> row(h.posterior.precision.row(r).begin(),
                                h.posterior.precision.row(r).end());
        precision.push_back(row);
    }
    return json{{"mean", std::vector<double>(h.posterior.mean.begin(), h.posterior.mean.end())},
                {"precision", precision},
                {"shape", h.posterior.shape},
                {"scale", h.posterior.scale},
                {"observations", h.observations}};
}

}  // namespace

Dataset generate_opt_source(const BenchmarkTask& task, const DEConfig& de, const StopRule& stop,
                            std::uint64_t seed, std::size_t task_id,
                            std::vector<GenerationStats>* history) {
    RngStreams rs(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(task.kind));
    Dataset ds(task_id, task.dimension);
    const DEResult r = run_de([&task](const Vector& x) { return evaluate_transformed(task, x); },
                              de, stop, rs.environment, &ds);
    if (history != nullptr) {
        *history = r.history;
    }
    return ds;
}

std::pair<supply::ScenarioCosts, supply::EconParams> resolve_scenario(const std::string& ref) {
    const auto names = supply::builtin_scenario_names();
    if (std::find(names.begin(), names.end(), ref) != names.end()) {
        return {supply::builtin_scenario(ref), supply::EconParams{}};
    }
    std::ifstream in(ref);
    if (!in) {
        throw ConfigError("scenario '" + ref + "' is neither built in nor a readable file");
    }
    return supply::load_scenario(in);
}

MultiHeadModel make_model(const ModelSettings& settings, Index input_dim, std::size_t heads,
                          std::uint64_t seed) {
    RngStreams rs(seed, 0x30de1ULL);
    EncoderShape shape = settings.shape;
    shape.input_dim = input_dim;
    return MultiHeadModel(Encoder::glorot(shape, rs.model), heads,
                          standard_prior(shape.latent_dim + 1), settings.train);
}

// ---------------------------------------------------------------------------
// Commands

std::vector<fs::path> cmd_gen_source_opt(const ExperimentConfig& config) {
    const fs::path dir = config.sources_path();
    ensure_dir(dir);
    std::vector<fs::path> written(config.opt.sources.size());
    run_parallel(config.opt.sources.size(), config.jobs, [&](std::size_t i) {
        const BenchmarkTask task = benchmark_task(config.opt.sources[i], config.opt.de);
        std::vector<GenerationStats> history;
        const Dataset ds =
            generate_opt_source(task, config.opt.de, config.opt.source_stop, config.seed, i, &history);
        written[i] = dir / (task.name() + ".csv");
        write_dataset_csv(written[i], ds);
        std::ofstream h = open_out(dir / (task.name() + "_generations.csv"));
        write_generation_csv(h, history);
    });
    write_manifest(dir, "gen-source-opt", config, {config.seed}, written);
    return written;
}

std::vector<RunTrace> cmd_transfer_opt(const ExperimentConfig& config) {
    std::vector<fs::path> paths;
    const std::vector<Dataset> sources = load_opt_sources(config, &paths);
    const std::size_t trials = config.opt_trials();
    const fs::path root = config.out / "transfer-opt";
    std::vector<RunTrace> traces(trials);
    std::vector<std::uint64_t> seeds(trials);

    BersConfig bc;
    bc.strategy = config.opt.strategy;
    bc.schedule = config.opt.schedule;
    bc.episodes = config.opt.generations;
    bc.single_source = config.opt.single_source;
    bc.pretrain_batches = config.opt.model.pretrain_batches;
    bc.refine_batches = config.opt.model.refine_batches;
    bc.batch_size = config.opt.model.batch_size;

    run_parallel(trials, config.jobs, [&](std::size_t k) {
        seeds[k] = trial_seed(config, k);
        MultiHeadModel model = make_model(config.opt.model, config.opt.de.dimension,
                                          sources.size() + 1, seeds[k]);
        DeLearner de(benchmark_task(config.opt.target, config.opt.de), config.opt.de);
        Dataset target;
        traces[k] = run_bers(sources, de, model, bc, seeds[k], target);
        std::ofstream out = open_out(trial_dir(root, k) / "trace.csv");
        traces[k].write_csv(out);
    });
    write_aggregate_csv(root / "aggregate.csv", traces);
    write_manifest(root, "transfer-opt", config, seeds, paths);
    return traces;
}

std::vector<std::vector<RunTrace>> cmd_multitask_opt(const ExperimentConfig& config) {
    const std::size_t trials = config.opt_trials();
    const std::size_t n = config.opt.multitask.size();
    const fs::path root = config.out / "multitask-opt";
    std::vector<std::vector<RunTrace>> traces(trials);
    std::vector<std::uint64_t> seeds(trials);

    BersConfig bc;
    bc.strategy = config.opt.strategy == Strategy::none ? Strategy::none : Strategy::bers;
    bc.schedule = ReuseSchedule::constant(config.opt.multitask_p);
    bc.episodes = config.opt.generations;
    bc.refine_batches = config.opt.model.refine_batches;
    bc.batch_size = config.opt.model.batch_size;

    run_parallel(trials, config.jobs, [&](std::size_t k) {
        seeds[k] = trial_seed(config, k);
        std::vector<DeLearner> learners;
        for (const std::string& name : config.opt.multitask) {
            learners.emplace_back(benchmark_task(name, config.opt.de), config.opt.de);
        }
        std::vector<BaseLearner*> ptrs;
        for (DeLearner& l : learners) {
            ptrs.push_back(&l);
        }
        MultiHeadModel model = make_model(config.opt.model, config.opt.de.dimension, n, seeds[k]);
        std::vector<Dataset> data;
        traces[k] = run_multitask(ptrs, model, bc, seeds[k], data);
        for (std::size_t j = 0; j < n; ++j) {
            std::ofstream out =
                open_out(trial_dir(root, k) / (config.opt.multitask[j] + "_trace.csv"));
            traces[k][j].write_csv(out);
        }
    });
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<RunTrace> per_task;
        for (const auto& t : traces) {
            per_task.push_back(t[j]);
        }
        write_aggregate_csv(root / (config.opt.multitask[j] + "_aggregate.csv"), per_task);
    }
    write_manifest(root, "multitask-opt", config, seeds, {});
    return traces;
}

std::vector<fs::path> cmd_gen_source_supply(const ExperimentConfig& config) {
    const fs::path dir = config.sources_path();
    ensure_dir(dir);
    std::vector<fs::path> written(config.supply.sources.size());
    run_parallel(config.supply.sources.size(), config.jobs, [&](std::size_t i) {
        const auto [scenario, econ] = resolve_scenario(config.supply.sources[i]);
        supply::StochasticPolicy policy{config.supply.cheap_bias, scenario};
        RngStreams rs(config.seed, 0x5c0000ULL + i);
        const Dataset ds = supply::generate_demonstrations(scenario, econ, policy,
                                                           config.supply.collection,
                                                           rs.environment, i);
        written[i] = dir / (scenario.name + ".csv");
        write_dataset_csv(written[i], ds);
        std::ofstream s = open_out(dir / (scenario.name + ".scenario.json"));
        supply::save_scenario(s, scenario, econ);
    });
    write_manifest(dir, "gen-source-supply", config, {config.seed}, written);
    return written;
}

std::vector<RunTrace> cmd_transfer_supply(const ExperimentConfig& config) {
    std::vector<fs::path> paths;
    std::vector<Dataset> sources;
    for (std::size_t i = 0; i < config.supply.sources.size(); ++i) {
        const auto scenario = resolve_scenario(config.supply.sources[i]).first;
        const fs::path p = config.sources_path() / (scenario.name + ".csv");
        sources.push_back(supply::trim_outliers(read_dataset_csv(p, i), config.supply.trim).data);
        paths.push_back(p);
    }
    const auto [target_scenario, econ] = resolve_scenario(config.supply.target);
    const std::size_t trials = config.supply_trials();
    const fs::path root = config.out / "transfer-supply";
    std::vector<RunTrace> traces(trials);
    std::vector<std::uint64_t> seeds(trials);

    BersConfig bc;
    bc.strategy = Strategy::bers;
    bc.schedule = config.supply.schedule;
    bc.episodes = config.supply.episodes;
    bc.pretrain_batches = config.supply.model.pretrain_batches;
    bc.refine_batches = config.supply.model.refine_batches;
    bc.batch_size = config.supply.model.batch_size;
    bc.snapshot_episodes = config.supply.snapshots;

    run_parallel(trials, config.jobs, [&](std::size_t k) {
        seeds[k] = trial_seed(config, k);
        supply::EconParams e = econ;
        e.horizon = config.supply.collection.horizon;
        SupplyCollector collector(target_scenario, e,
                                  supply::StochasticPolicy{config.supply.cheap_bias, std::nullopt},
                                  config.supply.train_batches, config.supply.train_batch_size);
        MultiHeadModel model = make_model(config.supply.model,
                                          static_cast<Index>(supply::encoded_dim),
                                          sources.size() + 1, seeds[k]);
        Dataset target;
        traces[k] = run_bers(sources, collector, model, bc, seeds[k], target);
        const fs::path dir = trial_dir(root, k);
        std::ofstream out = open_out(dir / "trace.csv");
        traces[k].write_csv(out);
        json snaps = json::array();
        for (const HeadSnapshot& s : traces[k].snapshots) {
            json heads = json::array();
            for (const NigHead& h : s.heads) {
                heads.push_back(head_json(h));
            }
            snaps.push_back({{"episode", s.episode}, {"heads", heads}});
        }
        std::ofstream sj = open_out(dir / "snapshots.json");
        sj << snaps.dump(1) << '\n';
        std::ofstream bs = open_out(dir / "batch_sources.csv");
        bs << "target";
        for (std::size_t i = 0; i < sources.size(); ++i) {
            bs << ",source_" << (i + 1);
        }
        bs << '\n';
        const auto& counts = collector.batch_sources();
        for (std::size_t i = 0; i < counts.size(); ++i) {
            bs << (i ? "," : "") << counts[i];
        }
        bs << '\n';
    });
    write_aggregate_csv(root / "aggregate.csv", traces);
    write_manifest(root, "transfer-supply", config, seeds, paths);
    return traces;
}

std::vector<std::vector<QpSolution>> cmd_weights_only(const ExperimentConfig& config) {
    const WeightsOnlySettings& w = config.weights_only;
    if (w.sources.empty() || w.target.empty()) {
        throw ConfigError("weights_only needs source and target dataset paths");
    }
    auto load = [&](const std::string& p, std::size_t id) {
        Dataset ds = read_dataset_csv(p, id);
        return w.transform == "log1p" ? with_log1p_targets(ds) : ds;
    };
    std::vector<Dataset> sources;
    std::vector<fs::path> paths;
    for (std::size_t i = 0; i < w.sources.size(); ++i) {
        sources.push_back(load(w.sources[i], i));
        paths.emplace_back(w.sources[i]);
    }
    const Dataset target = load(w.target, sources.size());
    paths.emplace_back(w.target);
    for (const Dataset& ds : sources) {
        if (ds.input_dim() != target.input_dim()) {
            throw ConfigError("weights_only datasets have different input widths");
        }
    }

    const std::size_t trials = config.supply_trials();
    const fs::path root = config.out / "weights-only";
    std::vector<std::vector<QpSolution>> out(trials);
    std::vector<std::uint64_t> seeds(trials);
    run_parallel(trials, config.jobs, [&](std::size_t k) {
        seeds[k] = trial_seed(config, k);
        MultiHeadModel model =
            make_model(w.model, target.input_dim(), sources.size() + 1, seeds[k]);
        out[k] = run_weights_only(sources, target, model, w.model.pretrain_batches, w.rounds,
                                  w.model.refine_batches, w.model.batch_size, seeds[k]);
        std::ofstream f = open_out(trial_dir(root, k) / "weights.csv");
        f << "round";
        for (std::size_t i = 0; i < sources.size(); ++i) {
            f << ",a_" << (i + 1);
        }
        f << '\n';
        for (std::size_t r = 0; r < out[k].size(); ++r) {
            write_weight_row(f, r, out[k][r].weights.a);
        }
    });
    write_manifest(root, "weights-only", config, seeds, paths);
    return out;
}

}  // namespace bers

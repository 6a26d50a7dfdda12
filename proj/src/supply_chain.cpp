#include "bers/supply_chain.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace bers::supply {

std::string node_name(std::size_t node) {
    if (node == 0) {
        return "factory";
    }
    if (node <= warehouse_count) {
        return std::string(1, static_cast<char>('A' + node - 1));
    }
    throw std::out_of_range("node index out of range");
}

std::optional<std::size_t> parse_node(const std::string& name) {
    for (std::size_t n = 0; n < node_count; ++n) {
        if (node_name(n) == name) {
            return n;
        }
    }
    return std::nullopt;
}

int SupplyChainState::total() const { return std::accumulate(stock.begin(), stock.end(), 0); }

// ---------------------------------------------------------------------------
// Actions

namespace {

constexpr std::size_t factory_offset = 1;
constexpr std::size_t warehouse_offset = factory_offset + node_count;

}  // namespace

ActionVector::ActionVector(Vector values) : values_(std::move(values)) {
    if (values_.size() != static_cast<Index>(action_dim)) {
        throw DimensionMismatch("action vector needs " + std::to_string(action_dim) + " entries");
    }
}

ActionVector ActionVector::hold() {
    ActionVector a;
    a.factory_share(0) = 1.0;
    for (std::size_t w = 0; w < warehouse_count; ++w) {
        a.warehouse_share(w, w) = 1.0;
    }
    return a;
}

double ActionVector::factory_share(std::size_t dest) const {
    return values_(static_cast<Index>(factory_offset + dest));
}

double& ActionVector::factory_share(std::size_t dest) {
    return values_(static_cast<Index>(factory_offset + dest));
}

double ActionVector::warehouse_share(std::size_t from, std::size_t to) const {
    return values_(static_cast<Index>(warehouse_offset + from * warehouse_count + to));
}

double& ActionVector::warehouse_share(std::size_t from, std::size_t to) {
    return values_(static_cast<Index>(warehouse_offset + from * warehouse_count + to));
}

void ActionVector::validate(double tol) const {
    if (!values_.allFinite()) {
        throw InvalidAction("action contains non-finite entries");
    }
    if (values_.minCoeff() < -tol) {
        throw InvalidAction("action contains negative entries");
    }
    if (production() > 1.0 + tol) {
        throw InvalidAction("production fraction exceeds 1");
    }
    double s = 0.0;
    for (std::size_t d = 0; d < node_count; ++d) {
        s += factory_share(d);
    }
    if (std::abs(s - 1.0) > tol) {
        throw InvalidAction("factory shipping shares sum to " + std::to_string(s));
    }
    for (std::size_t w = 0; w < warehouse_count; ++w) {
        s = 0.0;
        for (std::size_t v = 0; v < warehouse_count; ++v) {
            s += warehouse_share(w, v);
        }
        if (std::abs(s - 1.0) > tol) {
            throw InvalidAction("warehouse " + node_name(w + 1) + " shares sum to " +
                                std::to_string(s));
        }
    }
}

// ---------------------------------------------------------------------------
// Scenarios

void ScenarioCosts::validate() const {
    for (std::size_t from = 0; from < node_count; ++from) {
        for (std::size_t to = 1; to < node_count; ++to) {
            if (from == to) {
                continue;
            }
            const double c = tier[from][to];
            if (c != cheap_tier && c != mid_tier && c != high_tier) {
                throw ConfigError("route " + node_name(from) + "->" + node_name(to) +
                                  " has cost " + std::to_string(c) + ", not a known tier");
            }
        }
    }
}

std::vector<std::pair<std::size_t, std::size_t>> ScenarioCosts::cheap_routes() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t from = 0; from < node_count; ++from) {
        for (std::size_t to = 1; to < node_count; ++to) {
            if (from != to && tier[from][to] == cheap_tier) {
                out.emplace_back(from, to);
            }
        }
    }
    return out;
}

namespace {

using Route = std::pair<const char*, const char*>;

ScenarioCosts layout(std::string name, std::initializer_list<Route> cheap) {
    ScenarioCosts s;
    s.name = std::move(name);
    for (std::size_t from = 0; from < node_count; ++from) {
        for (std::size_t to = 1; to < node_count; ++to) {
            if (from != to) {
                s.tier[from][to] = from == 0 ? mid_tier : high_tier;
            }
        }
    }
    for (const auto& [from, to] : cheap) {
        s.tier[*parse_node(from)][*parse_node(to)] = cheap_tier;
    }
    return s;
}

}  // namespace

ScenarioCosts builtin_scenario(const std::string& name) {
    // Each source routes its cheap paths through a different pair of hub warehouses;
    // the target mixes half of scenario 1 with half of scenario 2.
    if (name == "scenario1") {
        return layout(name, {{"factory", "A"}, {"factory", "B"}, {"A", "C"},
                             {"A", "D"}, {"B", "E"}, {"B", "F"}});
    }
    if (name == "scenario2") {
        return layout(name, {{"factory", "C"}, {"factory", "D"}, {"C", "A"},
                             {"C", "E"}, {"D", "B"}, {"D", "F"}});
    }
    if (name == "scenario3") {
        return layout(name, {{"factory", "E"}, {"factory", "F"}, {"E", "A"},
                             {"E", "C"}, {"F", "B"}, {"F", "D"}});
    }
    if (name == "target") {
        return layout(name, {{"factory", "A"}, {"factory", "B"}, {"A", "C"},
                             {"C", "E"}, {"D", "B"}, {"D", "F"}});
    }
    throw ConfigError("unknown built-in scenario '" + name + "'");
}

std::vector<std::string> builtin_scenario_names() {
    return {"scenario1", "scenario2", "scenario3", "target"};
}

void save_scenario(std::ostream& out, const ScenarioCosts& scenario, const EconParams& econ) {
    nlohmann::ordered_json j;
    j["name"] = scenario.name;
    nlohmann::ordered_json routes = nlohmann::ordered_json::object();
    for (std::size_t from = 0; from < node_count; ++from) {
        for (std::size_t to = 1; to < node_count; ++to) {
            if (from != to) {
                routes[node_name(from) + "->" + node_name(to)] = scenario.tier[from][to];
            }
        }
    }
    j["routes"] = routes;
    j["econ"] = {{"demand_means", econ.demand_means},
                 {"price", econ.price},
                 {"production_cost", econ.production_cost},
                 {"storage_cost", econ.storage_cost},
                 {"truck_capacity", econ.truck_capacity},
                 {"max_production", econ.max_production},
                 {"capacity", econ.capacity},
                 {"horizon", econ.horizon},
                 {"discount", econ.discount},
                 {"charge_factory_storage", econ.charge_factory_storage}};
    out << j.dump(2) << '\n';
}

std::pair<ScenarioCosts, EconParams> load_scenario(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario file: ") + e.what());
    }
    ScenarioCosts s;
    EconParams econ;
    try {
        s.name = j.value("name", "scenario");
        for (const auto& [key, cost] : j.at("routes").items()) {
            const auto arrow = key.find("->");
            if (arrow == std::string::npos) {
                throw ConfigError("route key '" + key + "' is not of the form from->to");
            }
            const auto from = parse_node(key.substr(0, arrow));
            const auto to = parse_node(key.substr(arrow + 2));
            if (!from || !to || *to == 0 || *from == *to) {
                throw ConfigError("route key '" + key + "' names an invalid route");
            }
            s.tier[*from][*to] = cost.get<double>();
        }
        if (j.contains("econ")) {
            const auto& e = j.at("econ");
            econ.demand_means = e.value("demand_means", econ.demand_means);
            econ.price = e.value("price", econ.price);
            econ.production_cost = e.value("production_cost", econ.production_cost);
            econ.storage_cost = e.value("storage_cost", econ.storage_cost);
            econ.truck_capacity = e.value("truck_capacity", econ.truck_capacity);
            econ.max_production = e.value("max_production", econ.max_production);
            econ.capacity = e.value("capacity", econ.capacity);
            econ.horizon = e.value("horizon", econ.horizon);
            econ.discount = e.value("discount", econ.discount);
            econ.charge_factory_storage =
                e.value("charge_factory_storage", econ.charge_factory_storage);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid scenario file: ") + e.what());
    }
    s.validate();
    return {s, econ};
}

// ---------------------------------------------------------------------------
// Dynamics

StepResult step(const SupplyChainState& state, const ActionVector& action,
                const ScenarioCosts& scenario, const EconParams& econ, Rng& rng) {
    action.validate();
    StepResult out;
    StepInfo& info = out.info;
    std::array<int, node_count> stock = state.stock;
    for (int s : stock) {
        if (s < 0 || s > econ.capacity) {
            throw InvalidAction("state stock outside [0, capacity]");
        }
    }

    // (1) production into the factory
    info.produced = static_cast<int>(std::floor(action.production() * econ.max_production));
    info.produced = std::clamp(info.produced, 0, econ.max_production);
    info.production_cost = econ.production_cost * info.produced;
    stock[0] += info.produced;
    if (stock[0] > econ.capacity) {
        info.overflow += stock[0] - econ.capacity;
        stock[0] = econ.capacity;
    }

    // (2) shipments, all computed from the post-production stocks
    const std::array<int, node_count> available = stock;
    std::array<int, node_count> arrivals{};
    auto ship = [&](std::size_t from, std::size_t to, double share) {
        const int units = static_cast<int>(std::floor(share * available[from]));
        if (units <= 0) {
            return;
        }
        stock[from] -= units;
        arrivals[to] += units;
        const int trucks = (units + econ.truck_capacity - 1) / econ.truck_capacity;
        info.trucks += trucks;
        info.transport_cost += trucks * scenario.route_cost(from, to);
    };
    for (std::size_t w = 0; w < warehouse_count; ++w) {
        ship(0, w + 1, action.factory_share(w + 1));
    }
    for (std::size_t w = 0; w < warehouse_count; ++w) {
        for (std::size_t v = 0; v < warehouse_count; ++v) {
            if (v != w) {
                ship(w + 1, v + 1, action.warehouse_share(w, v));
            }
        }
    }

    // (3) arrivals with capacity clipping
    for (std::size_t n = 0; n < node_count; ++n) {
        stock[n] += arrivals[n];
        if (stock[n] > econ.capacity) {
            info.overflow += stock[n] - econ.capacity;
            stock[n] = econ.capacity;
        }
    }

    // (4) demand, lost when short
    for (std::size_t w = 0; w < warehouse_count; ++w) {
        std::poisson_distribution<int> demand(econ.demand_means[w]);
        info.demand[w] = demand(rng);
        const int sold = std::min(info.demand[w], stock[w + 1]);
        stock[w + 1] -= sold;
        info.sold += sold;
    }
    info.revenue = econ.price * info.sold;

    // (5) storage on closing stock
    int stored = 0;
    for (std::size_t n = econ.charge_factory_storage ? 0 : 1; n < node_count; ++n) {
        stored += stock[n];
    }
    info.storage_cost = econ.storage_cost * stored;

    out.next.stock = stock;
    out.reward = info.revenue - info.production_cost - info.storage_cost - info.transport_cost;
    return out;
}

Vector encode_sa(const SupplyChainState& state, const ActionVector& action,
                 const SupplyChainState& next, const EconParams& econ) {
    if (action.values().size() != static_cast<Index>(action_dim)) {
        throw DimensionMismatch("action has the wrong width");
    }
    Vector x(static_cast<Index>(encoded_dim));
    const double cap = static_cast<double>(econ.capacity);
    for (std::size_t n = 0; n < node_count; ++n) {
        x(static_cast<Index>(n)) = state.stock[n] / cap;
        x(static_cast<Index>(node_count + action_dim + n)) = next.stock[n] / cap;
    }
    x.segment(static_cast<Index>(node_count), static_cast<Index>(action_dim)) = action.values();
    return x;
}

// ---------------------------------------------------------------------------
// Data collection

ActionVector StochasticPolicy::sample(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    const double boost = 1.0 + cheap_bias;
    auto weight = [&](std::size_t from, std::size_t to) {
        return (preferred && from != to && preferred->tier[from][to] == cheap_tier) ? boost : 1.0;
    };

    ActionVector a;
    a.production() = unit(rng);
    double s = 0.0;
    for (std::size_t d = 0; d < node_count; ++d) {
        a.factory_share(d) = expo(rng) * (d == 0 ? 1.0 : weight(0, d));
        s += a.factory_share(d);
    }
    for (std::size_t d = 0; d < node_count; ++d) {
        a.factory_share(d) /= s;
    }
    for (std::size_t w = 0; w < warehouse_count; ++w) {
        s = 0.0;
        for (std::size_t v = 0; v < warehouse_count; ++v) {
            a.warehouse_share(w, v) = expo(rng) * weight(w + 1, v + 1);
            s += a.warehouse_share(w, v);
        }
        for (std::size_t v = 0; v < warehouse_count; ++v) {
            a.warehouse_share(w, v) /= s;
        }
    }
    return a;
}

SupplyChainState random_state(const EconParams& econ, Rng& rng) {
    std::uniform_int_distribution<int> level(0, econ.capacity);
    SupplyChainState s;
    for (int& v : s.stock) {
        v = level(rng);
    }
    return s;
}

Dataset generate_demonstrations(const ScenarioCosts& scenario, const EconParams& econ,
                                const StochasticPolicy& policy, const CollectionConfig& cfg,
                                Rng& rng, std::size_t task_id) {
    if (cfg.collect_steps == 0 || cfg.horizon == 0) {
        throw std::invalid_argument("collection needs at least one step and a positive horizon");
    }
    std::vector<Demonstration> rows;
    rows.reserve(cfg.collect_steps);
    SupplyChainState state = random_state(econ, rng);
    for (std::size_t t = 0; t < cfg.collect_steps; ++t) {
        if (t > 0 && t % cfg.horizon == 0) {
            state = random_state(econ, rng);
        }
        const ActionVector a = policy.sample(rng);
        const StepResult r = step(state, a, scenario, econ, rng);
        rows.push_back(Demonstration{encode_sa(state, a, r.next, econ), r.reward});
        state = r.next;
    }
    if (cfg.subsample > 0 && cfg.subsample < rows.size()) {
        std::vector<std::size_t> idx(rows.size());
        std::iota(idx.begin(), idx.end(), 0);
        // Partial Fisher-Yates, then restore collection order.
        for (std::size_t k = 0; k < cfg.subsample; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
            std::swap(idx[k], idx[pick(rng)]);
        }
        idx.resize(cfg.subsample);
        std::sort(idx.begin(), idx.end());
        std::vector<Demonstration> kept;
        kept.reserve(idx.size());
        for (std::size_t i : idx) {
            kept.push_back(std::move(rows[i]));
        }
        rows = std::move(kept);
    }
    Dataset ds(task_id, static_cast<Index>(encoded_dim));
    ds.reserve(rows.size());
    for (Demonstration& d : rows) {
        ds.add(std::move(d));
    }
    return ds;
}

TrimResult trim_outliers(const Dataset& ds, double frac) {
    if (!(frac >= 0.0 && frac < 0.5)) {
        throw std::invalid_argument("trim fraction must lie in [0, 0.5)");
    }
    const std::size_t n = ds.size();
    const auto cut = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds[a].y < ds[b].y; });
    std::vector<bool> keep(n, true);
    for (std::size_t k = 0; k < cut; ++k) {
        keep[order[k]] = false;
        keep[order[n - 1 - k]] = false;
    }
    TrimResult out;
    out.data = Dataset(ds.task_id(), ds.input_dim());
    out.lower = std::numeric_limits<double>::infinity();
    out.upper = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) {
            out.data.add(ds[i]);
            out.lower = std::min(out.lower, ds[i].y);
            out.upper = std::max(out.upper, ds[i].y);
        }
    }
    return out;
}

void write_episode_csv(std::ostream& out, const std::vector<SupplyChainState>& states,
                       const std::vector<double>& rewards) {
    out << "step,reward";
    for (std::size_t n = 0; n < node_count; ++n) {
        out << ",stock_" << node_name(n);
    }
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t t = 0; t < rewards.size() && t < states.size(); ++t) {
        out << t << ',' << rewards[t];
        for (int s : states[t].stock) {
            out << ',' << s;
        }
        out << '\n';
    }
}

}  // namespace bers::supply

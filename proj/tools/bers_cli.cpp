#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "bers/errors.hpp"
#include "bers/experiment.hpp"

namespace {

using nlohmann::json;

constexpr int exit_config = 2;
constexpr int exit_missing = 3;
constexpr int exit_numerical = 4;

struct Flags {
    std::string config;
    std::string profile;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::size_t> jobs;
    std::vector<std::string> sets;
};

// "opt.target=sphere" -> {"opt": {"target": "sphere"}}. The value is read as
// JSON when it parses, otherwise as a plain string.
json setting_patch(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw bers::ConfigError("--set expects key=value, got '" + assignment + "'");
    }
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json patch = json::object();
    json* node = &patch;
    std::string path = assignment.substr(0, eq);
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
    return patch;
}

bers::ExperimentConfig resolve(const Flags& f) {
    json doc = json::object();
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) {
            throw bers::ConfigError("cannot open config file " + f.config);
        }
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw bers::ConfigError("config file " + f.config + " is not a JSON object");
        }
    }
    std::string profile = doc.value("profile", std::string("desk"));
    if (!f.profile.empty()) {
        profile = f.profile;
    }
    const auto p = bers::parse_profile(profile);
    if (!p) {
        throw bers::ConfigError("profile must be paper or desk, got '" + profile + "'");
    }
    doc.erase("profile");
    for (const std::string& s : f.sets) {
        doc.merge_patch(setting_patch(s));
    }
    if (f.seed) {
        doc["seed"] = *f.seed;
    }
    if (f.trials) {
        doc["trials"] = *f.trials;
    }
    if (f.jobs) {
        doc["jobs"] = *f.jobs;
    }
    if (!f.out.empty()) {
        doc["out"] = f.out;
    }
    return bers::make_config(*p, doc);
}

void report_traces(const std::vector<bers::RunTrace>& traces) {
    const bers::Aggregate a = bers::aggregate_objectives(traces);
    if (!a.mean.empty()) {
        std::cout << "final objective " << a.mean.back() << " +- " << a.stderr_.back() << " over "
                  << traces.size() << " trials\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian experience reuse experiments"};
    app.require_subcommand(1);
    Flags flags;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"gen-source-opt", "Generate benchmark source demonstrations with DE"},
        {"transfer-opt", "Reuse source demonstrations on a target benchmark"},
        {"multitask-opt", "Solve several benchmarks at once, sharing best solutions"},
        {"gen-source-supply", "Generate supply-chain source demonstrations"},
        {"transfer-supply", "Reuse source demonstrations on the target supply chain"},
        {"weights-only", "Learn source weights from fixed datasets"},
        {"print-config", "Print the effective configuration"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--profile", flags.profile, "paper or desk")
            ->check(CLI::IsMember({"paper", "desk"}));
        sub->add_option("--seed", flags.seed, "Base seed (trial k uses seed + k)");
        sub->add_option("--trials", flags.trials, "Number of trials");
        sub->add_option("--jobs", flags.jobs, "Concurrent trials (0 = hardware threads)");
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_option("--set", flags.sets, "Override a config key, e.g. opt.target=sphere");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        const bers::ExperimentConfig config = resolve(flags);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "print-config") {
            std::cout << config.to_json().dump(2) << '\n';
            return 0;
        }
        if (cmd == "gen-source-opt") {
            for (const auto& p : bers::cmd_gen_source_opt(config)) {
                std::cout << "wrote " << p.string() << '\n';
            }
        } else if (cmd == "transfer-opt") {
            report_traces(bers::cmd_transfer_opt(config));
        } else if (cmd == "multitask-opt") {
            const auto traces = bers::cmd_multitask_opt(config);
            for (std::size_t j = 0; j < config.opt.multitask.size(); ++j) {
                std::vector<bers::RunTrace> per_task;
                for (const auto& t : traces) {
                    per_task.push_back(t[j]);
                }
                std::cout << config.opt.multitask[j] << ": ";
                report_traces(per_task);
            }
        } else if (cmd == "gen-source-supply") {
            for (const auto& p : bers::cmd_gen_source_supply(config)) {
                std::cout << "wrote " << p.string() << '\n';
            }
        } else if (cmd == "transfer-supply") {
            report_traces(bers::cmd_transfer_supply(config));
        } else if (cmd == "weights-only") {
            const auto runs = bers::cmd_weights_only(config);
            for (std::size_t k = 0; k < runs.size(); ++k) {
                std::cout << "trial " << k << " final weights "
                          << runs[k].back().weights.a.transpose() << '\n';
            }
        }
        std::cout << "output in " << config.out.string() << '\n';
    } catch (const bers::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const bers::MissingDataset& e) {
        std::cerr << "missing data: " << e.what() << '\n';
        return exit_missing;
    } catch (const bers::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include "lpnrl/experiments.hpp"

using namespace lpnrl;

namespace {

constexpr int kUsageError = 2;
constexpr int kRunError = 1;

struct Leaf {
    const Experiment* experiment = nullptr;
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
};

std::string default_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string type_name(const json& v) {
    if (v.is_boolean()) return "BOOL";
    if (v.is_number_integer()) return "UINT";
    if (v.is_number()) return "FLOAT";
    return "TEXT";
}

// Parses a command-line string into the JSON type of the default.
json convert(const std::string& key, const std::string& text, const json& like) {
    auto bad = [&] { return std::invalid_argument("--" + key + ": cannot parse '" + text + "'"); };
    if (like.is_string()) return text;
    if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw bad();
    }
    std::size_t used = 0;
    try {
        if (like.is_number_integer()) {
            if (!text.empty() && text[0] == '-') throw bad();
            const auto v = std::stoull(text, &used);
            if (used != text.size()) throw bad();
            return v;
        }
        const double v = std::stod(text, &used);
        if (used != text.size()) throw bad();
        return v;
    } catch (const std::logic_error&) {
        throw bad();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Run lpnrl experiments and write JSON reports"};
    app.require_subcommand(1);
    app.fallthrough();

    ExperimentConfig cfg;
    cfg.workers = default_workers();
    app.add_option("--seed", cfg.seed, "Root seed; every trial uses a child stream of it")->required();
    app.add_option("--trials", cfg.trials, "Number of independent trials")->capture_default_str();
    app.add_option("--out", cfg.out, "Report path; stdout when omitted or '-'");
    app.add_option("--workers", cfg.workers, std::string("Worker threads (default from ") + kWorkersEnv + ")")
        ->capture_default_str();

    std::map<std::string, CLI::App*> groups;
    std::deque<Leaf> leaves;
    for (const auto& e : experiments()) {
        CLI::App*& g = groups[e.group];
        if (!g) {
            g = app.add_subcommand(e.group, e.group + " experiments");
            g->require_subcommand(1);
        }
        Leaf& leaf = leaves.emplace_back();
        leaf.experiment = &e;
        leaf.app = g->add_subcommand(e.action, e.help);
        for (const auto& [k, v] : e.defaults.items())
            leaf.app->add_option("--" + k, leaf.values[k])->default_str(default_text(v))->type_name(type_name(v));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kUsageError;
    }

    for (auto& leaf : leaves) {
        if (!leaf.app->parsed()) continue;
        cfg.name = leaf.experiment->name();
        json report;
        try {
            for (const auto& [k, text] : leaf.values)
                if (leaf.app->count("--" + k) > 0) cfg.params[k] = convert(k, text, leaf.experiment->defaults.at(k));
            report = run_experiment(cfg);
        } catch (const std::invalid_argument& err) {
            std::cerr << cfg.name << ": " << err.what() << "\n" << leaf.app->help();
            return kUsageError;
        } catch (const std::exception& err) {
            std::cerr << cfg.name << ": " << err.what() << "\n";
            return kRunError;
        }
        try {
            write_json(cfg.out, report);
        } catch (const std::exception& err) {
            std::cerr << err.what() << "\n";
            return kRunError;
        }
        const auto& agg = report.at("aggregate");
        if (agg.contains("success_rate"))
            std::fprintf(stderr, "%s: success_rate %.4f over %zu trials\n", cfg.name.c_str(),
                         agg.at("success_rate").get<double>(), cfg.trials);
        return 0;
    }
    return kUsageError;
}

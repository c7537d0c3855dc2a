#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "json.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

using json = nlohmann::json;

struct ChiSquareResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int dof = 0;
    std::size_t cells = 0;  // after merging
};

inline constexpr double kMinExpectedPerCell = 5.0;

// Pearson goodness of fit. Adjacent cells are merged left to right until each carries
// expected count >= 5; a short tail is folded into the last full cell.
inline ChiSquareResult chi_square(const std::vector<std::uint64_t>& observed, const std::vector<double>& pmf) {
    if (observed.size() != pmf.size()) throw std::invalid_argument("chi_square: size mismatch");
    const double n = static_cast<double>(std::accumulate(observed.begin(), observed.end(), std::uint64_t{0}));
    if (n == 0) throw std::invalid_argument("chi_square: all observations are zero");
    double mass = 0.0;
    for (double p : pmf) {
        if (!(p >= 0)) throw std::invalid_argument("chi_square: negative expected mass");
        mass += p;
    }
    if (!(mass > 0)) throw std::invalid_argument("chi_square: expected pmf has no mass");

    std::vector<std::pair<double, double>> cells;  // (observed, expected)
    double o = 0.0;
    double e = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
        o += static_cast<double>(observed[i]);
        e += n * pmf[i] / mass;
        if (e >= kMinExpectedPerCell) {
            cells.emplace_back(o, e);
            o = e = 0.0;
        }
    }
    if (e > 0 || o > 0) {
        if (cells.empty()) cells.emplace_back(o, e);
        else {
            cells.back().first += o;
            cells.back().second += e;
        }
    }

    ChiSquareResult r;
    r.cells = cells.size();
    r.dof = static_cast<int>(cells.size()) - 1;
    for (const auto& [oc, ec] : cells) {
        if (ec > 0) r.statistic += (oc - ec) * (oc - ec) / ec;
        else if (oc > 0) r.statistic = INFINITY;
    }
    // a hit on a zero-mass cell refutes the pmf even when merging would hide it
    for (std::size_t i = 0; i < pmf.size(); ++i)
        if (pmf[i] == 0 && observed[i] > 0) r.statistic = INFINITY;
    if (std::isinf(r.statistic)) {
        r.p_value = 0.0;
        return r;
    }
    if (r.dof < 1) return r;
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

inline constexpr const char* kWorkersEnv = "LPNRL_WORKERS";

// Worker count from the environment, else the hardware concurrency.
inline unsigned default_workers() {
    if (const char* v = std::getenv(kWorkersEnv)) {
        char* end = nullptr;
        const long k = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && k > 0) return static_cast<unsigned>(k);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1U : hw;
}

// Runs fn(index, rng) for every trial on a pool of workers. Trial i always receives the
// child stream i of the root seed, and results come back in trial order.
template <class Fn>
auto run_trials(std::size_t trials, std::uint64_t seed, unsigned workers, Fn&& fn) {
    using Result = decltype(fn(std::size_t{0}, std::declval<Rng&>()));
    std::vector<Result> out(trials);
    const Rng root(seed);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < trials;) {
            if (failed.load()) return;
            try {
                Rng rng = root.child(i);
                out[i] = fn(i, rng);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(trials, 1))));
    if (workers == 1) work();
    else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 0;
    std::size_t trials = 1;
    unsigned workers = 1;
    std::string out;  // empty means stdout
    json params = json::object();
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// Report skeleton. Trial records hold no timing, so identical configs give identical records.
inline json make_report(const ExperimentConfig& cfg, json trials, json aggregate, double wall_seconds) {
    json r;
    r["experiment"] = cfg.name;
    r["config"] = {{"seed", cfg.seed}, {"trials", cfg.trials}, {"workers", cfg.workers}, {"params", cfg.params}};
    r["trials"] = std::move(trials);
    aggregate["wall_seconds"] = wall_seconds;
    r["aggregate"] = std::move(aggregate);
    return r;
}

inline double success_rate(const json& trials, const char* field = "success") {
    if (trials.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& t : trials)
        if (t.at(field).get<bool>()) ++ok;
    return static_cast<double>(ok) / static_cast<double>(trials.size());
}

inline void write_json(const std::string& path, const json& j) {
    if (path.empty() || path == "-") {
        const std::string text = j.dump(2);
        std::fwrite(text.data(), 1, text.size(), stdout);
        std::fputc('\n', stdout);
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_json: cannot open " + path);
    f << j.dump(2) << '\n';
}

// One JSON document per line.
class JsonLinesWriter {
public:
    explicit JsonLinesWriter(const std::string& path) : f_(path) {
        if (!f_) throw std::runtime_error("JsonLinesWriter: cannot open " + path);
    }
    void write(const json& j) { f_ << j.dump() << '\n'; }

private:
    std::ofstream f_;
};

}  // namespace lpnrl

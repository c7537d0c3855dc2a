#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpnrl/batch_lpn.hpp"
#include "lpnrl/block_mdp.hpp"
#include "lpnrl/harness.hpp"
#include "lpnrl/learners.hpp"
#include "lpnrl/lpn.hpp"
#include "lpnrl/oracle_lb.hpp"
#include "lpnrl/rl_classic.hpp"

namespace lpnrl {

struct ExperimentOutput {
    json trials = json::array();
    json aggregate = json::object();
};

// A named experiment. `defaults` lists every accepted parameter; its JSON type
// fixes the parameter's type on the command line.
struct Experiment {
    std::string group;
    std::string action;
    std::string help;
    json defaults;
    std::function<ExperimentOutput(const ExperimentConfig&)> run;

    std::string name() const { return group + " " + action; }
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

template <class T>
T param(const ExperimentConfig& c, const char* key) {
    return c.params.at(key).get<T>();
}

inline void require_bias(double delta, const char* what) {
    require(delta > 0 && delta <= 0.5, std::string(what) + " must lie in (0, 1/2]");
}

inline std::string bits(const std::vector<std::uint8_t>& v) {
    std::string s(v.size(), '0');
    for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] ? '1' : '0';
    return s;
}

inline json emission_json(const Emission& x) {
    return {{"h", x.h}, {"row_u", x.row_u.hex()}, {"row_y", bits(x.row_y)}, {"enc_u", x.enc_u.hex()}, {"enc_y", bits(x.enc_y)}};
}

inline json state_json(const LatentState& s) { return {s.h, s.k, s.b}; }

inline double mean_of(const json& trials, const char* field) {
    if (trials.empty()) return 0.0;
    double s = 0;
    for (const auto& t : trials) s += t.at(field).get<double>();
    return s / static_cast<double>(trials.size());
}

inline double max_of(const json& trials, const char* field) {
    double m = 0;
    for (const auto& t : trials) m = std::max(m, t.at(field).get<double>());
    return m;
}

// Cell of a transcript (s_1, a_1, ..., s_H) in mixed radix.
inline std::size_t transcript_cell(const std::vector<LatentState>& states, const std::vector<int>& actions) {
    std::size_t cell = 0;
    for (std::size_t h = 0; h < states.size(); ++h) {
        cell = cell * states_at(static_cast<int>(h + 1)) + states[h].index();
        if (h + 1 < states.size()) cell = cell * 2 + static_cast<std::size_t>(actions[h]);
    }
    return cell;
}

inline std::size_t transcript_cells(int H) {
    std::size_t c = 1;
    for (int h = 1; h <= H; ++h) c *= states_at(h) * (h < H ? 2 : 1);
    return c;
}

// Exact law of the latent transcript under a latent policy.
inline std::vector<double> transcript_law(int H, const LatentPolicy& pi) {
    std::vector<double> law(transcript_cells(H), 0.0);
    std::vector<LatentState> states;
    std::vector<int> actions;
    std::function<void(double)> walk = [&](double p) {
        const LatentState s = states.back();
        if (s.h == H) {
            law[transcript_cell(states, actions)] += p;
            return;
        }
        const double p1 = pi(s);
        for (int a = 0; a < 2; ++a) {
            const double pa = a ? p1 : 1 - p1;
            if (pa == 0) continue;
            actions.push_back(a);
            for (int b2 = 0; b2 < 2; ++b2) {
                states.push_back({s.h + 1, s.k + (s.b == a ? 1 : 0), b2});
                walk(p * pa * 0.5);
                states.pop_back();
            }
            actions.pop_back();
        }
    };
    for (int b = 0; b < 2; ++b) {
        states = {{1, 0, b}};
        walk(0.5);
    }
    return law;
}

}  // namespace detail

// ------------------------------------------------------------ lpn solve

inline ExperimentOutput run_lpn_solve(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    const auto n = param<std::size_t>(c, "n");
    const double delta = param<double>(c, "delta"), eta = param<double>(c, "eta");
    const auto solver = param<std::string>(c, "solver");
    const auto L = param<std::size_t>(c, "hypotheses");
    const auto blocks = param<std::size_t>(c, "bkw_blocks");
    const auto limit = param<std::size_t>(c, "sample_limit");
    require(n >= 1 && n <= kMaxBruteDim, "n must lie in [1, 24]");
    detail::require_bias(delta, "delta");
    require(eta > 0 && eta < 1, "eta must lie in (0, 1)");
    require(solver == "brute" || solver == "select" || solver == "bkw" || solver == "unknown",
            "solver must be brute, select, bkw or unknown");
    require(L >= 1 && (n >= 63 || L <= (std::size_t{1} << n)), "hypotheses must lie in [1, 2^n]");
    require(blocks >= 1, "bkw_blocks must be >= 1");

    ExperimentOutput out;
    const auto recs = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        const F2Vector sk = F2Vector::random(n, rng);
        const LpnInstance inst(sk, delta);
        std::optional<F2Vector> found;
        std::size_t used = 0;
        if (solver == "brute") {
            used = brute_sample_bound(n, delta, eta);
            found = brute_solve(lpn_samples(inst, used, rng), delta, eta);
        } else if (solver == "select") {
            std::vector<F2Vector> hyps{sk};
            while (hyps.size() < L) {
                const F2Vector t = F2Vector::random(n, rng);
                if (std::find(hyps.begin(), hyps.end(), t) == hyps.end()) hyps.push_back(t);
            }
            std::shuffle(hyps.begin(), hyps.end(), rng);
            used = select_sample_bound(delta, L, eta);
            found = select(lpn_samples(inst, used, rng), hyps);
        } else if (solver == "unknown") {
            const auto base = brute_base();
            const auto plan = unknown_noise_plan(n, delta, eta, base.sample_bound);
            used = plan.total();
            found = solve_unknown_noise(lpn_samples(inst, used, rng), delta, eta, base, plan);
        } else {
            LpnStream src(inst, rng.child(0), limit);
            try {
                found = bkw_solve(src, blocks, eta, delta);
            } catch (const std::runtime_error&) {
            }
            used = src.consumed();
        }
        return json{{"trial", i},
                    {"secret", sk.hex()},
                    {"found", found ? json(found->hex()) : json(nullptr)},
                    {"samples", used},
                    {"success", found && *found == sk}};
    });
    out.trials = recs;
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"target_rate", 1 - eta},
                     {"mean_samples", detail::mean_of(out.trials, "samples")}};
    return out;
}

// ---------------------------------------------------------- batch verify

inline ExperimentOutput run_batch_verify(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    const auto n = param<std::size_t>(c, "n");
    const auto H = param<std::size_t>(c, "H");
    const auto N = param<std::size_t>(c, "N");
    const double delta = param<double>(c, "delta");
    const auto batches = param<std::size_t>(c, "batches");
    const auto mode = param<std::string>(c, "mode");
    const auto sampler = param<std::string>(c, "sampler");
    const double alpha = param<double>(c, "alpha");
    require(n >= 1 && n <= 64, "n must lie in [1, 64]");
    require(H >= 1 && triangle_size(H) * (N + 1) <= kMaxEnumerationBits, "noise word exceeds the enumeration budget");
    detail::require_bias(delta, "delta");
    require(batches >= 1, "batches must be >= 1");
    require(mode == "desk" || mode == "paper", "mode must be desk or paper");
    require(sampler == "trialg" || sampler == "direct", "sampler must be trialg or direct");

    const DiscreteDist pmf = mu_pmf(H, N, delta);
    const TriPlan plan = tri_plan(H, N, delta, mode == "desk" ? TriMode::desk : TriMode::paper);
    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        const F2Vector sk = F2Vector::random(n, rng);
        LpnStream src(LpnInstance(sk, plan.input_bias), rng.child(0));
        std::vector<std::uint64_t> counts(pmf.size(), 0);
        for (std::size_t b = 0; b < batches; ++b) {
            const auto t = sampler == "trialg" ? tri_alg(plan, src, rng) : tri_sample_direct(sk, H, N, delta, rng);
            ++counts[triangle_noise(t, sk)];
        }
        const auto cs = chi_square(counts, pmf.probs());
        return json{{"trial", i},
                    {"statistic", cs.statistic},
                    {"p_value", cs.p_value},
                    {"dof", cs.dof},
                    {"cells", cs.cells},
                    {"input_samples", src.consumed()},
                    {"success", cs.p_value > alpha}};
    });
    double min_p = 1;
    for (const auto& t : out.trials) min_p = std::min(min_p, t.at("p_value").get<double>());
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"min_p_value", min_p},
                     {"input_bias", plan.input_bias},
                     {"noise_cells", pmf.size()}};
    return out;
}

// ---------------------------------------------------------- mdp simulate

inline ExperimentOutput run_mdp_simulate(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    CounterParams p;
    p.n = param<std::size_t>(c, "n");
    p.H = param<int>(c, "H");
    p.delta = param<double>(c, "delta");
    const auto Nparam = param<std::size_t>(c, "N");
    p.N = Nparam ? Nparam : desk_encryption_width(p.n, p.delta);
    const auto policy = param<std::string>(c, "policy");
    const auto source = param<std::string>(c, "source");
    const auto episodes = param<std::size_t>(c, "episodes");
    const bool conditioned = param<bool>(c, "conditioned");
    const auto traj_path = param<std::string>(c, "trajectories");
    const auto traj_limit = param<std::size_t>(c, "trajectory_limit");
    const double tol = param<double>(c, "tv_tolerance");
    require(p.n >= 1 && p.n <= 64, "n must lie in [1, 64]");
    require(p.H >= 1 && p.H <= 4, "H must lie in [1, 4]");
    detail::require_bias(p.delta, "delta");
    require(policy == "uniform" || policy == "optimal" || policy == "zero", "policy must be uniform, optimal or zero");
    require(source == "mdp" || source == "drawtraj", "source must be mdp or drawtraj");
    require(episodes >= 1, "episodes must be >= 1");

    const LatentPolicy latent = [&](const LatentState& s) {
        return policy == "uniform" ? 0.5 : policy == "optimal" ? static_cast<double>(s.b) : 0.0;
    };
    const auto exact = detail::transcript_law(p.H, latent);
    const auto exact_steps = visitation(p.H, latent);
    const std::size_t H = static_cast<std::size_t>(p.H);

    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        CounterParams q = p;
        q.sk = F2Vector::random(p.n, rng);
        std::unique_ptr<Policy> pi;
        if (policy == "uniform") pi = std::make_unique<UniformPolicy>();
        else if (policy == "optimal") pi = std::make_unique<DecodedPolicy>(q.sk, q.H);
        else pi = std::make_unique<ConstantPolicy>(0);
        std::optional<JsonLinesWriter> writer;
        if (i == 0 && !traj_path.empty()) writer.emplace(traj_path);

        std::vector<double> emp(exact.size(), 0.0);
        Visitation steps(H);
        for (std::size_t h = 0; h < H; ++h) steps[h].assign(states_at(static_cast<int>(h + 1)), 0.0);
        std::size_t failures = 0, top = 0;
        const double w = 1.0 / static_cast<double>(episodes);
        for (std::size_t e = 0; e < episodes; ++e) {
            Trajectory t = source == "mdp" ? episode(q, *pi, rng, conditioned)
                                           : draw_traj(tri_sample_direct(q.sk, H, q.N, q.delta, rng), *pi, rng);
            std::vector<LatentState> seen;
            for (std::size_t h = 0; h < H; ++h) {
                const LatentState d = decode(q.sk, t.xs[h]);
                if (!t.states.empty() && !(d == t.states[h])) ++failures;
                seen.push_back(t.states.empty() ? d : t.states[h]);
                steps[h][seen.back().index()] += w;
            }
            emp[detail::transcript_cell(seen, t.actions)] += w;
            top += seen.back().k == p.H - 1;
            if (writer && e < traj_limit) {
                json rec = {{"episode", e}, {"actions", t.actions}, {"rewards", t.rewards}, {"emissions", json::array()}};
                for (const auto& x : t.xs) rec["emissions"].push_back(detail::emission_json(x));
                if (!t.states.empty()) {
                    rec["states"] = json::array();
                    for (const auto& s : t.states) rec["states"].push_back(detail::state_json(s));
                }
                writer->write(rec);
            }
        }
        std::vector<double> tv_steps;
        for (std::size_t h = 0; h < H; ++h) tv_steps.push_back(tv_distance(steps[h], exact_steps[h]));
        const double tv = tv_distance(emp, exact);
        return json{{"trial", i},
                    {"secret", q.sk.hex()},
                    {"tv_transcript", tv},
                    {"tv_steps", tv_steps},
                    {"terminal_top_rate", static_cast<double>(top) * w},
                    {"decode_failures", failures},
                    {"success", tv <= tol}};
    });
    double exact_top = 0;
    for (std::size_t i = 0; i < exact_steps[H - 1].size(); ++i)
        if (LatentState::from_index(p.H, i).k == p.H - 1) exact_top += exact_steps[H - 1][i];
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"max_tv_transcript", detail::max_of(out.trials, "tv_transcript")},
                     {"mean_terminal_top_rate", detail::mean_of(out.trials, "terminal_top_rate")},
                     {"exact_terminal_top_rate", exact_top},
                     {"encryption_width", p.N},
                     {"transcript_cells", exact.size()}};
    return out;
}

// ---------------------------------------------------------- pipeline run

inline ExperimentOutput run_pipeline(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    const auto n = param<std::size_t>(c, "n");
    PipelineConfig cfg;
    cfg.H = param<std::size_t>(c, "H");
    cfg.N = param<std::size_t>(c, "N");
    cfg.delta = param<double>(c, "delta");
    cfg.contrast_pairs = param<std::size_t>(c, "contrast_pairs");
    cfg.mode = param<std::string>(c, "mode") == "paper" ? TriMode::paper : TriMode::desk;
    const auto erm_episodes = param<std::size_t>(c, "erm_episodes");
    const auto learner_name = param<std::string>(c, "learner");
    require(n >= 1 && n <= 16, "n must lie in [1, 16] for exhaustive ERM");
    require(cfg.H >= 1 && cfg.H <= 4, "H must lie in [1, 4]");
    detail::require_bias(cfg.delta, "delta");
    require(cfg.N >= 1 && cfg.contrast_pairs >= 1 && erm_episodes >= 1, "N, contrast_pairs and erm_episodes must be >= 1");
    require(learner_name == "erm" || learner_name == "zero", "learner must be erm or zero");

    const auto plan = tri_plan(cfg.H, cfg.N, cfg.delta, cfg.mode);
    const auto keys = all_keys(n);
    const int H = static_cast<int>(cfg.H);
    PcLearner learner;
    if (learner_name == "erm")
        learner = [&](const EpisodeFn& env, Rng& r) {
            ErmConfig ec;
            ec.episodes = erm_episodes;
            return erm_policy_cover(env, keys, H, r, ec).psi;
        };
    else
        learner = [](const EpisodeFn&, Rng&) { return std::vector<std::shared_ptr<Policy>>{std::make_shared<ConstantPolicy>(0)}; };

    struct TrialResult {
        json record;
        std::map<std::string, double> seconds;
    };
    const auto results = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        const F2Vector sk = F2Vector::random(n, rng);
        LpnStream src(LpnInstance(sk, plan.input_bias), rng.child(0));
        const auto res = policy_cover_to_lpn(src, learner, cfg, rng);
        const bool in_list = std::find(res.candidates.begin(), res.candidates.end(), sk) != res.candidates.end();
        TrialResult tr;
        tr.record = {{"trial", i},
                     {"secret", sk.hex()},
                     {"selected", res.selected.hex()},
                     {"accepted", res.key.has_value()},
                     {"candidates", res.candidates.size()},
                     {"secret_in_candidates", in_list},
                     {"episodes", res.episodes},
                     {"samples_episodes", res.samples_episodes},
                     {"samples_contrast", res.samples_contrast},
                     {"samples_select", res.samples_select},
                     {"samples_used", res.samples_used},
                     {"select_disagreement", res.select_disagreement},
                     {"success", res.key && *res.key == sk}};
        tr.seconds = res.stage_seconds;
        return tr;
    });
    ExperimentOutput out;
    std::map<std::string, double> stages;
    for (const auto& r : results) {
        out.trials.push_back(r.record);
        for (const auto& [k, v] : r.seconds) stages[k] += v;
    }
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"mean_samples_used", detail::mean_of(out.trials, "samples_used")},
                     {"input_bias", plan.input_bias},
                     {"stage_seconds", stages}};
    return out;
}

// ---------------------------------------------------------------- rl fqi

inline ExperimentOutput run_rl_fqi(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    const int H = param<int>(c, "H");
    const double eps = param<double>(c, "eps");
    const auto oracle = param<std::string>(c, "oracle");
    CounterParams base;
    base.n = param<std::size_t>(c, "n");
    base.N = param<std::size_t>(c, "N");
    base.delta = param<double>(c, "delta");
    base.H = H;
    base.reward_overlay = true;
    require(H >= 1 && H <= 8, "H must lie in [1, 8]");
    require(eps >= 0 && eps <= 1, "eps must lie in [0, 1]");
    require(oracle == "decoder" || oracle == "constant", "oracle must be decoder or constant");
    require(base.n >= 1 && base.N >= 1, "n and N must be >= 1");
    detail::require_bias(base.delta, "delta");
    const int A = 2;

    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        CounterParams p = base;
        p.sk = F2Vector::random(p.n, rng);
        const auto m = counter_model(p);
        std::vector<std::vector<double>> mu;
        for (int h = 1; h <= H; ++h) mu.emplace_back(static_cast<std::size_t>(m.size(h)), 1.0 / m.size(h));
        const double kappa = coverage_constant(m, mu);
        const double bound = 2.0 * H * H * H * std::sqrt(kappa * A * eps);
        auto value = [&](const FqiResult<Emission>& q) {
            return policy_value(m, latent_policy<Emission>(m, [&](int h, const Emission& x) { return q.act(h, x); }, 20, rng));
        };
        const double opt = optimal_value(m);
        const auto q = oracle == "decoder" ? fqi(decoder_fd_oracle(m, eps, rng), H, A)
                                           : fqi(constant_fd_oracle<Emission>(0.5), H, A);
        const double subopt = opt - value(q);
        const double exact_subopt = opt - value(fqi(decoder_fd_oracle(m, 0.0, rng), H, A));
        return json{{"trial", i},
                    {"secret", p.sk.hex()},
                    {"kappa", kappa},
                    {"bound", bound},
                    {"suboptimality", subopt},
                    {"exact_suboptimality", exact_subopt},
                    {"queries", q.queries},
                    {"exact_optimal", std::abs(exact_subopt) <= 1e-12},
                    {"success", subopt <= bound + 1e-12}};
    });
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"exact_optimal_rate", success_rate(out.trials, "exact_optimal")},
                     {"max_suboptimality", detail::max_of(out.trials, "suboptimality")}};
    return out;
}

// ---------------------------------------------------------------- rl ppe

inline ExperimentOutput run_rl_ppe(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    const int H = param<int>(c, "H");
    const double delta_fail = param<double>(c, "delta_fail");
    const auto family = param<std::string>(c, "family");
    const auto episodes = param<std::size_t>(c, "oracle_episodes");
    require(H >= 1 && H <= 10, "H must lie in [1, 10]");
    require(delta_fail > 0 && delta_fail < 1, "delta_fail must lie in (0, 1)");
    require(family == "tree" || family == "counter" || family == "single", "family must be tree, counter or single");
    require(episodes >= 1, "oracle_episodes must be >= 1");

    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        const std::uint64_t key = rng.next();
        const auto m = family == "tree" ? binary_tree_model(H, key)
                       : family == "counter" ? counter_chain_model(H, key)
                                             : single_chain_model(H, key);
        int S = 0;
        for (int h = 1; h <= H; ++h) S += m.size(h);
        const auto res = ppe(delta_fail, decoder_ppe_access(m, episodes), H, m.A, S, rng);

        auto next_state = [&](int h, int s, int a) {
            const auto p = m.transition(h, s, a);
            return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        };
        bool covered = true, small = true;
        std::set<int> reachable = {0};
        std::size_t max_psi = 0;
        for (int h = 1; h <= H; ++h) {
            const auto& psi = res.psi[static_cast<std::size_t>(h - 1)];
            std::set<int> reached;
            for (const auto& pre : psi) {
                int s = 0;
                for (std::size_t j = 0; j < pre.size(); ++j) s = next_state(static_cast<int>(j) + 1, s, pre[j]);
                reached.insert(s);
            }
            covered = covered && reached == reachable;
            small = small && psi.size() <= static_cast<std::size_t>(m.size(h));
            max_psi = std::max(max_psi, psi.size());
            if (h < H) {
                std::set<int> nxt;
                for (int s : reachable)
                    for (int a = 0; a < m.A; ++a) nxt.insert(next_state(h, s, a));
                reachable = nxt;
            }
        }
        return json{{"trial", i},
                    {"covered", covered},
                    {"max_cover_size", max_psi},
                    {"queries", res.queries},
                    {"samples_per_test", res.samples_per_test},
                    {"success", covered && small}};
    });
    out.aggregate = {{"success_rate", success_rate(out.trials)}, {"target_rate", 1 - delta_fail}};
    return out;
}

// ------------------------------------------------------------- rl bandit

inline ExperimentOutput run_rl_bandit(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    ToyParams base;
    base.n = param<std::size_t>(c, "n");
    base.N = param<std::size_t>(c, "N");
    base.delta = param<double>(c, "delta");
    const double eps = param<double>(c, "eps");
    const auto reps = param<std::size_t>(c, "eval_contexts");
    require(base.n >= 1 && base.N >= 1, "n and N must be >= 1");
    detail::require_bias(base.delta, "delta");
    require(eps >= 0 && eps <= 1, "eps must lie in [0, 1]");
    require(reps >= 1, "eval_contexts must be >= 1");
    const int A = 2;

    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        ToyParams p = base;
        p.sk = F2Vector::random(p.n, rng);
        // context encrypts s and action a pays [a == s]; the oracle is off by sqrt(eps) in the worst direction
        const double shift = std::sqrt(eps);
        const F2Vector sk = p.sk;
        const auto pi = bandit_from_regression<ToyEmission>(
            [sk, shift](int a) {
                return ObsPredictor<ToyEmission>(
                    [sk, shift, a](const ToyEmission& x) { return toy_decode(sk, x) == a ? 1 - shift : shift; });
            },
            A);
        std::size_t wins = 0;
        for (std::size_t r = 0; r < reps; ++r) {
            const int s = rng.bit();
            wins += pi(toy_emit(p, s, rng)) == s;
        }
        const double subopt = 1.0 - static_cast<double>(wins) / static_cast<double>(reps);
        const double bound = 2.0 * A * std::sqrt(eps);
        return json{{"trial", i}, {"secret", sk.hex()}, {"suboptimality", subopt}, {"bound", bound}, {"success", subopt <= bound}};
    });
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"max_suboptimality", detail::max_of(out.trials, "suboptimality")}};
    return out;
}

// -------------------------------------------------------- oraclelb audit

inline ExperimentOutput run_oraclelb_audit(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    const int H = param<int>(c, "H");
    const auto N = param<std::uint64_t>(c, "N");
    const auto backing = param<std::string>(c, "backing");
    const auto reduction = param<std::string>(c, "reduction");
    const auto T = param<std::size_t>(c, "T");
    const double eps = param<double>(c, "eps");
    TestReductionConfig tc;
    tc.c0 = param<double>(c, "c0");
    tc.c1 = param<double>(c, "c1");
    require(backing == "random" || backing == "prp", "backing must be random or prp");
    require(reduction == "trivial" || reduction == "cheat", "reduction must be trivial or cheat");
    require(T >= 1, "T must be >= 1");
    require(eps > 0 && eps <= 1, "eps must lie in (0, 1]");
    const OracleLbParams p(H, N);
    const Reduction red = reduction == "cheat" ? cheat_reduction() : trivial_reduction();
    const int expected = reduction == "cheat" ? 1 : 0;

    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        const std::uint64_t key = rng.next();
        IndexOracle oracle = backing == "prp" ? IndexOracle::prp(p, key) : IndexOracle::random(p, key);
        const auto res = test_reduction(red, oracle, T, eps, rng, tc);
        return json{{"trial", i},
                    {"bit", res.bit},
                    {"tripped", res.tripped},
                    {"value", res.value},
                    {"episodes_per_check", res.m},
                    {"oracle_calls", res.oracle_calls},
                    {"revealed", res.revealed},
                    {"discrepancies", res.discrepancies},
                    {"success", res.bit == expected}};
    });
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"expected_bit", expected},
                     {"mean_value", detail::mean_of(out.trials, "value")},
                     {"log2_index_space", p.log_x}};
    return out;
}

// ---------------------------------------------------------- regress demo

inline ExperimentOutput run_regress_demo(const ExperimentConfig& c) {
    using detail::param;
    using detail::require;
    CounterParams base;
    base.n = param<std::size_t>(c, "n");
    base.H = param<int>(c, "H");
    base.N = param<std::size_t>(c, "N");
    base.delta = param<double>(c, "delta");
    const double eps = param<double>(c, "eps");
    const auto label = param<std::string>(c, "label");
    const double constant = param<double>(c, "label_value");
    const auto samples = param<std::size_t>(c, "samples");
    RegressConfig rc;
    rc.lfc_eps = param<double>(c, "lfc_eps");
    rc.eta = param<double>(c, "eta");
    require(base.n >= 1 && base.n <= kMaxBruteDim, "n must lie in [1, 24]");
    require(base.H >= 1 && base.H <= 6, "H must lie in [1, 6]");
    require(base.N >= 1 && samples >= 1, "N and samples must be >= 1");
    detail::require_bias(base.delta, "delta");
    require(eps > 0 && eps <= 1, "eps must lie in (0, 1]");
    require(label == "constant" || label == "bh" || label == "independent", "label must be constant, bh or independent");
    require(constant >= 0 && constant <= 1, "label_value must lie in [0, 1]");
    require(rc.lfc_eps >= 0 && rc.eta > 0 && rc.eta < 1, "lfc_eps must be >= 0 and eta in (0, 1)");

    const int H = base.H;
    const auto beta = visitation(H, [](const LatentState&) { return 0.5; })[static_cast<std::size_t>(H - 1)];
    std::vector<double> f(states_at(H));
    for (std::size_t s = 0; s < f.size(); ++s)
        f[s] = label == "constant" ? constant : label == "bh" ? static_cast<double>(s % 2) : 0.5;

    ExperimentOutput out;
    out.trials = run_trials(c.trials, c.seed, c.workers, [&](std::size_t i, Rng& rng) {
        CounterParams p = base;
        p.sk = F2Vector::random(p.n, rng);
        const auto r = regress(regression_data(p, H, beta, f, samples, rng), p.delta, eps, rng, rc);
        const double excess = excess_risk(r.predictor, p, H, beta, f, rng);
        return json{{"trial", i},
                    {"secret", p.sk.hex()},
                    {"predictor", r.predictor.describe()},
                    {"candidates", r.candidates.size()},
                    {"chosen", r.chosen},
                    {"key_correct", !r.predictor.constant && r.predictor.key == p.sk},
                    {"excess_risk", excess},
                    {"success", excess <= eps}};
    });
    out.aggregate = {{"success_rate", success_rate(out.trials)},
                     {"mean_excess_risk", detail::mean_of(out.trials, "excess_risk")}};
    return out;
}

// -------------------------------------------------------------- registry

inline const std::vector<Experiment>& experiments() {
    static const std::vector<Experiment> list = {
        {"lpn", "solve", "Solve random LPN instances with one solver at its sample bound",
         {{"n", 8}, {"delta", 0.2}, {"eta", 0.1}, {"solver", "brute"}, {"hypotheses", 2}, {"bkw_blocks", 2},
          {"sample_limit", 1000000}},
         run_lpn_solve},
        {"batch", "verify", "Chi-square test of the triangle noise law against the exact pmf",
         {{"n", 8}, {"H", 2}, {"N", 1}, {"delta", 0.05}, {"batches", 100000}, {"mode", "desk"}, {"sampler", "trialg"},
          {"alpha", 0.001}},
         run_batch_verify},
        {"mdp", "simulate", "Simulate the counter MDP and compare the transcript law with the latent chain",
         {{"n", 8}, {"H", 3}, {"N", 0}, {"delta", 0.3}, {"policy", "uniform"}, {"source", "mdp"}, {"episodes", 20000},
          {"conditioned", true}, {"trajectories", ""}, {"trajectory_limit", 100}, {"tv_tolerance", 0.05}},
         run_mdp_simulate},
        {"pipeline", "run", "Recover an LPN secret through a policy-cover learner",
         {{"n", 8}, {"H", 2}, {"N", 256}, {"delta", 0.2}, {"contrast_pairs", 3000}, {"erm_episodes", 200},
          {"mode", "desk"}, {"learner", "erm"}},
         run_pipeline},
        {"rl", "fqi", "Fitted Q iteration on the rewarded counter MDP",
         {{"H", 3}, {"eps", 1e-4}, {"n", 8}, {"N", 200}, {"delta", 0.3}, {"oracle", "decoder"}},
         run_rl_fqi},
        {"rl", "ppe", "Exploration by predictive prefix elimination on a deterministic family",
         {{"H", 3}, {"delta_fail", 0.1}, {"family", "tree"}, {"oracle_episodes", 400}},
         run_rl_ppe},
        {"rl", "bandit", "Greedy bandit policy from an approximate regression oracle",
         {{"n", 8}, {"N", 2000}, {"delta", 0.3}, {"eps", 1.0 / 64}, {"eval_contexts", 2000}},
         run_rl_bandit},
        {"oraclelb", "audit", "Run a candidate reduction against simulated index oracles",
         {{"H", 4}, {"N", 16}, {"backing", "random"}, {"reduction", "trivial"}, {"T", 10}, {"eps", 0.25},
          {"c0", 16.0}, {"c1", 16.0}},
         run_oraclelb_audit},
        {"regress", "demo", "Regression on counter-MDP emissions",
         {{"n", 8}, {"H", 2}, {"N", 256}, {"delta", 0.2}, {"eps", 0.1}, {"label", "bh"}, {"label_value", 0.3},
          {"samples", 2000}, {"lfc_eps", 0.5}, {"eta", 0.1}},
         run_regress_demo},
    };
    return list;
}

inline const Experiment& find_experiment(const std::string& name) {
    for (const auto& e : experiments())
        if (e.name() == name) return e;
    throw std::invalid_argument("unknown experiment: " + name);
}

// Fills defaults, checks parameter names and types, runs and wraps the result.
inline json run_experiment(ExperimentConfig cfg) {
    const Experiment& e = find_experiment(cfg.name);
    detail::require(cfg.trials >= 1, "trials must be >= 1");
    detail::require(cfg.params.is_object(), "params must be an object");
    json merged = e.defaults;
    for (const auto& [k, v] : cfg.params.items()) {
        if (!merged.contains(k)) throw std::invalid_argument("unknown parameter for " + e.name() + ": " + k);
        const auto& d = merged[k];
        const bool ok = (d.is_number() && v.is_number()) || d.type() == v.type();
        if (!ok) throw std::invalid_argument("parameter " + k + " has the wrong type");
        if (d.is_number_integer() && !v.is_number_integer()) throw std::invalid_argument("parameter " + k + " must be an integer");
        // every numeric parameter is a size, rate or bias
        if (v.is_number() && v.get<double>() < 0) throw std::invalid_argument("parameter " + k + " must be non-negative");
        merged[k] = v;
    }
    cfg.params = merged;
    if (cfg.workers == 0) cfg.workers = default_workers();
    const Stopwatch sw;
    auto out = e.run(cfg);
    return make_report(cfg, std::move(out.trials), std::move(out.aggregate), sw.seconds());
}

}  // namespace lpnrl

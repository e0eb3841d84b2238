#include "its/cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "its/error.hpp"
#include "its/extern_reward.hpp"
#include "its/harness.hpp"
#include "its/plot.hpp"
#include "its/rewards.hpp"
#include "its/search.hpp"
#include "its/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace its {
namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::uint64_t task_seed = 0;
    std::string out;
    int jobs = 1;

    int steps = kDefaultSteps;
    int calibration_samples = 256;
    std::uint64_t calibration_seed = 0;
    std::string stats_dir;
    std::vector<std::string> workers;

    std::string scheme = "score";
    std::string reward = std::string(kAlignmentReward);
    std::vector<std::string> rewards = {std::string(kAlignmentReward),
                                        std::string(kQualityReward)};
    double alpha = 0.5;
    std::vector<double> weights;

    std::string strategy = "best_of_n";
    int population = 8;
    std::vector<int> evo_steps;
    int elite_count = 0;
    double mutation_scale = kDefaultMutationScale;
    double eta = 0.0;

    std::uint64_t seed = 0;
    int seeds = 3;
    std::string prompt;
    std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<int> populations = {1, 2, 4, 8, 16};
    bool matched_nfe = false;
    std::vector<std::string> strategies = {"naive", "best_of_n", "evosearch"};
    std::vector<std::string> schemes = {"single:alignment", "single:quality", "rank", "score"};

    int samples = 256;
    std::string csv;
    std::string kind;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--task-seed", o.task_seed, "Seed of the default task (decoder noise bases)")
        ->capture_default_str();
    cmd->add_option("--out", o.out, "Output directory")->required();
    cmd->add_option("--jobs", o.jobs, "Maximum concurrent lanes")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

void add_engine(CLI::App* cmd, Options& o, bool with_calibration_flags = true) {
    cmd->add_option("--steps", o.steps, "Diffusion steps T")->capture_default_str();
    if (with_calibration_flags) {
        cmd->add_option("--calibration-samples", o.calibration_samples,
                        "Naive samples used to calibrate reward stats")
            ->capture_default_str();
        cmd->add_option("--calibration-seed", o.calibration_seed, "Calibration master seed")
            ->capture_default_str();
        cmd->add_option("--stats-dir", o.stats_dir,
                        "Directory of stats_<reward>.json files to reuse")
            ->check(CLI::ExistingDirectory);
    }
    cmd->add_option("--worker", o.workers,
                    "External reward worker command line (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

void add_guidance(CLI::App* cmd, Options& o) {
    cmd->add_option("--scheme", o.scheme, "single | rank | score")->capture_default_str();
    cmd->add_option("--reward", o.reward, "Reward for single guidance")->capture_default_str();
    cmd->add_option("--rewards", o.rewards, "Rewards for rank/score guidance")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--alpha", o.alpha, "Weight of the first reward (score, two rewards)")
        ->capture_default_str();
    cmd->add_option("--weights", o.weights, "Score weights, one per reward")->delimiter(',');
}

void add_search(CLI::App* cmd, Options& o, bool with_population = true,
                bool with_strategy = true) {
    if (with_strategy) {
        cmd->add_option("--strategy", o.strategy, "naive | best_of_n | evosearch")
            ->capture_default_str();
    }
    if (with_population) {
        cmd->add_option("--population", o.population, "Population size N")
            ->capture_default_str();
    }
    cmd->add_option("--evo-steps", o.evo_steps,
                    "Evolution timesteps, strictly decreasing (default 75/50/25% of T)")
        ->delimiter(',');
    cmd->add_option("--elite-count", o.elite_count, "Elites kept per evolution step (0: N/4)")
        ->capture_default_str();
    cmd->add_option("--mutation-scale", o.mutation_scale, "Mutation scale sigma_mut")
        ->capture_default_str();
    cmd->add_option("--eta", o.eta, "DDIM stochasticity")->capture_default_str();
}

void add_seeds(CLI::App* cmd, Options& o) {
    cmd->add_option("--seeds", o.seeds, "Number of seeds (seed, seed+1, ...)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "First seed")->capture_default_str();
    cmd->add_option("--prompt", o.prompt, "Prompt id or index (default: every prompt)");
}

template <class Fn>
auto as_usage(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    } catch (const WeightSumError& e) {
        throw UsageError(e.what());
    } catch (const InvalidRange& e) {
        throw UsageError(e.what());
    }
}

Strategy strategy_of(const std::string& s) {
    if (s == "bon") return Strategy::best_of_n;
    if (s == "evo") return Strategy::evosearch;
    return as_usage([&] { return parse_strategy(s); });
}

std::vector<RewardStats> placeholder_stats(const std::vector<std::string>& rewards) {
    std::vector<RewardStats> st;
    for (const auto& r : rewards) {
        st.push_back(RewardStats{r, 0.0, 1.0, 0, ""});
    }
    return st;
}

// Stats are left empty for score guidance; the workbench fills them in.
GuidanceConfig guidance_of(const std::string& scheme_text, const Options& o) {
    const Scheme scheme = as_usage([&] { return parse_scheme(scheme_text); });
    switch (scheme) {
        case Scheme::single:
            return GuidanceConfig::single(o.reward);
        case Scheme::rank_aggregation:
            return GuidanceConfig::rank(o.rewards);
        case Scheme::score: {
            std::vector<double> w = o.weights;
            if (w.empty()) {
                if (o.rewards.size() != 2) {
                    throw UsageError("--alpha needs exactly two --rewards; use --weights");
                }
                w = {o.alpha, 1.0 - o.alpha};
            }
            GuidanceConfig g = GuidanceConfig::score(o.rewards, w, {});
            return g;
        }
    }
    throw UsageError("unknown scheme");
}

void check_reward_names(const GuidanceConfig& g, const RewardRegistry& registry) {
    for (const auto& r : g.rewards) {
        if (!registry.contains(r)) {
            throw UsageError("unknown reward '" + r + "' (known: " +
                             [&] {
                                 std::string s;
                                 for (const auto& n : registry.names()) {
                                     s += (s.empty() ? "" : ", ") + n;
                                 }
                                 return s;
                             }() +
                             ")");
        }
    }
}

// `registry` may be null when worker rewards are not known yet.
SearchConfig search_of(const Options& o, const GuidanceConfig& g, const Schedule& sched,
                       const RewardRegistry* registry, int population) {
    SearchConfig cfg;
    cfg.strategy = strategy_of(o.strategy);
    cfg.population = cfg.strategy == Strategy::naive ? 1 : population;
    cfg.guidance = g;
    cfg.evo_steps = o.evo_steps;
    if (cfg.strategy == Strategy::evosearch && cfg.evo_steps.empty()) {
        cfg.evo_steps = default_evo_steps(sched);
    }
    cfg.elite_count = o.elite_count;
    cfg.mutation_scale = o.mutation_scale;
    cfg.eta = o.eta;
    cfg.master_seed = o.seed;
    if (registry != nullptr) {
        check_reward_names(g, *registry);
    }
    SearchConfig probe = cfg;
    if (probe.guidance.scheme == Scheme::score) {
        probe.guidance.stats = placeholder_stats(probe.guidance.rewards);
    }
    as_usage([&] { probe.validate(sched); });
    return cfg;
}

Schedule schedule_of(const Options& o) {
    return as_usage([&] { return make_schedule(o.steps, kDefaultBetaMin, kDefaultBetaMax); });
}

std::optional<int> prompt_index(const Options& o, const Task& task) {
    if (o.prompt.empty()) {
        return std::nullopt;
    }
    for (int i = 0; i < task.num_prompts(); ++i) {
        if (task.prompt(i).id == o.prompt) {
            return i;
        }
    }
    try {
        std::size_t used = 0;
        const int i = std::stoi(o.prompt, &used);
        if (used == o.prompt.size() && i >= 0 && i < task.num_prompts()) {
            return i;
        }
    } catch (const std::exception&) {
    }
    throw UsageError("unknown prompt '" + o.prompt + "'");
}

std::vector<std::uint64_t> seed_list(const Options& o) {
    std::vector<std::uint64_t> s;
    for (int i = 0; i < o.seeds; ++i) {
        s.push_back(o.seed + static_cast<std::uint64_t>(i));
    }
    return s;
}

// Builtins, or null if workers will add rewards later.
const RewardRegistry* known_rewards(const Options& o) {
    static const RewardRegistry builtins = builtin_registry();
    return o.workers.empty() ? &builtins : nullptr;
}

RewardRegistry registry_of(const Options& o) {
    RewardRegistry reg = builtin_registry();
    for (const auto& cmd : o.workers) {
        const auto argv = as_usage([&] { return split_command(cmd); });
        reg.add(external_reward(spawn_worker(argv)));
    }
    return reg;
}

std::vector<RewardStats> stats_from_dir(const Options& o) {
    std::vector<RewardStats> out;
    if (o.stats_dir.empty()) {
        return out;
    }
    for (const auto& entry : fs::directory_iterator(o.stats_dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with("stats_") && name.ends_with(".json")) {
            out.push_back(load_stats(entry.path()));
        }
    }
    return out;
}

Workbench bench_of(const Options& o, RewardRegistry registry) {
    WorkbenchOptions wo;
    wo.task_seed = o.task_seed;
    wo.num_steps = o.steps;
    wo.calibration_samples = o.calibration_samples;
    wo.calibration_seed = o.calibration_seed;
    wo.jobs = o.jobs;
    return make_workbench(wo, std::move(registry), stats_from_dir(o));
}

fs::path out_dir(const Options& o) {
    fs::path p(o.out);
    fs::create_directories(p);
    return p;
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream f(path);
    if (!f) {
        throw Error("cannot write " + path.string());
    }
    f << doc.dump(2) << '\n';
}

json base_echo(const std::string& command, const std::vector<std::string>& args,
               const Options& o, const Workbench& bench) {
    json stats = json::array();
    for (const auto& s : bench.stats) {
        stats.push_back(s.to_json());
    }
    json rewards = json::array();
    for (const auto& r : bench.registry.all()) {
        rewards.push_back({{"name", r.name}, {"kind", to_string(r.kind)}});
    }
    return {{"command", command},
            {"argv", args},
            {"task_seed", o.task_seed},
            {"task_fingerprint", bench.task.fingerprint()},
            {"schedule",
             {{"num_steps", bench.schedule.num_steps()},
              {"beta_min", bench.schedule.beta_min()},
              {"beta_max", bench.schedule.beta_max()}}},
            {"calibration",
             {{"samples", o.calibration_samples},
              {"seed", o.calibration_seed},
              {"stats_dir", o.stats_dir}}},
            {"rewards", rewards},
            {"workers", o.workers},
            {"stats", stats},
            {"jobs", o.jobs}};
}

// Resolved configuration for a run under `bench`: seed and calibration stats
// filled in exactly as the harness fills them.
SearchConfig resolved(SearchConfig cfg, const Workbench& bench) {
    cfg.guidance = bench.resolve(std::move(cfg.guidance));
    return cfg;
}

ExperimentPlan plan_of(const Options& o, const Task& task, const fs::path& out) {
    ExperimentPlan plan;
    plan.task_seed = o.task_seed;
    plan.seeds = seed_list(o);
    if (auto p = prompt_index(o, task)) {
        plan.prompts = {*p};
    }
    plan.outputs = out;
    plan.matched_nfe = o.matched_nfe;
    return plan;
}

json plan_echo(const ExperimentPlan& plan) {
    return {{"seeds", plan.seeds}, {"prompts", plan.prompts}, {"matched_nfe", plan.matched_nfe}};
}

void emit_tables(const MetricTable& table, const fs::path& out, const std::string& stem,
                 std::optional<PlotKind> kind, const Workbench& bench) {
    emit_csv(table, out / (stem + ".csv"));
    emit_runs_csv(table, out / "runs.csv");
    if (kind) {
        for (const auto& r : bench.registry.names()) {
            emit_svg_plot(table, *kind, r, out / (stem + "_" + r + ".svg"));
        }
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    Options o;
    CLI::App app{"Inference-time search over a toy diffusion model with multiple rewards", "its"};
    app.require_subcommand(1);
    app.fallthrough(false);

    auto* task_cmd = app.add_subcommand("task", "Write the default task JSON");
    add_common(task_cmd, o);

    auto* cal = app.add_subcommand("calibrate", "Calibrate reward normalisation stats");
    add_common(cal, o);
    add_engine(cal, o, false);
    cal->add_option("--samples", o.samples, "Calibration set size")->capture_default_str();
    cal->add_option("--seed", o.seed, "Calibration master seed")->capture_default_str();

    auto* gen = app.add_subcommand("generate", "Run one search and write the selected audio");
    add_common(gen, o);
    add_engine(gen, o);
    add_guidance(gen, o);
    add_search(gen, o);
    gen->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    gen->add_option("--prompt", o.prompt, "Prompt id or index")->capture_default_str();

    auto* sa = app.add_subcommand("sweep-alpha", "Sweep the score weight alpha");
    add_common(sa, o);
    add_engine(sa, o);
    add_search(sa, o);
    add_seeds(sa, o);
    sa->add_option("--rewards", o.rewards, "The two rewards (alpha weights the first)")
        ->delimiter(',')
        ->capture_default_str();
    sa->add_option("--alphas", o.alphas, "Alpha grid")->delimiter(',')->capture_default_str();

    auto* sn = app.add_subcommand("sweep-nfe", "Sweep population size for Best-of-N and EvoSearch");
    add_common(sn, o);
    add_engine(sn, o);
    add_guidance(sn, o);
    add_search(sn, o, false, false);
    add_seeds(sn, o);
    sn->add_option("--populations", o.populations, "Population grid")
        ->delimiter(',')
        ->capture_default_str();
    sn->add_flag("--matched-nfe", o.matched_nfe,
                 "Shrink EvoSearch populations to the Best-of-N compute budget");

    auto* mx = app.add_subcommand("matrix", "Run every strategy under every guidance scheme");
    add_common(mx, o);
    add_engine(mx, o);
    add_guidance(mx, o);
    add_search(mx, o);
    add_seeds(mx, o);
    mx->add_option("--strategies", o.strategies, "Strategies")
        ->delimiter(',')
        ->capture_default_str();
    mx->add_option("--schemes", o.schemes, "Schemes; single:<reward> picks the reward")
        ->delimiter(',')
        ->capture_default_str();
    mx->add_flag("--matched-nfe", o.matched_nfe,
                 "Shrink EvoSearch populations to the Best-of-N compute budget");

    auto* rep = app.add_subcommand("report", "Plot a sweep CSV or the reward distributions");
    add_common(rep, o);
    add_engine(rep, o);
    rep->add_option("--csv", o.csv, "Metric CSV from a sweep")->check(CLI::ExistingFile);
    rep->add_option("--kind", o.kind, "nfe | alpha (default: inferred from the CSV)");
    rep->add_option("--samples", o.samples, "Samples for the distribution report")
        ->capture_default_str();
    rep->add_option("--seed", o.seed, "Seed for the distribution report")->capture_default_str();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "its: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    try {
        // Everything that can be checked without computation is checked first.
        if (o.calibration_samples < 2) {
            throw UsageError("--calibration-samples must be >= 2");
        }
        if (o.samples < 2) {
            throw UsageError("--samples must be >= 2");
        }
        const Schedule sched = schedule_of(o);
        const Task task = build_default_task(o.task_seed);

        if (command == "task") {
            const auto out = out_dir(o);
            write_json(out / "task.json", task.to_json());
            write_json(out / "config.json", {{"command", command},
                                             {"argv", args},
                                             {"task_seed", o.task_seed},
                                             {"task_fingerprint", task.fingerprint()}});
            std::cout << task.fingerprint() << '\n';
            return 0;
        }

        if (command == "calibrate") {
            o.calibration_samples = o.samples;
            o.calibration_seed = o.seed;
            const RewardRegistry reg = registry_of(o);
            const auto names = reg.names();
            const auto stats = calibrate_stats(task, sched, reg, names, o.samples, o.seed, o.jobs);
            const auto out = out_dir(o);
            Workbench bench{task, sched, reg, stats, o.jobs};
            write_json(out / "config.json", base_echo(command, args, o, bench));
            for (const auto& s : stats) {
                save_stats(s, out / ("stats_" + s.reward_name + ".json"));
                std::cout << s.reward_name << " mu=" << s.mu << " sigma=" << s.sigma << '\n';
            }
            return 0;
        }

        if (command == "generate") {
            const int pi = prompt_index(o, task).value_or(0);
            const GuidanceConfig g = guidance_of(o.scheme, o);
            SearchConfig cfg = search_of(o, g, sched, known_rewards(o), o.population);
            RewardRegistry reg = registry_of(o);
            check_reward_names(cfg.guidance, reg);
            const Workbench bench = bench_of(o, std::move(reg));
            cfg = resolved(cfg, bench);
            const auto out = out_dir(o);
            json echo = base_echo(command, args, o, bench);
            echo["prompt"] = bench.task.prompt(pi).id;
            echo["search"] = cfg.to_json();
            write_json(out / "config.json", echo);

            const RunResult res = run_search(bench.context(), bench.task.prompt(pi), cfg);
            json doc = res.to_json();
            doc["prompt"] = bench.task.prompt(pi).id;
            write_json(out / "result.json", doc);
            write_wav_float32(out / "selected.wav",
                              std::span<const double>(res.selected_waveform.data(),
                                                      res.selected_waveform.size()),
                              static_cast<int>(bench.task.decoder().sample_rate()));
            std::cout << "selected candidate " << res.selected_index << " (guidance "
                      << res.guidance_score << ", nfe " << res.nfe << ")\n";
            return 0;
        }

        if (command == "sweep-alpha") {
            if (o.rewards.size() != 2) {
                throw UsageError("sweep-alpha needs exactly two --rewards");
            }
            for (double a : o.alphas) {
                if (!(a >= 0.0 && a <= 1.0)) {
                    throw UsageError("alpha values must lie in [0, 1]");
                }
            }
            o.scheme = "score";
            o.weights.clear();
            const auto plan0 = plan_of(o, task, o.out);
            const SearchConfig base =
                search_of(o, guidance_of("score", o), sched, known_rewards(o), o.population);
            RewardRegistry reg = registry_of(o);
            check_reward_names(base.guidance, reg);
            const Workbench bench = bench_of(o, std::move(reg));
            const auto out = out_dir(o);
            json echo = base_echo(command, args, o, bench);
            echo["search"] = resolved(base, bench).to_json();
            echo["alphas"] = o.alphas;
            echo["plan"] = plan_echo(plan0);
            write_json(out / "config.json", echo);
            const MetricTable table = sweep_alpha(base, o.alphas, plan0, bench);
            emit_tables(table, out, "sweep_alpha", PlotKind::alpha_curve, bench);
            return 0;
        }

        if (command == "sweep-nfe") {
            if (o.populations.empty()) {
                throw UsageError("--populations is empty");
            }
            for (std::size_t i = 0; i < o.populations.size(); ++i) {
                if (o.populations[i] < 1) {
                    throw UsageError("populations must be >= 1");
                }
                if (i > 0 && o.populations[i] <= o.populations[i - 1]) {
                    throw UsageError("populations must be strictly increasing");
                }
            }
            const auto plan0 = plan_of(o, task, o.out);
            const GuidanceConfig g = guidance_of(o.scheme, o);
            Options evo = o;
            evo.strategy = "evosearch";
            const SearchConfig base =
                search_of(evo, g, sched, known_rewards(o), o.populations.back());
            RewardRegistry reg = registry_of(o);
            check_reward_names(base.guidance, reg);
            const Workbench bench = bench_of(o, std::move(reg));
            const auto out = out_dir(o);
            json echo = base_echo(command, args, o, bench);
            echo["search"] = resolved(base, bench).to_json();
            echo["populations"] = o.populations;
            echo["plan"] = plan_echo(plan0);
            write_json(out / "config.json", echo);
            const MetricTable table = sweep_nfe(base, o.populations, plan0, bench);
            emit_tables(table, out, "sweep_nfe", PlotKind::nfe_curve, bench);
            return 0;
        }

        if (command == "matrix") {
            auto plan0 = plan_of(o, task, o.out);
            std::vector<SearchConfig> cells;
            for (const auto& st : o.strategies) {
                for (const auto& sc : o.schemes) {
                    Options cell = o;
                    cell.strategy = st;
                    std::string scheme = sc;
                    if (const auto colon = sc.find(':'); colon != std::string::npos) {
                        scheme = sc.substr(0, colon);
                        cell.reward = sc.substr(colon + 1);
                    }
                    cells.push_back(search_of(cell, guidance_of(scheme, cell), sched,
                                              known_rewards(o), o.population));
                }
            }
            plan0.strategies = cells;
            as_usage([&] { plan0.validate(); });
            RewardRegistry reg = registry_of(o);
            for (const auto& c : cells) {
                check_reward_names(c.guidance, reg);
            }
            const Workbench bench = bench_of(o, std::move(reg));
            const auto out = out_dir(o);
            json echo = base_echo(command, args, o, bench);
            json cj = json::array();
            for (const auto& c : cells) {
                cj.push_back(resolved(c, bench).to_json());
            }
            echo["cells"] = cj;
            echo["plan"] = plan_echo(plan0);
            write_json(out / "config.json", echo);
            const MetricTable table = run_matrix(plan0, bench);
            emit_tables(table, out, "matrix", std::nullopt, bench);
            return 0;
        }

        if (command == "report") {
            if (!o.csv.empty()) {
                MetricTable table;
                table.rows = parse_csv(o.csv);
                if (table.rows.empty()) {
                    throw UsageError("no rows in " + o.csv);
                }
                PlotKind kind = PlotKind::nfe_curve;
                if (o.kind == "alpha") {
                    kind = PlotKind::alpha_curve;
                } else if (o.kind.empty()) {
                    for (const auto& r : table.rows) {
                        if (std::isfinite(r.alpha) && r.alpha != table.rows.front().alpha) {
                            kind = PlotKind::alpha_curve;
                        }
                    }
                } else if (o.kind != "nfe") {
                    throw UsageError("--kind must be nfe or alpha");
                }
                std::vector<std::string> rewards;
                for (const auto& r : table.rows) {
                    if (std::find(rewards.begin(), rewards.end(), r.reward_name) == rewards.end()) {
                        rewards.push_back(r.reward_name);
                    }
                }
                const auto out = out_dir(o);
                const std::string stem = fs::path(o.csv).stem().string();
                for (const auto& r : rewards) {
                    emit_svg_plot(table, kind, r, out / (stem + "_" + r + ".svg"));
                }
                write_json(out / "config.json",
                           {{"command", command}, {"argv", args}, {"csv", o.csv},
                            {"kind", kind == PlotKind::alpha_curve ? "alpha" : "nfe"}});
                return 0;
            }
            RewardRegistry reg = registry_of(o);
            const Workbench bench = bench_of(o, std::move(reg));
            const auto out = out_dir(o);
            json echo = base_echo(command, args, o, bench);
            echo["samples"] = o.samples;
            echo["seed"] = o.seed;
            write_json(out / "config.json", echo);
            const DistributionReport report = distribution_report(
                bench, bench.registry.names(), bench.stats, o.samples, o.seed);
            write_json(out / "distribution.json", report.to_json());
            emit_svg_plot(report, out / "distribution.svg");
            return 0;
        }
        throw UsageError("unknown subcommand " + command);
    } catch (const UsageError& e) {
        std::cerr << "its " << command << ": " << e.what() << "\n\n" << sub->help();
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "its " << command << ": error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace its

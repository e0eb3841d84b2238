#include "its/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "its/error.hpp"

namespace its {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same_alpha(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

// Single-reward cells are told apart by their reward.
std::string scheme_label(const GuidanceConfig& g) {
    std::string s(to_string(g.scheme));
    if (g.scheme == Scheme::single && !g.rewards.empty()) {
        s += ":" + g.rewards.front();
    }
    return s;
}

std::string cell_label(const SearchConfig& cfg) {
    std::ostringstream os;
    os << to_string(cfg.strategy) << '/' << scheme_label(cfg.guidance);
    if (auto a = cfg.guidance.alpha()) {
        os << "/alpha=" << *a;
    }
    os << "/N=" << cfg.population;
    return os.str();
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Averages the per-prompt results of one seed.
class PromptAverager {
public:
    void add(const RunResult& r) {
        if (count_ == 0) {
            record_.strategy = std::string(to_string(r.strategy));
            record_.population = r.population;
            record_.seed = r.seed;
            record_.nfe = r.nfe;
            for (const auto& s : r.final_scores) {
                record_.rewards.push_back(s.reward);
            }
            record_.raw.assign(r.final_scores.size(), 0.0);
            record_.z.assign(r.final_scores.size(), 0.0);
        } else if (r.nfe != record_.nfe) {
            throw Error("nfe differs between prompts of one cell");
        }
        for (std::size_t k = 0; k < r.final_scores.size(); ++k) {
            record_.raw[k] += r.final_scores[k].raw;
            record_.z[k] += r.final_scores[k].z.value_or(kNaN);
        }
        record_.guidance += r.guidance_score;
        ++count_;
    }

    RunRecord finish(const SearchConfig& cfg) {
        const double n = static_cast<double>(count_);
        for (auto& v : record_.raw) v /= n;
        for (auto& v : record_.z) v /= n;
        record_.guidance /= n;
        record_.scheme = scheme_label(cfg.guidance);
        record_.alpha = cfg.guidance.alpha().value_or(kNaN);
        return std::move(record_);
    }

private:
    RunRecord record_;
    int count_ = 0;
};

std::vector<int> plan_prompts(const ExperimentPlan& plan, const Task& task) {
    if (!plan.prompts.empty()) {
        for (int p : plan.prompts) {
            if (p < 0 || p >= task.num_prompts()) {
                throw ConfigError("plan: prompt index " + std::to_string(p) + " out of range");
            }
        }
        return plan.prompts;
    }
    std::vector<int> all(task.num_prompts());
    for (int i = 0; i < task.num_prompts(); ++i) {
        all[i] = i;
    }
    return all;
}

SearchConfig prepare(SearchConfig cfg, std::uint64_t seed, const Workbench& bench) {
    cfg.master_seed = seed;
    cfg.guidance = bench.resolve(std::move(cfg.guidance));
    if (cfg.strategy == Strategy::evosearch && cfg.evo_steps.empty()) {
        cfg.evo_steps = default_evo_steps(bench.schedule);
    }
    return cfg;
}

template <class Fn>
auto with_cell(const std::string& label, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const CellError&) {
        throw;
    } catch (const std::exception& e) {
        throw CellError(label, e.what());
    }
}

std::vector<RunRecord> run_cell(const SearchConfig& tmpl, const ExperimentPlan& plan,
                                const Workbench& bench) {
    const auto prompts = plan_prompts(plan, bench.task);
    const SearchContext ctx = bench.context();
    std::vector<RunRecord> out;
    for (std::uint64_t seed : plan.seeds) {
        const SearchConfig cfg = prepare(tmpl, seed, bench);
        PromptAverager avg;
        for (int p : prompts) {
            const std::string label =
                cell_label(cfg) + " seed=" + std::to_string(seed) + " prompt=" + std::to_string(p);
            avg.add(with_cell(label, [&] { return run_search(ctx, bench.task.prompt(p), cfg); }));
        }
        out.push_back(avg.finish(cfg));
    }
    return out;
}

int strategy_rank(const std::string& s) {
    if (s == "naive") return 0;
    if (s == "best_of_n") return 1;
    if (s == "evosearch") return 2;
    return 3;
}

void aggregate_into(MetricTable& table, std::vector<RunRecord> records) {
    if (records.empty()) {
        return;
    }
    const auto& first = records.front();
    for (std::size_t k = 0; k < first.rewards.size(); ++k) {
        std::vector<double> raw, z, g;
        for (const auto& r : records) {
            raw.push_back(r.raw[k]);
            z.push_back(r.z[k]);
            g.push_back(r.guidance);
        }
        MetricRow row;
        row.strategy = first.strategy;
        row.scheme = first.scheme;
        row.alpha = first.alpha;
        row.population = first.population;
        row.nfe = first.nfe;
        row.reward_name = first.rewards[k];
        row.raw_mean = mean_of(raw);
        row.raw_std = std_of(raw);
        row.z_mean = mean_of(z);
        row.z_std = std_of(z);
        row.guidance_mean = mean_of(g);
        row.guidance_std = std_of(g);
        row.seeds = static_cast<int>(records.size());
        table.rows.push_back(std::move(row));
    }
    for (auto& r : records) {
        table.runs.push_back(std::move(r));
    }
}

void sort_canonical(MetricTable& table, const std::vector<std::string>& reward_order) {
    auto reward_rank = [&](const std::string& name) {
        const auto it = std::find(reward_order.begin(), reward_order.end(), name);
        return static_cast<int>(it - reward_order.begin());
    };
    auto alpha_key = [](double a) { return std::isnan(a) ? -1.0 : a; };
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [&](const MetricRow& a, const MetricRow& b) {
                         return std::make_tuple(strategy_rank(a.strategy), a.scheme,
                                                alpha_key(a.alpha), a.population,
                                                reward_rank(a.reward_name)) <
                                std::make_tuple(strategy_rank(b.strategy), b.scheme,
                                                alpha_key(b.alpha), b.population,
                                                reward_rank(b.reward_name));
                     });
    std::stable_sort(table.runs.begin(), table.runs.end(),
                     [&](const RunRecord& a, const RunRecord& b) {
                         return std::make_tuple(strategy_rank(a.strategy), a.scheme,
                                                alpha_key(a.alpha), a.population, a.seed) <
                                std::make_tuple(strategy_rank(b.strategy), b.scheme,
                                                alpha_key(b.alpha), b.population, b.seed);
                     });
}

}  // namespace

const RewardStats& Workbench::stats_for(std::string_view reward) const {
    for (const auto& s : stats) {
        if (s.reward_name == reward) {
            return s;
        }
    }
    throw ConfigError("no calibration stats for reward '" + std::string(reward) + "'");
}

GuidanceConfig Workbench::resolve(GuidanceConfig cfg) const {
    if (cfg.scheme == Scheme::score && cfg.stats.empty()) {
        for (const auto& r : cfg.rewards) {
            cfg.stats.push_back(stats_for(r));
        }
    }
    return cfg;
}

Workbench make_workbench(const WorkbenchOptions& opts, RewardRegistry registry,
                         std::vector<RewardStats> stats) {
    Workbench bench{build_default_task(opts.task_seed),
                    make_schedule(opts.num_steps, opts.beta_min, opts.beta_max),
                    std::move(registry),
                    {},
                    opts.jobs};
    std::vector<std::string> missing;
    for (const auto& name : bench.registry.names()) {
        const auto it = std::find_if(stats.begin(), stats.end(),
                                     [&](const RewardStats& s) { return s.reward_name == name; });
        if (it == stats.end()) {
            missing.push_back(name);
        } else if (it->task_fingerprint != bench.task.fingerprint()) {
            throw StaleStats("stats for '" + name + "' were calibrated on task " +
                             it->task_fingerprint + ", active task is " +
                             bench.task.fingerprint());
        }
    }
    if (!missing.empty()) {
        auto fresh = calibrate_stats(bench.task, bench.schedule, bench.registry, missing,
                                     opts.calibration_samples, opts.calibration_seed, opts.jobs);
        stats.insert(stats.end(), fresh.begin(), fresh.end());
    }
    for (const auto& name : bench.registry.names()) {
        for (const auto& s : stats) {
            if (s.reward_name == name) {
                bench.stats.push_back(s);
                break;
            }
        }
    }
    return bench;
}

void ExperimentPlan::validate() const {
    if (seeds.empty()) {
        throw ConfigError("plan: no seeds");
    }
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size()) {
        throw ConfigError("plan: seeds must be distinct");
    }
}

int matched_evo_population(int bon_population, int num_steps, int num_evo_steps) {
    const std::int64_t budget = static_cast<std::int64_t>(bon_population) * num_steps;
    const std::int64_t per_candidate = num_steps + num_evo_steps;
    return static_cast<int>(std::max<std::int64_t>(1, budget / per_candidate));
}

std::vector<MetricRow> MetricTable::rows_for(std::string_view reward) const {
    std::vector<MetricRow> out;
    for (const auto& r : rows) {
        if (r.reward_name == reward) {
            out.push_back(r);
        }
    }
    return out;
}

std::vector<RunRecord> MetricTable::runs_for(std::string_view strategy, std::string_view scheme,
                                             std::optional<double> alpha, int population) const {
    std::vector<RunRecord> out;
    for (const auto& r : runs) {
        if (r.strategy == strategy && r.scheme == scheme && r.population == population &&
            same_alpha(r.alpha, alpha.value_or(kNaN))) {
            out.push_back(r);
        }
    }
    return out;
}

void MetricTable::append(const MetricTable& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    runs.insert(runs.end(), other.runs.begin(), other.runs.end());
}

MetricTable run_matrix(const ExperimentPlan& plan, const Workbench& bench) {
    plan.validate();
    if (plan.strategies.empty()) {
        throw ConfigError("plan: no strategies");
    }
    MetricTable table;
    for (SearchConfig tmpl : plan.strategies) {
        if (tmpl.strategy == Strategy::evosearch) {
            if (tmpl.evo_steps.empty()) {
                tmpl.evo_steps = default_evo_steps(bench.schedule);
            }
            if (plan.matched_nfe) {
                tmpl.population =
                    matched_evo_population(tmpl.population, bench.schedule.num_steps(),
                                           static_cast<int>(tmpl.evo_steps.size()));
            }
        }
        aggregate_into(table, run_cell(tmpl, plan, bench));
    }
    sort_canonical(table, bench.registry.names());
    return table;
}

MetricTable run_matrix(const ExperimentPlan& plan) {
    WorkbenchOptions opts;
    opts.task_seed = plan.task_seed;
    const Workbench bench = make_workbench(opts);
    return run_matrix(plan, bench);
}

MetricTable sweep_alpha(const SearchConfig& base, const std::vector<double>& alphas,
                        const ExperimentPlan& plan, const Workbench& bench) {
    plan.validate();
    if (base.guidance.scheme != Scheme::score || base.guidance.rewards.size() != 2) {
        throw ConfigError("sweep_alpha needs score guidance over exactly two rewards");
    }
    if (alphas.empty()) {
        throw ConfigError("sweep_alpha: no alpha values");
    }
    std::vector<RewardStats> stats;
    for (const auto& r : base.guidance.rewards) {
        stats.push_back(bench.stats_for(r));
    }
    std::vector<SearchConfig> cells;
    for (double a : alphas) {
        SearchConfig cfg = base;
        cfg.guidance = GuidanceConfig::score(base.guidance.rewards, {a, 1.0 - a}, stats);
        cells.push_back(std::move(cfg));
    }

    MetricTable table;
    if (base.strategy == Strategy::evosearch) {
        for (const auto& cfg : cells) {
            aggregate_into(table, run_cell(cfg, plan, bench));
        }
        sort_canonical(table, bench.registry.names());
        return table;
    }

    // Fixed pool: one pool per seed, scored once per prompt, re-selected per alpha.
    const auto prompts = plan_prompts(plan, bench.task);
    const SearchContext ctx = bench.context();
    std::vector<std::vector<RunRecord>> per_alpha(cells.size());
    for (std::uint64_t seed : plan.seeds) {
        std::vector<PromptAverager> avgs(cells.size());
        const std::string label = cell_label(cells.front()) + " seed=" + std::to_string(seed);
        const CandidatePool pool =
            with_cell(label, [&] { return generate_pool(ctx, base.population, seed, base.eta); });
        for (int p : prompts) {
            const auto& prompt = bench.task.prompt(p);
            const ScoreMatrix scores = with_cell(label, [&] { return score_pool(ctx, prompt, pool); });
            for (std::size_t a = 0; a < cells.size(); ++a) {
                const SearchConfig cfg = prepare(cells[a], seed, bench);
                avgs[a].add(with_cell(cell_label(cfg) + " seed=" + std::to_string(seed),
                                      [&] { return select_from_pool(ctx, prompt, pool, cfg, &scores); }));
            }
        }
        for (std::size_t a = 0; a < cells.size(); ++a) {
            per_alpha[a].push_back(avgs[a].finish(cells[a]));
        }
    }
    for (auto& recs : per_alpha) {
        aggregate_into(table, std::move(recs));
    }
    sort_canonical(table, bench.registry.names());
    return table;
}

MetricTable sweep_nfe(const SearchConfig& base, const std::vector<int>& populations,
                      const ExperimentPlan& plan, const Workbench& bench) {
    plan.validate();
    if (populations.empty()) {
        throw ConfigError("sweep_nfe: no populations");
    }
    for (std::size_t i = 0; i < populations.size(); ++i) {
        if (populations[i] < 1 || (i > 0 && populations[i] <= populations[i - 1])) {
            throw ConfigError("sweep_nfe: populations must be positive and increasing");
        }
    }
    MetricTable table;
    for (int n : populations) {
        SearchConfig bon = base;
        bon.strategy = Strategy::best_of_n;
        bon.population = n;
        aggregate_into(table, run_cell(bon, plan, bench));

        SearchConfig evo = base;
        evo.strategy = Strategy::evosearch;
        if (evo.evo_steps.empty()) {
            evo.evo_steps = default_evo_steps(bench.schedule);
        }
        evo.population = plan.matched_nfe
                             ? matched_evo_population(n, bench.schedule.num_steps(),
                                                      static_cast<int>(evo.evo_steps.size()))
                             : n;
        if (base.elite_count > 0) {
            evo.elite_count = std::min(base.elite_count, evo.population);
        }
        aggregate_into(table, run_cell(evo, plan, bench));
    }
    sort_canonical(table, bench.registry.names());
    return table;
}

Summary summarize(std::vector<double> values) {
    if (values.empty()) {
        throw PreconditionError("summarize: no values");
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    Summary s;
    s.min = values.front();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    s.max = values.back();
    s.mean = mean_of(values);
    s.stddev = std_of(values);
    return s;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
    return {{"min", s.min},   {"q1", s.q1},     {"median", s.median}, {"q3", s.q3},
            {"max", s.max},   {"mean", s.mean}, {"std", s.stddev}};
}

}  // namespace

nlohmann::json DistributionReport::to_json() const {
    nlohmann::json rewards = nlohmann::json::array();
    for (const auto& e : entries) {
        rewards.push_back({{"reward", e.reward},
                           {"raw", summary_json(e.raw)},
                           {"normalized", summary_json(e.normalized)}});
    }
    return {{"num_samples", num_samples}, {"seed", seed}, {"rewards", rewards}};
}

DistributionReport distribution_report(const Workbench& bench,
                                       const std::vector<std::string>& rewards,
                                       const std::vector<RewardStats>& stats, int num_samples,
                                       std::uint64_t seed) {
    if (rewards.size() != stats.size()) {
        throw ConfigError("distribution_report: one stats entry per reward is required");
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        if (stats[i].reward_name != rewards[i]) {
            throw ConfigError("distribution_report: stats order does not match rewards");
        }
        if (stats[i].task_fingerprint != bench.task.fingerprint()) {
            throw StaleStats("stats for '" + rewards[i] + "' belong to another task");
        }
    }
    const CalibrationSet set =
        generate_calibration_set(bench.task, bench.schedule, num_samples, seed, bench.jobs);
    DistributionReport report;
    report.num_samples = num_samples;
    report.seed = seed;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        const auto raw = score_calibration_set(set, bench.registry.get(rewards[i]), bench.task,
                                               bench.jobs);
        std::vector<double> z(raw.size());
        for (std::size_t j = 0; j < raw.size(); ++j) {
            z[j] = normalize(raw[j], stats[i]);
        }
        report.entries.push_back({rewards[i], summarize(raw), summarize(z)});
    }
    return report;
}

namespace {

std::string fmt_num(double v) {
    if (std::isnan(v)) {
        return "";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s) {
    if (s.empty()) {
        return kNaN;
    }
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) {
        throw ConfigError("csv: bad number '" + s + "'");
    }
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

}  // namespace

void emit_csv(const MetricTable& table, const std::filesystem::path& path) {
    if (table.rows.empty()) {
        throw PreconditionError("emit_csv: empty table");
    }
    auto out = open_out(path);
    out << kCsvHeader << '\n';
    for (const auto& r : table.rows) {
        out << r.strategy << ',' << r.scheme << ',' << fmt_num(r.alpha) << ',' << r.population
            << ',' << r.nfe << ',' << r.reward_name << ',' << fmt_num(r.raw_mean) << ','
            << fmt_num(r.raw_std) << ',' << fmt_num(r.z_mean) << ',' << fmt_num(r.z_std) << ','
            << fmt_num(r.guidance_mean) << ',' << fmt_num(r.guidance_std) << ',' << r.seeds
            << '\n';
    }
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

std::vector<MetricRow> parse_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw ConfigError("csv: unexpected header in " + path.string());
    }
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 13) {
            throw ConfigError("csv: expected 13 fields, got " + std::to_string(f.size()));
        }
        MetricRow r;
        r.strategy = f[0];
        r.scheme = f[1];
        r.alpha = parse_num(f[2]);
        r.population = std::stoi(f[3]);
        r.nfe = std::stoll(f[4]);
        r.reward_name = f[5];
        r.raw_mean = parse_num(f[6]);
        r.raw_std = parse_num(f[7]);
        r.z_mean = parse_num(f[8]);
        r.z_std = parse_num(f[9]);
        r.guidance_mean = parse_num(f[10]);
        r.guidance_std = parse_num(f[11]);
        r.seeds = std::stoi(f[12]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void emit_runs_csv(const MetricTable& table, const std::filesystem::path& path) {
    if (table.runs.empty()) {
        throw PreconditionError("emit_runs_csv: empty table");
    }
    auto out = open_out(path);
    out << "strategy,scheme,alpha,population,seed,nfe,guidance";
    const auto& rewards = table.runs.front().rewards;
    for (const auto& r : rewards) {
        out << ",raw_" << r << ",z_" << r;
    }
    out << '\n';
    for (const auto& run : table.runs) {
        out << run.strategy << ',' << run.scheme << ',' << fmt_num(run.alpha) << ','
            << run.population << ',' << run.seed << ',' << run.nfe << ','
            << fmt_num(run.guidance);
        for (std::size_t k = 0; k < run.raw.size(); ++k) {
            out << ',' << fmt_num(run.raw[k]) << ',' << fmt_num(run.z[k]);
        }
        out << '\n';
    }
}

}  // namespace its

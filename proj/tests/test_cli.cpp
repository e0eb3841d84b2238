#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "its/cli.hpp"
#include "its/rewards.hpp"
#include "its/toy_model.hpp"
#include "its/wav.hpp"

using namespace its;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("its_cli_" + name);
    fs::remove_all(p);
    return p;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "its");
    return run_cli(args);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) {
            cells.push_back(c);
        }
        if (!line.empty() && line.back() == ',') {
            cells.emplace_back();
        }
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("calibrate is bit-reproducible") {
    const fs::path a = scratch("cal_a");
    const fs::path b = scratch("cal_b");
    for (const auto& d : {a, b}) {
        REQUIRE(cli({"calibrate", "--task-seed", "0", "--samples", "256", "--seed", "7", "--out",
                     d.string()}) == 0);
    }
    for (const char* f : {"stats_alignment.json", "stats_quality.json"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    const RewardStats s = load_stats(a / "stats_alignment.json");
    CHECK(s.sample_count == 256);
    CHECK(s.task_fingerprint == build_default_task(0).fingerprint());
    const auto cfg = nlohmann::json::parse(slurp(a / "config.json"));
    CHECK(cfg.at("calibration").at("seed") == 7);
    CHECK(cfg.at("calibration").at("samples") == 256);
}

TEST_CASE("generate writes a reproducible result and WAV") {
    const fs::path a = scratch("gen_a");
    const fs::path b = scratch("gen_b");
    for (const auto& d : {a, b}) {
        REQUIRE(cli({"generate", "--strategy", "evosearch", "--scheme", "score", "--alpha", "0.5",
                     "--population", "8", "--seed", "3", "--out", d.string()}) == 0);
    }
    CHECK(slurp(a / "result.json") == slurp(b / "result.json"));
    CHECK(slurp(a / "selected.wav") == slurp(b / "selected.wav"));

    const auto result = nlohmann::json::parse(slurp(a / "result.json"));
    CHECK(result.at("strategy") == "evosearch");
    CHECK(result.at("population") == 8);
    CHECK(result.at("nfe") == 8 * 100 + 3 * 8);
    CHECK(result.at("seed") == 3);

    const WavData wav = read_wav_float32(a / "selected.wav");
    CHECK(wav.sample_rate == 16000);
    CHECK(wav.samples.size() == 4096);

    const auto cfg = nlohmann::json::parse(slurp(a / "config.json"));
    const auto& search = cfg.at("search");
    CHECK(search.at("evo_steps") == std::vector<int>{74, 50, 25});
    CHECK(search.at("elite_count") == 2);
    CHECK(search.at("mutation_scale") == 0.5);
    CHECK(search.at("guidance").at("weights") == std::vector<double>{0.5, 0.5});
    CHECK(search.at("guidance").at("stats").size() == 2);
}

TEST_CASE("a run is reproducible from its config echo") {
    const fs::path a = scratch("echo_a");
    REQUIRE(cli({"generate", "--strategy", "best_of_n", "--scheme", "rank", "--population", "5",
                 "--seed", "9", "--prompt", "2", "--out", a.string()}) == 0);
    auto argv = nlohmann::json::parse(slurp(a / "config.json")).at("argv").get<std::vector<std::string>>();
    const fs::path b = scratch("echo_b");
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
        if (argv[i] == "--out") {
            argv[i + 1] = b.string();
        }
    }
    REQUIRE(run_cli(argv) == 0);
    CHECK(slurp(a / "result.json") == slurp(b / "result.json"));
}

TEST_CASE("flags reach the configuration") {
    const fs::path d = scratch("flags");
    REQUIRE(cli({"generate", "--strategy", "evosearch", "--population", "6", "--evo-steps",
                 "80,40", "--elite-count", "3", "--mutation-scale", "0.25", "--scheme", "single",
                 "--reward", "quality", "--seed", "11", "--out", d.string()}) == 0);
    const auto s = nlohmann::json::parse(slurp(d / "config.json")).at("search");
    CHECK(s.at("population") == 6);
    CHECK(s.at("evo_steps") == std::vector<int>{80, 40});
    CHECK(s.at("elite_count") == 3);
    CHECK(s.at("mutation_scale") == 0.25);
    CHECK(s.at("master_seed") == 11);
    CHECK(s.at("guidance").at("scheme") == "single");
    CHECK(s.at("guidance").at("rewards") == std::vector<std::string>{"quality"});
    const auto r = nlohmann::json::parse(slurp(d / "result.json"));
    CHECK(r.at("nfe") == 6 * 100 + 2 * 6);
}

TEST_CASE("stats can be reused") {
    const fs::path cal = scratch("reuse_cal");
    REQUIRE(cli({"calibrate", "--samples", "32", "--seed", "4", "--out", cal.string()}) == 0);
    const fs::path d = scratch("reuse_gen");
    REQUIRE(cli({"generate", "--stats-dir", cal.string(), "--out", d.string()}) == 0);
    const auto cfg = nlohmann::json::parse(slurp(d / "config.json"));
    CHECK(cfg.at("stats")[0].at("sample_count") == 32);
}

TEST_CASE("alpha sweep selections are monotone per seed") {
    const fs::path d = scratch("sweep_alpha");
    REQUIRE(cli({"sweep-alpha", "--alphas", "0,0.25,0.5,0.75,1", "--seeds", "20", "--out",
                 d.string()}) == 0);
    CHECK(fs::exists(d / "sweep_alpha.csv"));
    CHECK(fs::exists(d / "sweep_alpha_alignment.svg"));
    const auto rows = read_csv(d / "runs.csv");
    REQUIRE(rows.size() == 1 + 5 * 20);
    const auto& header = rows[0];
    const auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        REQUIRE(it != header.end());
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t seed_c = col("seed");
    const std::size_t alpha_c = col("alpha");
    const std::size_t z_c = col("z_alignment");
    std::map<std::string, std::vector<std::pair<double, double>>> by_seed;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        by_seed[rows[i][seed_c]].push_back({std::stod(rows[i][alpha_c]), std::stod(rows[i][z_c])});
    }
    CHECK(by_seed.size() == 20);
    int violations = 0;
    for (auto& [seed, pts] : by_seed) {
        std::sort(pts.begin(), pts.end());
        for (std::size_t i = 1; i < pts.size(); ++i) {
            violations += pts[i].second < pts[i - 1].second;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("nfe sweep, matrix, task and report") {
    const fs::path nfe = scratch("nfe");
    REQUIRE(cli({"sweep-nfe", "--populations", "1,2,4", "--seeds", "2", "--matched-nfe", "--out",
                 nfe.string()}) == 0);
    CHECK(read_csv(nfe / "sweep_nfe.csv").size() == 1 + 3 * 2 * 2);

    const fs::path mx = scratch("matrix");
    REQUIRE(cli({"matrix", "--population", "4", "--seeds", "2", "--prompt", "0", "--out",
                 mx.string()}) == 0);
    // 3 strategies x 4 schemes x 2 rewards.
    CHECK(read_csv(mx / "matrix.csv").size() == 1 + 3 * 4 * 2);

    const fs::path tk = scratch("task");
    REQUIRE(cli({"task", "--task-seed", "5", "--out", tk.string()}) == 0);
    const Task t = Task::from_json(nlohmann::json::parse(slurp(tk / "task.json")));
    CHECK(t.fingerprint() == build_default_task(5).fingerprint());

    const fs::path rp = scratch("report");
    REQUIRE(cli({"report", "--csv", (nfe / "sweep_nfe.csv").string(), "--out", rp.string()}) == 0);
    CHECK(fs::exists(rp / "sweep_nfe_quality.svg"));
    const fs::path dist = scratch("dist");
    REQUIRE(cli({"report", "--samples", "64", "--out", dist.string()}) == 0);
    CHECK(fs::exists(dist / "distribution.svg"));
    const auto doc = nlohmann::json::parse(slurp(dist / "distribution.json"));
    CHECK(doc.at("num_samples") == 64);
}

TEST_CASE("external worker from the command line") {
    const fs::path tk = scratch("worker_task");
    REQUIRE(cli({"task", "--out", tk.string()}) == 0);
    const std::string cmd = std::string(ITS_FAKE_WORKER) + " --task " + (tk / "task.json").string();
    const fs::path d = scratch("worker_gen");
    REQUIRE(cli({"generate", "--worker", cmd, "--scheme", "single", "--reward", "alignment_ext",
                 "--population", "4", "--calibration-samples", "16", "--out", d.string()}) == 0);
    const auto cfg = nlohmann::json::parse(slurp(d / "config.json"));
    CHECK(cfg.at("rewards").size() == 3);
    CHECK(cfg.at("rewards")[2].at("kind") == "external");
}

TEST_CASE("exit codes") {
    const std::string out = scratch("usage").string();
    CHECK(cli({}) == 1);
    CHECK(cli({"frobnicate"}) == 1);
    CHECK(cli({"generate"}) == 1);
    CHECK(cli({"generate", "--out", out, "--bogus"}) == 1);
    CHECK(cli({"generate", "--out", out, "--strategy", "beam"}) == 1);
    CHECK(cli({"generate", "--out", out, "--alpha", "1.5"}) == 1);
    CHECK(cli({"generate", "--out", out, "--scheme", "single", "--reward", "nope"}) == 1);
    CHECK(cli({"generate", "--out", out, "--strategy", "naive", "--prompt", "nine"}) == 1);
    CHECK(cli({"generate", "--out", out, "--population", "abc"}) == 1);
    CHECK(cli({"generate", "--out", out, "--strategy", "evosearch", "--evo-steps", "10,20"}) == 1);
    CHECK(cli({"sweep-alpha", "--out", out, "--alphas", "0,2"}) == 1);
    CHECK(cli({"sweep-nfe", "--out", out, "--populations", "4,2"}) == 1);
    CHECK(cli({"calibrate", "--out", out, "--samples", "1"}) == 1);
    CHECK_FALSE(fs::exists(out));
    CHECK(cli({"generate", "--out", out, "--worker", "/nonexistent/worker"}) == 2);
    CHECK(cli({"--help"}) == 0);
}

}

#include <cstdlib>
#include <functional>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "its/error.hpp"
#include "its/extern_reward.hpp"
#include "its/harness.hpp"
#include "its/rewards.hpp"
#include "its/search.hpp"
#include "its/toy_model.hpp"

using namespace its;
namespace fs = std::filesystem;

namespace {

const Task& task() {
    static const Task t = build_default_task(0);
    return t;
}

const std::string& task_path() {
    static const std::string p = [] {
        const fs::path path = fs::temp_directory_path() / "its_extern_task.json";
        std::ofstream(path) << task().to_json().dump();
        return path.string();
    }();
    return p;
}

std::vector<std::string> worker(std::vector<std::string> extra = {}) {
    std::vector<std::string> argv = {ITS_FAKE_WORKER, "--task", task_path()};
    argv.insert(argv.end(), extra.begin(), extra.end());
    return argv;
}

WorkerTimeouts quick() {
    WorkerTimeouts t;
    t.handshake = std::chrono::milliseconds(3000);
    t.response = std::chrono::milliseconds(3000);
    return t;
}

std::span<const double> view(const Waveform& w) { return {w.data(), static_cast<std::size_t>(w.size())}; }

Waveform random_waveform(RandomStream& rng) {
    return decode_waveform(rng.normal_vector(12), task().decoder());
}

WorkerErrorKind failure_kind(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const WorkerError& e) {
        return e.kind();
    }
    FAIL("expected a worker error");
    return WorkerErrorKind::spawn_failure;
}

}  // namespace

TEST_SUITE("extern_reward") {

TEST_CASE("handshake") {
    auto h = spawn_worker(worker(), quick());
    CHECK(h->protocol_version() == 1);
    CHECK(h->reward_name() == "alignment_ext");
    CHECK(h->alive());
    CHECK(h->request_count() == 0);
}

TEST_CASE("spawn failures") {
    CHECK(failure_kind([] { spawn_worker({"/nonexistent/its-worker"}, quick()); }) ==
          WorkerErrorKind::spawn_failure);
    CHECK(failure_kind([] { spawn_worker({}, quick()); }) == WorkerErrorKind::spawn_failure);
    CHECK(failure_kind([] { spawn_worker(worker({"--protocol", "99"}), quick()); }) ==
          WorkerErrorKind::version_mismatch);
    WorkerTimeouts t = quick();
    t.handshake = std::chrono::milliseconds(200);
    CHECK(failure_kind([&] { spawn_worker(worker({"--no-hello"}), t); }) ==
          WorkerErrorKind::handshake_timeout);
    // A worker that exits before the handshake.
    CHECK(failure_kind([] { spawn_worker({"/bin/true"}, quick()); }) == WorkerErrorKind::crashed);
}

TEST_CASE("worker reproduces the in-process reward") {
    auto h = spawn_worker(worker(), quick());
    RandomStream rng(17);
    for (int i = 0; i < 50; ++i) {
        const Waveform w = random_waveform(rng);
        const PromptSpec& p = task().prompt(i % 4);
        const double remote = h->request_reward(view(w), 16000.0, p.id);
        CHECK(std::abs(remote - reward_alignment(w, p)) < 1e-6);
    }
    CHECK(h->request_count() == 50);
}

TEST_CASE("empty waveform is rejected before sending") {
    auto h = spawn_worker(worker(), quick());
    const Waveform empty;
    CHECK_THROWS_AS(h->request_reward(view(empty), 16000.0, task().prompt(0).id), PreconditionError);
    CHECK(h->request_count() == 0);
    CHECK(h->alive());
    RandomStream rng(1);
    // The next request still gets id 1, which the worker checks.
    CHECK_NOTHROW(h->request_reward(view(random_waveform(rng)), 16000.0, task().prompt(0).id));
}

TEST_CASE("protocol failures") {
    RandomStream rng(2);
    const Waveform w = random_waveform(rng);
    const std::string p = task().prompt(0).id;
    auto expect = [&](std::vector<std::string> flags, WorkerErrorKind kind, WorkerTimeouts t) {
        auto h = spawn_worker(worker(flags), t);
        CHECK_NOTHROW(h->request_reward(view(w), 16000.0, p));
        CHECK(failure_kind([&] { h->request_reward(view(w), 16000.0, p); }) == kind);
        CHECK_FALSE(h->alive());
        CHECK(failure_kind([&] { h->request_reward(view(w), 16000.0, p); }) ==
              WorkerErrorKind::crashed);
    };
    expect({"--crash-on", "2"}, WorkerErrorKind::crashed, quick());
    expect({"--error-on", "2"}, WorkerErrorKind::remote_error, quick());
    expect({"--garbage-on", "2"}, WorkerErrorKind::malformed_response, quick());
    expect({"--wrong-id-on", "2"}, WorkerErrorKind::id_mismatch, quick());
    WorkerTimeouts t = quick();
    t.response = std::chrono::milliseconds(300);
    expect({"--hang-on", "2"}, WorkerErrorKind::response_timeout, t);
}

TEST_CASE("interleaved handles never cross-match") {
    auto a = spawn_worker(worker({"--name", "a"}), quick());
    auto b = spawn_worker(worker({"--name", "b"}), quick());
    RandomStream rng(3);
    for (int i = 0; i < 10; ++i) {
        const Waveform wa = random_waveform(rng);
        const Waveform wb = random_waveform(rng);
        const double ra = a->request_reward(view(wa), 16000.0, task().prompt(1).id);
        const double rb = b->request_reward(view(wb), 16000.0, task().prompt(2).id);
        CHECK(std::abs(ra - reward_alignment(wa, task().prompt(1))) < 1e-6);
        CHECK(std::abs(rb - reward_alignment(wb, task().prompt(2))) < 1e-6);
    }
    CHECK(a->request_count() == 10);
    CHECK(b->request_count() == 10);
}

TEST_CASE("external calibration and selection match in-process") {
    const Schedule s = make_schedule();
    RewardRegistry reg = builtin_registry();
    const RewardSpec ext = external_reward(spawn_worker(worker(), quick()));
    CHECK(ext.kind == RewardKind::external);
    reg.add(ext);
    const std::vector<std::string> names = {"alignment", "alignment_ext"};
    CHECK(reg.any_external(names));
    const auto stats = calibrate_stats(task(), s, reg, names, 64, 5, 4);
    CHECK(std::abs(stats[0].mu - stats[1].mu) < 1e-6);
    CHECK(std::abs(stats[0].sigma - stats[1].sigma) < 1e-6);

    const SearchContext ctx{task(), s, reg, {}, 2};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SearchConfig c;
        c.strategy = Strategy::best_of_n;
        c.population = 8;
        c.master_seed = seed;
        c.guidance = GuidanceConfig::single("alignment");
        const RunResult in = run_best_of_n(ctx, task().prompt(seed % 4), c);
        c.guidance = GuidanceConfig::single("alignment_ext");
        const RunResult out = run_best_of_n(ctx, task().prompt(seed % 4), c);
        CHECK(in.selected_index == out.selected_index);
    }
}

TEST_CASE("a crashing worker aborts the run with the cell identified") {
    RewardRegistry reg = builtin_registry();
    reg.add(external_reward(spawn_worker(worker({"--crash-on", "5"}), quick())));
    // Stats are supplied so calibration does not touch the worker.
    const Workbench base = make_workbench(WorkbenchOptions{});
    RewardStats ext = base.stats_for("alignment");
    ext.reward_name = "alignment_ext";
    const Workbench bench = make_workbench(WorkbenchOptions{}, std::move(reg),
                                           {base.stats[0], base.stats[1], ext});
    ExperimentPlan plan;
    SearchConfig c;
    c.strategy = Strategy::best_of_n;
    c.population = 4;
    c.guidance = GuidanceConfig::single("alignment_ext");
    plan.strategies = {c};
    try {
        run_matrix(plan, bench);
        FAIL("expected the run to abort");
    } catch (const CellError& e) {
        CHECK(e.cell().find("best_of_n/single:alignment_ext/N=4 seed=0 prompt=1") !=
              std::string::npos);
        CHECK(std::string(e.what()).find("worker crashed") != std::string::npos);
    }
}

TEST_CASE("timeouts from the environment") {
    ::setenv("ITS_WORKER_TIMEOUT_MS", "1234", 1);
    ::setenv("ITS_WORKER_HANDSHAKE_TIMEOUT_MS", "55", 1);
    const WorkerTimeouts t = WorkerTimeouts::from_env();
    CHECK(t.response.count() == 1234);
    CHECK(t.handshake.count() == 55);
    ::setenv("ITS_WORKER_TIMEOUT_MS", "soon", 1);
    CHECK_THROWS_AS(WorkerTimeouts::from_env(), ConfigError);
    ::unsetenv("ITS_WORKER_TIMEOUT_MS");
    ::unsetenv("ITS_WORKER_HANDSHAKE_TIMEOUT_MS");
    const WorkerTimeouts d = WorkerTimeouts::from_env();
    CHECK(d.handshake.count() == 10000);
    CHECK(d.response.count() == 60000);
}

TEST_CASE("audio encoding") {
    for (int n : {1, 2, 3, 4, 5, 4096}) {
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) {
            v[i] = std::sin(0.37 * i) * (i + 1);
        }
        const std::string b64 = encode_audio_b64(v);
        CHECK(b64.size() % 4 == 0);
        const auto back = decode_audio_b64(b64);
        REQUIRE(back.size() == static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            CHECK(back[i] == static_cast<float>(v[i]));
        }
    }
    // 1.0f little-endian is 00 00 80 3f.
    CHECK(encode_audio_b64(std::vector<double>{1.0}) == "AACAPw==");
    CHECK_THROWS_AS(decode_audio_b64("abc"), ConfigError);
    CHECK_THROWS_AS(decode_audio_b64("AAAA"), ConfigError);
}

TEST_CASE("command splitting") {
    CHECK(split_command("python3 worker.py --task 'a b.json'") ==
          std::vector<std::string>{"python3", "worker.py", "--task", "a b.json"});
    CHECK_THROWS_AS(split_command("   "), ConfigError);
    CHECK_THROWS_AS(split_command("echo $(rm -rf /)"), ConfigError);
}

}

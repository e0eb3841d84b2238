#include "its/extern_reward.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>
#include <wordexp.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <thread>

#include <openssl/evp.h>

#include "json.hpp"

extern char** environ;

namespace its {

std::string_view to_string(WorkerErrorKind kind) {
    switch (kind) {
        case WorkerErrorKind::spawn_failure: return "spawn failure";
        case WorkerErrorKind::version_mismatch: return "protocol version mismatch";
        case WorkerErrorKind::handshake_timeout: return "handshake timeout";
        case WorkerErrorKind::response_timeout: return "response timeout";
        case WorkerErrorKind::crashed: return "worker crashed";
        case WorkerErrorKind::malformed_response: return "malformed response";
        case WorkerErrorKind::id_mismatch: return "response id mismatch";
        case WorkerErrorKind::remote_error: return "worker error";
    }
    return "worker failure";
}

namespace {

std::chrono::milliseconds env_ms(const char* name, std::chrono::milliseconds fallback) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') {
        return fallback;
    }
    char* end = nullptr;
    const long long ms = std::strtoll(v, &end, 10);
    if (end == v || *end != '\0' || ms <= 0) {
        throw ConfigError(std::string(name) + " must be a positive integer (milliseconds)");
    }
    return std::chrono::milliseconds(ms);
}

void ignore_sigpipe_once() {
    // A dead worker must surface as EPIPE on write, not kill the engine.
    static const bool done = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

}  // namespace

WorkerTimeouts WorkerTimeouts::from_env() {
    WorkerTimeouts t;
    t.handshake = env_ms("ITS_WORKER_HANDSHAKE_TIMEOUT_MS", t.handshake);
    t.response = env_ms("ITS_WORKER_TIMEOUT_MS", t.response);
    return t;
}

std::unique_ptr<WorkerHandle> WorkerHandle::spawn(const std::vector<std::string>& argv,
                                                  WorkerTimeouts timeouts) {
    if (argv.empty()) {
        throw WorkerError(WorkerErrorKind::spawn_failure, "empty command line");
    }
    ignore_sigpipe_once();
    int in_pipe[2];
    int out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) {
        throw WorkerError(WorkerErrorKind::spawn_failure, std::strerror(errno));
    }
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
        const int err = errno;
        close(in_pipe[0]);
        close(in_pipe[1]);
        throw WorkerError(WorkerErrorKind::spawn_failure, std::strerror(err));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (const auto& a : argv) {
        args.push_back(const_cast<char*>(a.c_str()));
    }
    args.push_back(nullptr);

    pid_t pid = -1;
    const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    close(in_pipe[0]);
    close(out_pipe[1]);
    if (rc != 0) {
        close(in_pipe[1]);
        close(out_pipe[0]);
        throw WorkerError(WorkerErrorKind::spawn_failure,
                          "cannot execute '" + argv[0] + "': " + std::strerror(rc));
    }

    std::unique_ptr<WorkerHandle> h(new WorkerHandle());
    h->pid_ = pid;
    h->to_worker_ = in_pipe[1];
    h->from_worker_ = out_pipe[0];
    h->alive_ = true;
    h->timeouts_ = timeouts;

    const std::string line = h->read_line(timeouts.handshake, WorkerErrorKind::handshake_timeout);
    nlohmann::json hello;
    try {
        hello = nlohmann::json::parse(line).at("hello");
        h->protocol_ = hello.at("protocol").get<int>();
        h->reward_name_ = hello.at("reward_name").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        h->fail(WorkerErrorKind::malformed_response, "bad handshake '" + line + "': " + e.what());
    }
    if (h->protocol_ != kWorkerProtocolVersion) {
        h->fail(WorkerErrorKind::version_mismatch,
                "worker speaks protocol " + std::to_string(h->protocol_) + ", engine speaks " +
                    std::to_string(kWorkerProtocolVersion));
    }
    if (h->reward_name_.empty()) {
        h->fail(WorkerErrorKind::malformed_response, "worker declared an empty reward name");
    }
    return h;
}

WorkerHandle::~WorkerHandle() { terminate(); }

void WorkerHandle::terminate() noexcept {
    if (to_worker_ >= 0) {
        close(to_worker_);
        to_worker_ = -1;
    }
    if (from_worker_ >= 0) {
        close(from_worker_);
        from_worker_ = -1;
    }
    if (pid_ > 0) {
        // Closing stdin asks the worker to exit; give it a moment, then kill.
        for (int i = 0; i < 50; ++i) {
            int status = 0;
            const pid_t r = waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || (r < 0 && errno != EINTR)) {
                pid_ = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        if (pid_ > 0) {
            kill(pid_, SIGKILL);
            int status = 0;
            while (waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
            }
            pid_ = -1;
        }
    }
    alive_ = false;
}

void WorkerHandle::fail(WorkerErrorKind kind, const std::string& what) {
    terminate();
    throw WorkerError(kind, what);
}

std::string WorkerHandle::read_line(std::chrono::milliseconds timeout, WorkerErrorKind on_timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            fail(on_timeout, "no response within " + std::to_string(timeout.count()) + " ms");
        }
        pollfd pfd{from_worker_, POLLIN, 0};
        const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            fail(WorkerErrorKind::crashed, std::string("poll: ") + std::strerror(errno));
        }
        if (ready == 0) {
            continue;
        }
        char chunk[65536];
        const ssize_t n = read(from_worker_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            fail(WorkerErrorKind::crashed, std::string("read: ") + std::strerror(errno));
        }
        if (n == 0) {
            fail(WorkerErrorKind::crashed, "worker closed its output");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void WorkerHandle::write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = write(to_worker_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            fail(WorkerErrorKind::crashed, std::string("write: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

double WorkerHandle::request_reward(std::span<const double> waveform, double sample_rate,
                                    const std::string& prompt) {
    if (waveform.empty()) {
        throw PreconditionError("external reward: zero-length waveform");
    }
    if (!alive_) {
        throw WorkerError(WorkerErrorKind::crashed, "worker '" + reward_name_ + "' is not running");
    }
    const std::int64_t id = ++next_id_;
    nlohmann::json req = {{"id", id},
                          {"sample_rate", sample_rate},
                          {"prompt", prompt},
                          {"audio_b64", encode_audio_b64(waveform)}};
    write_all(req.dump() + "\n");

    const std::string line = read_line(timeouts_.response, WorkerErrorKind::response_timeout);
    nlohmann::json resp;
    try {
        resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(WorkerErrorKind::malformed_response, "'" + line + "': " + e.what());
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer()) {
        fail(WorkerErrorKind::malformed_response, "response without integer id: " + line);
    }
    const auto got = resp["id"].get<std::int64_t>();
    if (got != id) {
        fail(WorkerErrorKind::id_mismatch,
             "expected id " + std::to_string(id) + ", got " + std::to_string(got));
    }
    if (resp.contains("error")) {
        const std::string msg =
            resp["error"].is_string() ? resp["error"].get<std::string>() : resp["error"].dump();
        fail(WorkerErrorKind::remote_error, msg);
    }
    if (!resp.contains("reward") || !resp["reward"].is_number()) {
        fail(WorkerErrorKind::malformed_response, "response without numeric reward: " + line);
    }
    return resp["reward"].get<double>();
}

std::shared_ptr<WorkerHandle> spawn_worker(const std::vector<std::string>& argv,
                                           WorkerTimeouts timeouts) {
    return WorkerHandle::spawn(argv, timeouts);
}

std::vector<std::string> split_command(const std::string& command) {
    wordexp_t we;
    const int rc = wordexp(command.c_str(), &we, WRDE_NOCMD | WRDE_UNDEF);
    if (rc != 0) {
        if (rc == WRDE_NOSPACE) {
            wordfree(&we);
        }
        throw ConfigError("cannot parse worker command '" + command + "'");
    }
    std::vector<std::string> out(we.we_wordv, we.we_wordv + we.we_wordc);
    wordfree(&we);
    if (out.empty()) {
        throw ConfigError("empty worker command");
    }
    return out;
}

RewardSpec external_reward(std::shared_ptr<WorkerHandle> handle) {
    if (!handle) {
        throw ConfigError("external_reward: null worker handle");
    }
    auto lock = std::make_shared<std::mutex>();
    RewardSpec spec;
    spec.name = handle->reward_name();
    spec.kind = RewardKind::external;
    spec.evaluate = [handle, lock](const Waveform& w, const PromptSpec& prompt, const Task& task) {
        std::lock_guard guard(*lock);
        return handle->request_reward(std::span<const double>(w.data(), w.size()),
                                      task.decoder().sample_rate(), prompt.id);
    };
    return spec;
}

std::string encode_audio_b64(std::span<const double> samples) {
    std::vector<unsigned char> bytes(samples.size() * 4);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const float f = static_cast<float>(samples[i]);
        std::memcpy(bytes.data() + 4 * i, &f, 4);  // host is little-endian
    }
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<float> decode_audio_b64(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw ConfigError("base64 audio: length is not a multiple of 4");
    }
    std::vector<unsigned char> bytes(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw ConfigError("base64 audio: invalid encoding");
    }
    std::size_t len = static_cast<std::size_t>(n);
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    if (!text.empty() && text.back() == '=') --len;
    if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
    if (len % 4 != 0) {
        throw ConfigError("base64 audio: byte count is not a multiple of 4");
    }
    std::vector<float> out(len / 4);
    std::memcpy(out.data(), bytes.data(), len);
    return out;
}

}  // namespace its

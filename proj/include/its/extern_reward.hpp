#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "its/error.hpp"
#include "its/rewards.hpp"

namespace its {

// Client side of the external reward protocol: newline-delimited JSON over a
// child process's stdin/stdout, one request in flight at a time.
//
//   worker -> {"hello": {"protocol": 1, "reward_name": "<name>"}}
//   engine -> {"id": n, "sample_rate": sr, "prompt": "<text>", "audio_b64": "<f32le>"}
//   worker -> {"id": n, "reward": r}   or   {"id": n, "error": "<message>"}

enum class WorkerErrorKind {
    spawn_failure,
    version_mismatch,
    handshake_timeout,
    response_timeout,
    crashed,
    malformed_response,
    id_mismatch,
    remote_error,
};

std::string_view to_string(WorkerErrorKind kind);

class WorkerError : public Error {
public:
    WorkerError(WorkerErrorKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    WorkerErrorKind kind() const noexcept { return kind_; }

private:
    WorkerErrorKind kind_;
};

struct WorkerTimeouts {
    std::chrono::milliseconds handshake{10'000};
    std::chrono::milliseconds response{60'000};

    /// Defaults overridden by ITS_WORKER_HANDSHAKE_TIMEOUT_MS and
    /// ITS_WORKER_TIMEOUT_MS when set.
    static WorkerTimeouts from_env();
};

inline constexpr int kWorkerProtocolVersion = 1;

class WorkerHandle {
public:
    /// Launches argv[0] (searched on PATH) and completes the handshake.
    static std::unique_ptr<WorkerHandle> spawn(const std::vector<std::string>& argv,
                                               WorkerTimeouts timeouts = WorkerTimeouts::from_env());

    WorkerHandle(const WorkerHandle&) = delete;
    WorkerHandle& operator=(const WorkerHandle&) = delete;
    ~WorkerHandle();

    /// Sends one request and blocks for its response. Throws
    /// PreconditionError for an empty waveform (nothing is sent) and
    /// WorkerError for protocol or process failures; after a WorkerError the
    /// handle is dead.
    double request_reward(std::span<const double> waveform, double sample_rate,
                          const std::string& prompt);

    int protocol_version() const noexcept { return protocol_; }
    const std::string& reward_name() const noexcept { return reward_name_; }
    std::int64_t request_count() const noexcept { return next_id_; }
    pid_t pid() const noexcept { return pid_; }
    bool alive() const noexcept { return alive_; }

private:
    WorkerHandle() = default;

    std::string read_line(std::chrono::milliseconds timeout, WorkerErrorKind on_timeout);
    void write_all(const std::string& data);
    [[noreturn]] void fail(WorkerErrorKind kind, const std::string& what);
    void terminate() noexcept;

    pid_t pid_ = -1;
    int to_worker_ = -1;
    int from_worker_ = -1;
    std::string buffer_;
    int protocol_ = 0;
    std::string reward_name_;
    std::int64_t next_id_ = 0;
    bool alive_ = false;
    WorkerTimeouts timeouts_;
};

std::shared_ptr<WorkerHandle> spawn_worker(const std::vector<std::string>& argv,
                                           WorkerTimeouts timeouts = WorkerTimeouts::from_env());

/// Splits a command string with shell word rules (no command substitution).
std::vector<std::string> split_command(const std::string& command);

/// Registers the worker's declared reward as kind=external. The prompt id is
/// sent as the prompt text and the decoder's rate as the sample rate.
RewardSpec external_reward(std::shared_ptr<WorkerHandle> handle);

/// float32 little-endian samples, base64-encoded.
std::string encode_audio_b64(std::span<const double> samples);
std::vector<float> decode_audio_b64(std::string_view text);

}  // namespace its

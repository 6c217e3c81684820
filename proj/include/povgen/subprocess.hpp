#pragma once
// POSIX subprocess control. Children run in their own process group so a
// timeout can kill the whole tree; both output pipes are drained with poll
// under a deadline. Used by the generator runtime, the target harness, the
// debugger backends, corpus jobs and the process agent backend.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace povgen::proc {

struct RunRequest {
    std::vector<std::string> argv;
    std::optional<std::string> stdin_bytes;  // nullopt: stdin is /dev/null
    std::filesystem::path cwd;               // empty: inherit
    std::map<std::string, std::string> env;  // overlaid on the inherited environment
    std::chrono::milliseconds timeout{10000};
    std::size_t stdout_cap = 64ull << 20;
    std::size_t stderr_cap = 1ull << 20;
    // false: keep the head and set truncated when the cap is exceeded
    // true:  keep only the most recent cap bytes (log-tail retention)
    bool stdout_keep_tail = false;
    bool stderr_keep_tail = false;
};

struct RunResult {
    bool spawned = false;
    std::string spawn_error;
    bool timed_out = false;
    int exit_code = -1;    // valid when exited normally
    int term_signal = 0;   // nonzero when terminated by a signal
    bool exited = false;   // true when the child exited (vs signaled/killed)
    std::string stdout_data;
    std::string stderr_data;
    bool stdout_truncated = false;
    bool stderr_truncated = false;
    std::chrono::milliseconds wall{0};
};

RunResult run_process(const RunRequest& req);

// Long-lived child with both pipes held open (debugger sessions, agent
// processes). Line reads are deadline-bounded.
class PipeProcess {
  public:
    PipeProcess() = default;
    ~PipeProcess();
    PipeProcess(const PipeProcess&) = delete;
    PipeProcess& operator=(const PipeProcess&) = delete;

    bool start(const std::vector<std::string>& argv, const std::filesystem::path& cwd = {},
               const std::map<std::string, std::string>& env = {});
    bool running() const;

    bool write_all(const std::string& data);
    void close_stdin();

    // Reads one '\n'-terminated line (returned without the terminator).
    // nullopt on timeout; empty-and-eof() on stream end.
    std::optional<std::string> read_line(std::chrono::milliseconds timeout);

    // Raw read: whatever bytes are available within the deadline (buffered
    // bytes first). nullopt on timeout with nothing buffered.
    std::optional<std::string> read_chunk(std::chrono::milliseconds timeout);
    bool eof() const { return eof_; }

    void kill_group();
    // Waits for exit, killing the group first if `force`. Returns exit code
    // or -signal for signal deaths.
    int wait(bool force = false);

    int pid() const { return pid_; }
    const std::string& spawn_error() const { return spawn_error_; }

  private:
    int pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    bool eof_ = false;
    bool reaped_ = false;
    int status_ = 0;
    std::string buffer_;
    std::string spawn_error_;
};

// Splits a command template into argv. Understands double/single quotes and
// backslash escapes outside single quotes; no variable expansion.
std::vector<std::string> split_command(const std::string& cmd);

// Counts live direct children of this process (via /proc scan). Test support
// for the no-orphan-processes invariant.
int count_live_children();

}  // namespace povgen::proc

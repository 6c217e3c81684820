#pragma once
// GDB machine-interface (MI2) client: a line-record parser and a session
// driver over pipes. The reference backend for source-level breakpoints,
// expression evaluation and callstack capture.

#include "povgen/errors.hpp"
#include "povgen/subprocess.hpp"

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace povgen::mi {

struct Record {
    enum class Type {
        Result,        // ^done, ^error, ^running ...
        ExecAsync,     // *stopped, *running
        StatusAsync,   // +...
        NotifyAsync,   // =breakpoint-modified, =thread-group-exited ...
        ConsoleStream, // ~"text"
        TargetStream,  // @"text"
        LogStream,     // &"text"
        Prompt,        // (gdb)
        Unknown,
    };
    Type type = Type::Unknown;
    std::string cls;      // done/error/stopped/...
    Json results;         // parsed name=value pairs
    std::string stream;   // stream-record payload
};

// Parses a single MI output line.
Record parse_line(const std::string& line);

// One debugger process speaking MI on its pipes. Commands are synchronous:
// issue, then collect async records until the matching result record.
class GdbSession {
  public:
    struct CommandResult {
        Record result;                 // the ^... record
        std::vector<Record> async;     // everything seen before it
    };

    Result<void> start(const std::vector<std::string>& target_argv,
                       const std::filesystem::path& cwd,
                       const std::map<std::string, std::string>& env,
                       std::chrono::milliseconds deadline_budget);

    // Sends one MI command and waits for its result record.
    Result<CommandResult> command(const std::string& cmd);

    // Waits for the next *stopped (or process-exit) record.
    Result<Record> wait_stop();

    // Remaining budget; the session kills the debuggee when it expires.
    std::chrono::milliseconds remaining() const;
    bool expired() const { return remaining() <= std::chrono::milliseconds(0); }

    // Inferior exit bookkeeping, filled in as notify records arrive.
    bool inferior_exited() const { return inferior_exited_; }
    int inferior_exit_code() const { return inferior_exit_code_; }
    std::string crash_signal() const { return crash_signal_; }

    std::optional<int> insert_breakpoint(const std::string& location, bool temporary = false);
    void delete_breakpoint(int number);
    Result<void> run_redirected(const std::filesystem::path& stdout_file,
                                const std::filesystem::path& stderr_file);
    std::string evaluate(const std::string& expr);  // "<eval-error: ...>" on failure
    struct Frame {
        std::string function;
        std::string location;  // file:line
    };
    std::vector<Frame> frames();
    Result<void> resume();

    void kill();
    ~GdbSession();

  private:
    void note_async(const Record& rec);
    Result<Record> next_record(std::chrono::milliseconds timeout);

    proc::PipeProcess proc_;
    std::vector<std::string> target_args_;
    std::chrono::steady_clock::time_point deadline_;
    bool inferior_exited_ = false;
    int inferior_exit_code_ = -1;
    std::string crash_signal_;
};

}  // namespace povgen::mi

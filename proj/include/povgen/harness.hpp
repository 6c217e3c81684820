#pragma once
// Executes the program under test on generated inputs and classifies the
// outcome from reached/triggered log signals. The breakpoint path drives the
// debugger backend to capture runtime evidence; the plain path never spawns
// a debugger.

#include "povgen/errors.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace povgen::harness {

struct TargetConfig {
    std::string cmd;  // command template; must contain {input} exactly once
    std::map<std::string, std::string> env;
    std::filesystem::path cwd;
    std::chrono::milliseconds run_timeout{10000};
    std::string reached_pattern;
    std::string triggered_pattern;

    Result<void> validate() const;
    Result<std::vector<std::string>> argv_for(const std::string& input_path) const;
    Json to_json() const;
    static Result<TargetConfig> from_json(const Json& j);
};

enum class Classification { Triggered, Reached, NoReach, Timeout, Error };

const char* to_string(Classification c);

struct ExecutionOutcome {
    Classification classification = Classification::Error;
    bool exited = false;
    int exit_code = -1;
    int term_signal = 0;
    std::string stdout_tail;
    std::string stderr_tail;
    std::chrono::milliseconds wall{0};
    std::string detail;  // spawn failure or crash note

    Json to_json() const;
};

// Pure classification: reproducible from captured output and exit facts.
Classification classify(const TargetConfig& target, const std::string& stdout_tail,
                        const std::string& stderr_tail, bool spawn_failed, bool timed_out,
                        int term_signal);

ExecutionOutcome run_plain(const TargetConfig& target, const std::string& input);

struct BreakpointSpec {
    std::string location;  // file:line
    std::vector<std::string> inline_expr;
    std::uint64_t hit_limit = 1;

    Json to_json() const;
    static Result<BreakpointSpec> from_json(const Json& j);
};

struct StackFrame {
    std::string function;
    std::string location;  // file:line, may be empty for unknown frames

    Json to_json() const;
};

struct BreakpointHit {
    std::string location;
    std::uint64_t hit_index = 0;  // 1-based per spec entry
    std::map<std::string, std::string> values;
    std::vector<StackFrame> callstack;

    Json to_json() const;
};

struct BreakpointRunResult {
    ExecutionOutcome outcome;
    std::vector<BreakpointHit> hits;
    std::vector<std::string> unresolved;  // breakpoint locations gdb rejected
};

BreakpointRunResult run_with_breakpoints(const TargetConfig& target, const std::string& input,
                                         const std::vector<BreakpointSpec>& breaks);

// Interactive debugger session (the launch_gdb surface). Console dialect;
// the transcript accumulates everything the debugger prints.
class DebugSession {
  public:
    enum class State { Idle, Running, AtBreak, Exited };

    static Result<std::unique_ptr<DebugSession>> open(
        const std::vector<std::string>& cmd, std::chrono::milliseconds command_timeout,
        const std::filesystem::path& cwd = {});

    Result<std::string> send(const std::string& command);  // transcript delta
    void close();
    bool closed() const { return closed_; }
    State state() const { return state_; }
    const std::string& transcript() const { return transcript_; }

    ~DebugSession();

  private:
    DebugSession() = default;
    Result<std::string> read_to_prompt();

    class Impl;
    std::unique_ptr<Impl> impl_;
    std::string transcript_;
    State state_ = State::Idle;
    bool closed_ = false;
    std::chrono::milliseconds timeout_{10000};
};

}  // namespace povgen::harness

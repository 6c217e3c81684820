#include "povgen/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <stdexcept>

extern char** environ;

namespace povgen::proc {
namespace {

using Clock = std::chrono::steady_clock;

struct SigPipeGuard {
    SigPipeGuard() { ::signal(SIGPIPE, SIG_IGN); }
};

void ignore_sigpipe() { static SigPipeGuard guard; }

void append_capped(std::string& sink, const char* data, std::size_t n, std::size_t cap,
                   bool keep_tail, bool& truncated) {
    if (keep_tail) {
        sink.append(data, n);
        if (sink.size() > cap) {
            sink.erase(0, sink.size() - cap);
            truncated = true;
        }
        return;
    }
    if (sink.size() >= cap) {
        truncated = true;
        return;
    }
    std::size_t room = cap - sink.size();
    if (n > room) {
        truncated = true;
        n = room;
    }
    sink.append(data, n);
}

std::vector<std::string> build_env(const std::map<std::string, std::string>& overlay) {
    std::vector<std::string> out;
    for (char** e = environ; *e != nullptr; ++e) {
        const char* eq = std::strchr(*e, '=');
        if (eq == nullptr) continue;
        std::string key(*e, eq - *e);
        if (overlay.count(key) == 0) out.emplace_back(*e);
    }
    for (const auto& [k, v] : overlay) out.push_back(k + "=" + v);
    return out;
}

[[noreturn]] void exec_child(const std::vector<std::string>& argv,
                             const std::filesystem::path& cwd,
                             const std::map<std::string, std::string>& env, int in_fd,
                             int out_fd, int err_fd, int report_fd) {
    ::setpgid(0, 0);
    if (in_fd >= 0) ::dup2(in_fd, STDIN_FILENO);
    if (out_fd >= 0) ::dup2(out_fd, STDOUT_FILENO);
    if (err_fd >= 0) ::dup2(err_fd, STDERR_FILENO);
    // Close everything above the stdio range; the exec-failure report pipe
    // is CLOEXEC and must survive until exec.
    for (int fd = 3; fd < 1024; ++fd) {
        if (fd != report_fd) ::close(fd);
    }
    auto report = [&](int err) {
        if (report_fd >= 0) {
            ssize_t ignored = ::write(report_fd, &err, sizeof err);
            (void)ignored;
        }
        _exit(127);
    };
    if (!cwd.empty()) {
        if (::chdir(cwd.c_str()) != 0) report(errno);
    }
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    if (env.empty()) {
        ::execvp(cargv[0], cargv.data());
    } else {
        auto envs = build_env(env);
        std::vector<char*> cenv;
        cenv.reserve(envs.size() + 1);
        for (auto& e : envs) cenv.push_back(e.data());
        cenv.push_back(nullptr);
        ::execvpe(cargv[0], cargv.data(), cenv.data());
    }
    report(errno);
    _exit(127);
}

}  // namespace

RunResult run_process(const RunRequest& req) {
    ignore_sigpipe();
    RunResult res;
    if (req.argv.empty()) {
        res.spawn_error = "empty argv";
        return res;
    }

    int in_pipe[2] = {-1, -1};
    int out_pipe[2] = {-1, -1};
    int err_pipe[2] = {-1, -1};
    int report_pipe[2] = {-1, -1};
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0 ||
        ::pipe2(report_pipe, O_CLOEXEC) != 0 ||
        (req.stdin_bytes && ::pipe(in_pipe) != 0)) {
        res.spawn_error = std::string("pipe: ") + std::strerror(errno);
        return res;
    }
    int devnull = -1;
    if (!req.stdin_bytes) devnull = ::open("/dev/null", O_RDONLY);

    const auto start = Clock::now();
    pid_t pid = ::fork();
    if (pid < 0) {
        res.spawn_error = std::string("fork: ") + std::strerror(errno);
        return res;
    }
    if (pid == 0) {
        exec_child(req.argv, req.cwd, req.env, req.stdin_bytes ? in_pipe[0] : devnull,
                   out_pipe[1], err_pipe[1], report_pipe[1]);
    }
    ::setpgid(pid, pid);  // also set from parent: closes the race with exec
    if (devnull >= 0) ::close(devnull);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(report_pipe[1]);
    if (req.stdin_bytes) ::close(in_pipe[0]);
    res.spawned = true;

    int in_fd = req.stdin_bytes ? in_pipe[1] : -1;
    std::size_t in_off = 0;
    if (in_fd >= 0) ::fcntl(in_fd, F_SETFL, O_NONBLOCK);

    const auto deadline = start + req.timeout;
    bool out_open = true, err_open = true;
    char buf[65536];
    bool killed = false;

    while (out_open || err_open || in_fd >= 0) {
        struct pollfd fds[3];
        int nfds = 0;
        int out_idx = -1, err_idx = -1, in_idx = -1;
        if (out_open) {
            out_idx = nfds;
            fds[nfds++] = {out_pipe[0], POLLIN, 0};
        }
        if (err_open) {
            err_idx = nfds;
            fds[nfds++] = {err_pipe[0], POLLIN, 0};
        }
        if (in_fd >= 0) {
            in_idx = nfds;
            fds[nfds++] = {in_fd, POLLOUT, 0};
        }
        auto now = Clock::now();
        long remain =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        if (remain <= 0) {
            if (!killed) {
                ::killpg(pid, SIGKILL);
                killed = true;
                res.timed_out = true;
            }
            remain = 50;  // keep draining until pipes close after the kill
        }
        int rc = ::poll(fds, nfds, static_cast<int>(remain));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;
        if (out_idx >= 0 && (fds[out_idx].revents & (POLLIN | POLLHUP))) {
            ssize_t n = ::read(out_pipe[0], buf, sizeof buf);
            if (n > 0) {
                append_capped(res.stdout_data, buf, static_cast<std::size_t>(n),
                              req.stdout_cap, req.stdout_keep_tail, res.stdout_truncated);
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                ::close(out_pipe[0]);
                out_open = false;
            }
        }
        if (err_idx >= 0 && (fds[err_idx].revents & (POLLIN | POLLHUP))) {
            ssize_t n = ::read(err_pipe[0], buf, sizeof buf);
            if (n > 0) {
                append_capped(res.stderr_data, buf, static_cast<std::size_t>(n),
                              req.stderr_cap, req.stderr_keep_tail, res.stderr_truncated);
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                ::close(err_pipe[0]);
                err_open = false;
            }
        }
        if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const std::string& data = *req.stdin_bytes;
            if (in_off >= data.size() || (fds[in_idx].revents & (POLLERR | POLLHUP))) {
                ::close(in_fd);
                in_fd = -1;
            } else {
                ssize_t n = ::write(in_fd, data.data() + in_off, data.size() - in_off);
                if (n > 0) {
                    in_off += static_cast<std::size_t>(n);
                    if (in_off >= data.size()) {
                        ::close(in_fd);
                        in_fd = -1;
                    }
                } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
                    ::close(in_fd);
                    in_fd = -1;
                }
            }
        }
    }

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Sweep any grandchildren that survived in the group.
    ::killpg(pid, SIGKILL);

    int exec_errno = 0;
    if (::read(report_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
        res.spawned = false;
        res.spawn_error = std::string("exec: ") + std::strerror(exec_errno);
    }
    ::close(report_pipe[0]);

    if (WIFEXITED(status)) {
        res.exited = true;
        res.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        res.term_signal = WTERMSIG(status);
    }
    res.wall = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    if (res.timed_out && res.wall < req.timeout) res.wall = req.timeout;
    return res;
}

PipeProcess::~PipeProcess() {
    if (pid_ > 0 && !reaped_) wait(true);
    if (stdin_fd_ >= 0) ::close(stdin_fd_);
    if (stdout_fd_ >= 0) ::close(stdout_fd_);
}

bool PipeProcess::start(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                        const std::map<std::string, std::string>& env) {
    ignore_sigpipe();
    if (argv.empty()) {
        spawn_error_ = "empty argv";
        return false;
    }
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
        spawn_error_ = std::string("pipe: ") + std::strerror(errno);
        return false;
    }
    pid_t pid = ::fork();
    if (pid < 0) {
        spawn_error_ = std::string("fork: ") + std::strerror(errno);
        return false;
    }
    if (pid == 0) {
        // Child stderr joins the parent's stderr.
        exec_child(argv, cwd, env, in_pipe[0], out_pipe[1], -1, -1);
    }
    ::setpgid(pid, pid);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    pid_ = pid;
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];
    return true;
}

bool PipeProcess::running() const { return pid_ > 0 && !reaped_; }

bool PipeProcess::write_all(const std::string& data) {
    if (stdin_fd_ < 0) return false;
    std::size_t off = 0;
    while (off < data.size()) {
        ssize_t n = ::write(stdin_fd_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

void PipeProcess::close_stdin() {
    if (stdin_fd_ >= 0) {
        ::close(stdin_fd_);
        stdin_fd_ = -1;
    }
}

std::optional<std::string> PipeProcess::read_line(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (eof_) {
            if (!buffer_.empty()) {
                std::string line = std::move(buffer_);
                buffer_.clear();
                return line;
            }
            return std::string();  // caller distinguishes via eof()
        }
        auto now = Clock::now();
        long remain =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        if (remain <= 0) return std::nullopt;
        struct pollfd pfd = {stdout_fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(remain));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) return std::nullopt;
        char buf[16384];
        ssize_t n = ::read(stdout_fd_, buf, sizeof buf);
        if (n > 0) {
            buffer_.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0) {
            eof_ = true;
        } else if (errno != EAGAIN && errno != EINTR) {
            eof_ = true;
        }
    }
}

std::optional<std::string> PipeProcess::read_chunk(std::chrono::milliseconds timeout) {
    if (!buffer_.empty()) {
        std::string out = std::move(buffer_);
        buffer_.clear();
        return out;
    }
    if (eof_) return std::string();
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        auto now = Clock::now();
        long remain =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        if (remain <= 0) return std::nullopt;
        struct pollfd pfd = {stdout_fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(remain));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) return std::nullopt;
        char buf[16384];
        ssize_t n = ::read(stdout_fd_, buf, sizeof buf);
        if (n > 0) return std::string(buf, static_cast<std::size_t>(n));
        eof_ = true;
        return std::string();
    }
}

void PipeProcess::kill_group() {
    if (pid_ > 0 && !reaped_) ::killpg(pid_, SIGKILL);
}

int PipeProcess::wait(bool force) {
    if (pid_ <= 0) return -1;
    if (reaped_) return WIFEXITED(status_) ? WEXITSTATUS(status_) : -WTERMSIG(status_);
    if (force) kill_group();
    while (::waitpid(pid_, &status_, 0) < 0 && errno == EINTR) {
    }
    ::killpg(pid_, SIGKILL);
    reaped_ = true;
    return WIFEXITED(status_) ? WEXITSTATUS(status_) : -WTERMSIG(status_);
}

std::vector<std::string> split_command(const std::string& cmd) {
    std::vector<std::string> out;
    std::string cur;
    bool in_token = false;
    char quote = 0;
    for (std::size_t i = 0; i < cmd.size(); ++i) {
        char c = cmd[i];
        if (quote != 0) {
            if (c == quote) {
                quote = 0;
            } else if (c == '\\' && quote == '"' && i + 1 < cmd.size()) {
                cur += cmd[++i];
            } else {
                cur += c;
            }
            continue;
        }
        if (c == '\'' || c == '"') {
            quote = c;
            in_token = true;
            continue;
        }
        if (c == '\\' && i + 1 < cmd.size()) {
            cur += cmd[++i];
            in_token = true;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\n') {
            if (in_token) {
                out.push_back(cur);
                cur.clear();
                in_token = false;
            }
            continue;
        }
        cur += c;
        in_token = true;
    }
    if (in_token) out.push_back(cur);
    if (quote != 0) throw std::invalid_argument("unterminated quote in command: " + cmd);
    return out;
}

int count_live_children() {
    namespace fs = std::filesystem;
    const pid_t self = ::getpid();
    int count = 0;
    for (const auto& entry : fs::directory_iterator("/proc")) {
        const std::string name = entry.path().filename().string();
        if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
        std::FILE* f = std::fopen((entry.path() / "stat").c_str(), "r");
        if (f == nullptr) continue;
        int pid = 0, ppid = 0;
        char comm[256] = {0};
        char state = 0;
        if (std::fscanf(f, "%d %255s %c %d", &pid, comm, &state, &ppid) == 4 && ppid == self &&
            state != 'Z') {
            ++count;
        }
        std::fclose(f);
    }
    return count;
}

}  // namespace povgen::proc

#pragma once

// Minimal subprocess runner: feeds stdin from a callback, captures stderr,
// discards stdout. POSIX only.

#include <fcntl.h>
#include <spawn.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "slidecast/errors.hpp"

extern char** environ;

namespace slidecast {

/// Resolves a program name the way a shell would: paths are checked directly, bare names via PATH.
inline std::optional<std::string> find_program(const std::string& name) {
    auto executable = [](const std::string& p) {
        struct stat st {};
        return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
    };
    if (name.empty()) return std::nullopt;
    if (name.find('/') != std::string::npos) return executable(name) ? std::optional(name) : std::nullopt;
    const char* path = std::getenv("PATH");
    std::string_view rest = path ? path : "/usr/bin:/bin";
    while (true) {
        const auto colon = rest.find(':');
        std::string dir(rest.substr(0, colon));
        if (dir.empty()) dir = ".";
        const std::string candidate = dir + "/" + name;
        if (executable(candidate)) return candidate;
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return std::nullopt;
}

/// Writes to the child's stdin. Returns false once the child has stopped reading.
class StdinWriter {
public:
    explicit StdinWriter(int fd) : fd_(fd) {}
    bool write(const void* data, std::size_t n) {
        const char* p = static_cast<const char*>(data);
        while (n > 0 && !closed_) {
            const ssize_t w = ::write(fd_, p, n);
            if (w < 0) {
                if (errno == EINTR) continue;
                closed_ = true;
                break;
            }
            p += w;
            n -= static_cast<std::size_t>(w);
        }
        return !closed_;
    }
    bool write(std::string_view s) { return write(s.data(), s.size()); }

private:
    int fd_;
    bool closed_ = false;
};

struct ProcessResult {
    int exit_code = -1;  // -1 when killed by a signal
    std::string stderr_text;
};

/// Runs argv[0] (already resolved) with `feed` writing its stdin. Throws EncoderMissing if the
/// program cannot be spawned.
inline ProcessResult run_process(const std::vector<std::string>& argv,
                                 const std::function<void(StdinWriter&)>& feed = {}) {
    static const bool sigpipe_ignored = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;
    int in_pipe[2], err_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error("pipe failed");
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error("pipe failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], 0);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], 2);
    posix_spawn_file_actions_addopen(&actions, 1, "/dev/null", O_WRONLY, 0);
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(err_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(err_pipe[0]);
        throw EncoderMissing("cannot start " + argv[0] + ": " + std::strerror(rc));
    }
    ProcessResult result;
    std::thread reader([&] {
        char buf[4096];
        while (true) {
            const ssize_t n = ::read(err_pipe[0], buf, sizeof buf);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            result.stderr_text.append(buf, static_cast<std::size_t>(n));
        }
    });
    std::exception_ptr feed_error;
    {
        StdinWriter writer(in_pipe[1]);
        try {
            if (feed) feed(writer);
        } catch (...) {
            feed_error = std::current_exception();
        }
        ::close(in_pipe[1]);
    }
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    reader.join();
    ::close(err_pipe[0]);
    if (feed_error) std::rethrow_exception(feed_error);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace slidecast

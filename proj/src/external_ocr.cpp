#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>

#include "ocrprep/blackbox.hpp"
#include "ocrprep/png_io.hpp"
#include "ocrprep/vocab.hpp"

namespace ocrprep::blackbox {

namespace {

std::string substitute_placeholder(const std::string& command, const std::string& path) {
    const std::string key = "{image}";
    std::string out = command;
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
        out.replace(pos, key.size(), path);
        pos += path.size();
    }
    return out;
}

struct TempPng {
    std::string path;
    explicit TempPng(const Image& img) {
        char tmpl[] = "/tmp/ocrprep_XXXXXX.png";
        const int fd = mkstemps(tmpl, 4);
        if (fd < 0) throw RecognitionError("external: cannot create temp file");
        ::close(fd);
        path = tmpl;
        write_png_gray(path, img);
    }
    ~TempPng() { ::unlink(path.c_str()); }
};

std::string trim_ws(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ExternalRecognizer::ExternalRecognizer(std::string command, std::chrono::milliseconds timeout,
                                       std::string id)
    : command_(std::move(command)), timeout_(timeout), id_(std::move(id)) {}

RecognizerCapabilities ExternalRecognizer::capabilities() const {
    return {.concurrent_calls_safe = true, .max_width = 0, .max_height = 0,
            .deterministic = false};
}

std::string ExternalRecognizer::recognize(const Image& image) const {
    TempPng tmp(image);
    const std::string cmd = substitute_placeholder(command_, tmp.path);

    int pipefd[2];
    if (pipe(pipefd) != 0) throw RecognitionError("external: pipe() failed");
    const pid_t pid = fork();
    if (pid < 0) {
        ::close(pipefd[0]);
        ::close(pipefd[1]);
        throw RecognitionError("external: fork() failed");
    }
    if (pid == 0) {
        ::dup2(pipefd[1], STDOUT_FILENO);
        ::close(pipefd[0]);
        ::close(pipefd[1]);
        ::setpgid(0, 0);
        ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    ::close(pipefd[1]);
    ::setpgid(pid, pid);

    std::string output;
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    bool timed_out = false;
    char buf[4096];
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        struct pollfd pfd = {pipefd[0], POLLIN, 0};
        const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (pr == 0) {
            timed_out = true;
            break;
        }
        if (pr < 0) {
            if (errno == EINTR) continue;
            break;
        }
        const ssize_t n = ::read(pipefd[0], buf, sizeof(buf));
        if (n <= 0) break;  // EOF or error
        output.append(buf, static_cast<std::size_t>(n));
    }
    ::close(pipefd[0]);

    int status = 0;
    if (timed_out) {
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        throw RecognitionError("external: command timed out after " +
                               std::to_string(timeout_.count()) + " ms: " + command_);
    }
    ::waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw RecognitionError("external: command failed (status " +
                               std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) +
                               "): " + command_);
    try {
        losses::utf8_decode(output);  // validate encoding
    } catch (const std::invalid_argument& e) {
        throw RecognitionError(std::string("external: undecodable output: ") + e.what());
    }
    return trim_ws(output);
}

}  // namespace ocrprep::blackbox

#pragma once

// Line-oriented pipe to a spawned child process (POSIX).

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "qeprobe/error.hpp"

namespace qeprobe {

class ChildProcess {
 public:
  /// Starts argv[0] (searched on PATH) with stdin/stdout piped to us; stderr
  /// is inherited.
  explicit ChildProcess(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) fail(ErrorCode::config, "empty command line");
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) fail(ErrorCode::transport, "pipe: " + std::string(std::strerror(errno)));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      fail(ErrorCode::transport, "pipe: " + std::string(std::strerror(errno)));
    }
    std::vector<char*> cargv;
    for (auto& a : argv_) cargv.push_back(a.data());
    cargv.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) fail(ErrorCode::transport, "fork: " + std::string(std::strerror(errno)));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execvp(cargv[0], cargv.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { shutdown(std::chrono::seconds(2)); }

  const std::string& program() const noexcept { return argv_.front(); }

  void write_line(std::string_view line) {
    std::string buf(line);
    buf.push_back('\n');
    std::size_t done = 0;
    while (done < buf.size()) {
      const auto n = ::write(in_fd_, buf.data() + done, buf.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::transport, program() + ": write failed: " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  /// Next line from the child's stdout, or nullopt when `timeout` elapses
  /// first. End of stream is a transport error.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::transport, program() + ": poll failed: " + std::strerror(errno));
      }
      if (rc == 0) return std::nullopt;
      char chunk[4096];
      const auto n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::transport, program() + ": read failed: " + std::strerror(errno));
      }
      if (n == 0) fail(ErrorCode::transport, program() + ": child closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Closes stdin (EOF asks the child to exit), waits up to `grace`, then kills.
  void shutdown(std::chrono::milliseconds grace) {
    if (pid_ <= 0) return;
    if (in_fd_ >= 0) ::close(in_fd_);
    in_fd_ = -1;
    const auto deadline = std::chrono::steady_clock::now() + grace;
    int status = 0;
    while (::waitpid(pid_, &status, WNOHANG) == 0) {
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (out_fd_ >= 0) ::close(out_fd_);
    out_fd_ = -1;
    pid_ = -1;
  }

 private:
  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
};

}  // namespace qeprobe

#pragma once

#include <sys/types.h>

#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dub {

/// Child process with piped stdin/stdout; stderr is inherited. All waits
/// take explicit timeouts. The destructor kills and reaps a live child.
class Subprocess {
 public:
  using Millis = std::chrono::milliseconds;

  /// Spawns argv[0] (PATH lookup when it has no slash). Throws ProtocolError
  /// when the program cannot be started.
  explicit Subprocess(const std::vector<std::string>& argv);
  ~Subprocess();
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  /// Writes all bytes. Returns false when the child closed its stdin;
  /// throws ProtocolError when no progress is possible within `timeout`.
  bool write_all(std::string_view data, Millis timeout);
  void close_stdin();

  /// Next line without its newline; nullopt at EOF. A negative timeout
  /// waits indefinitely. Throws ProtocolError on timeout.
  std::optional<std::string> read_line(Millis timeout);

  /// Exit status (>= 0) or -signal. Kills the child if it has not exited
  /// within `timeout` and returns nullopt.
  std::optional<int> wait(Millis timeout);

  /// SIGKILL and reap.
  void kill();
  /// SIGKILL only, so another thread blocked in read_line() sees EOF.
  void terminate();
  pid_t pid() const { return pid_; }

 private:
  bool poll_fd(int fd, short events, Millis timeout);
  bool try_reap();

  pid_t pid_ = -1;
  int in_fd_ = -1;   // child's stdin, write end
  int out_fd_ = -1;  // child's stdout, read end
  std::string buffer_;
  bool eof_ = false;
  std::optional<int> status_;
  std::mutex status_mu_;  // pid/status are touched by a reader and a writer thread
};

}  // namespace dub

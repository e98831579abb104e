#include "dub/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "dub/error.hpp"

extern char** environ;

namespace dub {

namespace {

std::once_flag ignore_sigpipe_once;

void set_nonblocking(int fd) { fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK); }

std::string errno_text(int err) { return std::strerror(err); }

}  // namespace

Subprocess::Subprocess(const std::vector<std::string>& argv) {
  if (argv.empty() || argv.front().empty()) throw ProtocolError("external stage: empty command");
  std::call_once(ignore_sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw ProtocolError("pipe: " + errno_text(errno));
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw ProtocolError("pipe: " + errno_text(errno));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const int rc = ::posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    pid_ = -1;
    throw ProtocolError("cannot start '" + argv.front() + "': " + errno_text(rc));
  }
  in_fd_ = to_child[1];
  out_fd_ = from_child[0];
  set_nonblocking(in_fd_);
  set_nonblocking(out_fd_);
}

Subprocess::~Subprocess() {
  kill();
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0) ::close(out_fd_);
}

bool Subprocess::poll_fd(int fd, short events, Millis timeout) {
  pollfd p{fd, events, 0};
  const int ms = timeout.count() < 0 ? -1 : static_cast<int>(timeout.count());
  for (;;) {
    const int rc = ::poll(&p, 1, ms);
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw ProtocolError("poll: " + errno_text(errno));
  }
}

bool Subprocess::write_all(std::string_view data, Millis timeout) {
  if (in_fd_ < 0) return false;
  while (!data.empty()) {
    const ssize_t n = ::write(in_fd_, data.data(), data.size());
    if (n > 0) {
      data.remove_prefix(static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && errno == EPIPE) return false;
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)
      throw ProtocolError("write to external stage: " + errno_text(errno));
    if (!poll_fd(in_fd_, POLLOUT, timeout))
      throw ProtocolError("watchdog: external stage did not accept input within " +
                          std::to_string(timeout.count()) + " ms");
  }
  return true;
}

void Subprocess::close_stdin() {
  if (in_fd_ >= 0) {
    ::close(in_fd_);
    in_fd_ = -1;
  }
}

std::optional<std::string> Subprocess::read_line(Millis timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (eof_) {
      if (buffer_.empty()) return std::nullopt;
      std::string line = std::move(buffer_);
      buffer_.clear();
      return line;
    }
    char chunk[65536];
    const ssize_t n = ::read(out_fd_, chunk, sizeof chunk);
    if (n > 0) {
      buffer_.append(chunk, static_cast<std::size_t>(n));
      continue;
    }
    if (n == 0) {
      eof_ = true;
      continue;
    }
    if (errno == EINTR) continue;
    if (errno != EAGAIN && errno != EWOULDBLOCK)
      throw ProtocolError("read from external stage: " + errno_text(errno));
    Millis left = timeout;
    if (timeout.count() >= 0) {
      left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
      if (left.count() < 0) left = Millis(0);
    }
    if (!poll_fd(out_fd_, POLLIN, left) && timeout.count() >= 0)
      throw ProtocolError("watchdog: no output from external stage within " +
                          std::to_string(timeout.count()) + " ms");
  }
}

bool Subprocess::try_reap() {
  std::lock_guard lock(status_mu_);
  if (status_) return true;
  int st = 0;
  const pid_t r = ::waitpid(pid_, &st, WNOHANG);
  if (r == pid_) {
    status_ = WIFEXITED(st) ? WEXITSTATUS(st) : -WTERMSIG(st);
    return true;
  }
  return false;
}

std::optional<int> Subprocess::wait(Millis timeout) {
  if (pid_ <= 0) return std::nullopt;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!try_reap()) {
    if (std::chrono::steady_clock::now() >= deadline) {
      kill();
      return std::nullopt;
    }
    std::this_thread::sleep_for(Millis(2));
  }
  std::lock_guard lock(status_mu_);
  return status_;
}

void Subprocess::kill() {
  std::lock_guard lock(status_mu_);
  if (pid_ <= 0 || status_) return;
  ::kill(pid_, SIGKILL);
  int st = 0;
  while (::waitpid(pid_, &st, 0) < 0 && errno == EINTR) {
  }
  status_ = WIFEXITED(st) ? WEXITSTATUS(st) : -WTERMSIG(st);
}

void Subprocess::terminate() {
  std::lock_guard lock(status_mu_);
  if (pid_ > 0 && !status_) ::kill(pid_, SIGKILL);
}

}  // namespace dub

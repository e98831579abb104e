#include <condition_variable>
#include <mutex>
#include <thread>

#include "dub/engine.hpp"
#include "dub/error.hpp"
#include "dub/protocol.hpp"
#include "dub/subprocess.hpp"

namespace dub::engine {

namespace {

using Millis = std::chrono::milliseconds;

class ExternalStage final : public Stage {
 public:
  ExternalStage(std::string name, const std::vector<std::string>& command, Millis watchdog,
                Millis handshake)
      : name_(std::move(name)), watchdog_(watchdog), proc_(command) {
    std::optional<std::string> line;
    try {
      line = proc_.read_line(handshake);
    } catch (const ProtocolError& e) {
      proc_.kill();
      throw ProtocolError("external stage '" + name_ + "': handshake failed: " + e.what());
    }
    if (!line) {
      const auto status = proc_.wait(Millis(1000));
      throw ProtocolError("external stage '" + name_ + "': exited before sending hello" +
                          (status ? " (status " + std::to_string(*status) + ")" : std::string()));
    }
    try {
      hello_ = protocol::parse_hello(*line);
    } catch (const ProtocolError& e) {
      proc_.kill();
      throw ProtocolError("external stage '" + name_ + "': " + e.what());
    }
  }

  ~ExternalStage() override { stop_reader(); }

  StageDescriptor descriptor() const override { return {hello_.name, hello_.accepts, hello_.produces}; }

  void begin(Emitter& out) override {
    reader_ = std::thread([this, &out] { read_loop(out); });
  }

  void process(const StageMessage& msg, Port port, Emitter&) override { send(msg, port); }

  void end_of_stream(const StageMessage& msg, Port port, Emitter&) override { send(msg, port); }

  void finish(Emitter&) override {
    proc_.close_stdin();
    {
      std::unique_lock lock(mu_);
      // the child may still be working through its input; allow one
      // watchdog period after the last message
      if (!done_cv_.wait_for(lock, watchdog_, [&] { return done_; })) {
        lock.unlock();
        stop_reader();
        throw ProtocolError("external stage '" + name_ + "': watchdog expired after " +
                            std::to_string(watchdog_.count()) + " ms without end");
      }
    }
    if (reader_.joinable()) reader_.join();
    rethrow_reader_error();
  }

  void abort() override { stop_reader(); }

 private:
  void send(const StageMessage& msg, Port port) {
    if (!reader_.joinable()) throw StageError("external stage '" + name_ + "' used before begin");
    const std::string line = protocol::encode_message(msg, port) + "\n";
    bool ok = false;
    try {
      ok = proc_.write_all(line, watchdog_);
    } catch (const ProtocolError& e) {
      stop_reader();
      throw ProtocolError("external stage '" + name_ + "': " + e.what());
    }
    if (!ok) {
      // the child closed its input; its exit is reported by the reader
      wait_reader(watchdog_);
      rethrow_reader_error();
      throw ProtocolError("external stage '" + name_ + "' closed its input early");
    }
  }

  void read_loop(Emitter& out) {
    try {
      std::uint64_t expected = 0;
      bool ended = false;
      while (auto line = proc_.read_line(Millis(-1))) {
        if (line->find_first_not_of(" \t\r") == std::string::npos) continue;
        if (ended) throw ProtocolError("output after end");
        auto wire = protocol::decode_message(*line);
        StageMessage& m = wire.message;
        if (m.seq != expected)
          throw ProtocolError("seq " + std::to_string(m.seq) + " out of order, expected " +
                              std::to_string(expected));
        ++expected;
        if (m.kind == MessageKind::kData) {
          if (std::find(hello_.produces.begin(), hello_.produces.end(), m.content_type) ==
              hello_.produces.end())
            throw ProtocolError("emitted undeclared content type " +
                                std::string(content_type_name(m.content_type)));
          out.emit(m.content_type, Payload(*m.payload), m.start_s, m.end_s);
        } else if (m.kind == MessageKind::kEnd) {
          ended = true;
        } else {
          throw StageError("reported error: " + m.error);
        }
      }
      if (!ended) {
        const auto status = proc_.wait(Millis(1000));
        throw ProtocolError("exited without end" +
                            (status ? " (status " + std::to_string(*status) + ")" : std::string()));
      }
      const auto status = proc_.wait(watchdog_);
      if (!status) throw ProtocolError("did not exit within the watchdog after end");
      if (*status != 0) throw ProtocolError("exit status " + std::to_string(*status) + " after end");
    } catch (const ProtocolError& e) {
      set_error(std::make_exception_ptr(ProtocolError("external stage '" + name_ + "': " + e.what())));
    } catch (const StageError& e) {
      set_error(std::make_exception_ptr(StageError("external stage '" + name_ + "': " + e.what())));
    } catch (const std::exception& e) {
      set_error(std::make_exception_ptr(StageError("external stage '" + name_ + "': " + e.what())));
    }
    std::lock_guard lock(mu_);
    done_ = true;
    done_cv_.notify_all();
  }

  void set_error(std::exception_ptr e) {
    proc_.terminate();
    std::lock_guard lock(mu_);
    if (!error_) error_ = std::move(e);
  }

  void wait_reader(Millis timeout) {
    std::unique_lock lock(mu_);
    if (!done_cv_.wait_for(lock, timeout, [&] { return done_; })) {
      lock.unlock();
      stop_reader();
    }
  }

  void stop_reader() {
    proc_.terminate();
    if (reader_.joinable()) reader_.join();
  }

  void rethrow_reader_error() {
    std::exception_ptr e;
    {
      std::lock_guard lock(mu_);
      e = error_;
    }
    if (e) std::rethrow_exception(e);
  }

  std::string name_;
  Millis watchdog_;
  Subprocess proc_;
  protocol::Hello hello_;
  std::thread reader_;
  std::mutex mu_;
  std::condition_variable done_cv_;
  bool done_ = false;
  std::exception_ptr error_;
};

}  // namespace

std::unique_ptr<Stage> make_external_stage(const std::string& name,
                                           const std::vector<std::string>& command,
                                           std::chrono::milliseconds watchdog,
                                           std::chrono::milliseconds handshake_timeout) {
  return std::make_unique<ExternalStage>(name, command, watchdog, handshake_timeout);
}

}  // namespace dub::engine

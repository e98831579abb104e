#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dub/dsp.hpp"
#include "dub/media_io.hpp"
#include "dub/message.hpp"

namespace dub::engine {

struct StageDescriptor {
  std::string type;
  std::vector<ContentType> accepts;
  std::vector<ContentType> produces;

  bool accepts_type(ContentType t) const;
  bool produces_type(ContentType t) const;
};

enum class Branch { kAudio, kVideo };
std::string_view branch_name(Branch b);

struct StageSpec {
  std::string name;
  std::string kind = "builtin";  // builtin | external
  std::string type;              // builtin type name
  std::vector<std::string> command;
  std::optional<Branch> branch;
  nlohmann::json params = nlohmann::json::object();
};

struct PipelineConfig {
  std::vector<StageSpec> stages;
  std::size_t channel_capacity = 8;
  double chunk_seconds = 1.0;
  std::uint64_t seed = 0;
  dsp::SpectrogramConfig spectrogram;
  double watchdog_seconds = 60.0;
  double handshake_seconds = 5.0;
  /// Source releases each audio chunk only once its wall-clock span has
  /// elapsed, as a live capture would.
  bool realtime = false;
  /// Relative paths in stage params and commands resolve against this.
  std::filesystem::path base_dir;

  void validate() const;
};

/// Structured-text (JSON) config. Throws ConfigError.
PipelineConfig parse_pipeline_config(std::string_view text,
                                     const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Everything a stage may look at while preparing.
struct RunContext {
  std::string node_name;
  dsp::SpectrogramConfig spectrogram;
  Rational frame_rate;
  std::uint64_t seed = 0;
  const InputManifest* manifest = nullptr;
  nlohmann::json params = nlohmann::json::object();
  std::filesystem::path base_dir;
  /// Content types wired to each port.
  std::map<Port, std::vector<ContentType>> inputs;

  /// params[key] as a path resolved against base_dir, if present.
  std::optional<std::filesystem::path> param_path(const std::string& key) const;
};

class Emitter {
 public:
  virtual ~Emitter() = default;
  virtual void emit(ContentType type, Payload payload, double start_s, double end_s) = 0;
};

/// One node of the cascade. The engine calls prepare, begin, then process /
/// end_of_stream in per-stream order, then finish, all from one thread.
/// Errors are reported by throwing dub::Error.
class Stage {
 public:
  virtual ~Stage() = default;
  virtual StageDescriptor descriptor() const = 0;
  virtual void prepare(const RunContext&) {}
  virtual void begin(Emitter&) {}
  virtual void process(const StageMessage& msg, Port port, Emitter& out) = 0;
  virtual void end_of_stream(const StageMessage&, Port, Emitter&) {}
  virtual void finish(Emitter&) {}
  /// Called after a failure; must release threads and children.
  virtual void abort() {}
  /// Port an input of this type uses when the stage runs standalone.
  virtual Port standalone_port(ContentType) const { return Port::kMain; }
};

using StageFactory = std::function<std::unique_ptr<Stage>(const StageSpec&)>;

class StageRegistry {
 public:
  void add(std::string type, StageFactory factory, Branch default_branch = Branch::kAudio);
  bool contains(std::string_view type) const;
  std::unique_ptr<Stage> create(const StageSpec& spec) const;  // throws ConfigError
  Branch default_branch(std::string_view type) const;

 private:
  struct Entry {
    StageFactory factory;
    Branch branch;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

/// stub_asr, lexicon_mt, toy_tts, formant_shift_vc, face_track, energy_lipgen.
StageRegistry builtin_registry();

/// Spawns `command`, performs the hello handshake and returns a stage that
/// forwards messages over the line protocol. Throws ProtocolError.
std::unique_ptr<Stage> make_external_stage(const std::string& name,
                                           const std::vector<std::string>& command,
                                           std::chrono::milliseconds watchdog,
                                           std::chrono::milliseconds handshake_timeout);

/// Places audio messages on one timeline: each buffer starts at
/// max(round(start_s * rate), end of the previous one). Gaps are silence.
class AudioTimeline {
 public:
  explicit AudioTimeline(int sample_rate) { audio_.sample_rate = sample_rate; }
  std::size_t place(const AudioBuffer& buf, double start_s);
  std::size_t end() const { return audio_.samples.size(); }
  const AudioBuffer& audio() const { return audio_; }
  void pad_to(std::size_t samples);

 private:
  AudioBuffer audio_;
};

// ---------------------------------------------------------------------------

struct Subscription {
  std::string from;  // node name or "source"
  ContentType type;
  Port port;
};

struct NodeInfo {
  std::string name;
  StageDescriptor descriptor;
  Branch branch;
  std::vector<Subscription> inputs;
  bool is_join = false;
};

struct StageReport {
  std::string name;
  std::string type;
  std::string status = "ok";  // ok | error
  std::string error;
  double wall_time_s = 0.0;
  double busy_time_s = 0.0;
  std::uint64_t messages_in = 0;
  std::uint64_t messages_out = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::optional<double> first_output_latency_s;
};

struct RunReport {
  std::string status = "ok";
  std::string error;
  std::string error_type;
  double wall_time_s = 0.0;
  double input_duration_s = 0.0;
  std::vector<StageReport> stages;
  std::vector<std::string> outputs;  // relative to the output directory

  bool ok() const { return status == "ok"; }
  const StageReport* stage(std::string_view name) const;
  nlohmann::json to_json() const;
};

class Pipeline {
 public:
  Pipeline(Pipeline&&) noexcept;
  Pipeline& operator=(Pipeline&&) noexcept;
  ~Pipeline();

  const std::vector<NodeInfo>& nodes() const;
  const NodeInfo* node(std::string_view name) const;
  const PipelineConfig& config() const;
  const std::string& join_node() const;

  /// Streams the manifest through the graph and writes the output tree
  /// under `out_dir`. A pipeline runs once. Input loading errors throw;
  /// stage failures come back as a report with status "error" and no
  /// outputs on disk.
  RunReport run(const InputManifest& manifest, const std::filesystem::path& out_dir);

 private:
  friend Pipeline build_pipeline(const PipelineConfig&, const StageRegistry&);
  struct Impl;
  explicit Pipeline(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Validates the topology (audio chain, video chain, join at the last
/// video stage) and content-type compatibility. Throws ConfigError, or
/// ProtocolError when an external handshake fails.
Pipeline build_pipeline(const PipelineConfig& cfg, const StageRegistry& registry = builtin_registry());

/// Fixed names of everything `run` may write inside the output directory.
std::vector<std::string> output_entries();

// ---------------------------------------------------------------------------

struct StandaloneInput {
  ContentType type;
  Payload payload;
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Runs one stage outside a pipeline: each input becomes a one-message
/// stream on the stage's standalone port. Returns the emitted messages.
std::vector<StageMessage> run_standalone(Stage& stage, const RunContext& ctx,
                                         const std::vector<StandaloneInput>& inputs);

/// Derives a stage seed from the global seed and the node name.
std::uint64_t stage_seed(std::uint64_t global_seed, std::string_view node_name);

}  // namespace dub::engine

#include "dub/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

#include "dub/channel.hpp"
#include "dub/error.hpp"
#include "dub/stages.hpp"

namespace dub::engine {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

bool StageDescriptor::accepts_type(ContentType t) const {
  return std::find(accepts.begin(), accepts.end(), t) != accepts.end();
}

bool StageDescriptor::produces_type(ContentType t) const {
  return std::find(produces.begin(), produces.end(), t) != produces.end();
}

std::string_view branch_name(Branch b) { return b == Branch::kAudio ? "audio" : "video"; }

void StageRegistry::add(std::string type, StageFactory factory, Branch default_branch) {
  entries_[std::move(type)] = {std::move(factory), default_branch};
}

bool StageRegistry::contains(std::string_view type) const { return entries_.find(type) != entries_.end(); }

std::unique_ptr<Stage> StageRegistry::create(const StageSpec& spec) const {
  auto it = entries_.find(spec.type);
  if (it == entries_.end())
    throw ConfigError("stage '" + spec.name + "': unknown builtin type '" + spec.type + "'");
  return it->second.factory(spec);
}

Branch StageRegistry::default_branch(std::string_view type) const {
  auto it = entries_.find(type);
  return it == entries_.end() ? Branch::kAudio : it->second.branch;
}

std::optional<fs::path> RunContext::param_path(const std::string& key) const {
  if (!params.is_object() || !params.contains(key)) return std::nullopt;
  if (!params[key].is_string()) throw ConfigError("param '" + key + "' must be a path string");
  fs::path p = params[key].get<std::string>();
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p;
}

std::uint64_t stage_seed(std::uint64_t global_seed, std::string_view node_name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : node_name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = global_seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t AudioTimeline::place(const AudioBuffer& buf, double start_s) {
  if (!buf.is_mono() || buf.sample_rate != audio_.sample_rate)
    throw InvalidArgument("timeline: audio must be mono at " + std::to_string(audio_.sample_rate) + " Hz");
  const auto wanted = static_cast<std::size_t>(
      std::max<long long>(0, std::llround(start_s * audio_.sample_rate)));
  const std::size_t at = std::max(wanted, audio_.samples.size());
  audio_.samples.resize(at, 0.0);
  audio_.samples.insert(audio_.samples.end(), buf.samples.begin(), buf.samples.end());
  return at;
}

void AudioTimeline::pad_to(std::size_t samples) {
  if (audio_.samples.size() < samples) audio_.samples.resize(samples, 0.0);
}

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (stages.empty()) throw ConfigError("pipeline has no stages");
  if (channel_capacity < 1) throw ConfigError("channel_capacity must be >= 1");
  if (!(chunk_seconds > 0.0)) throw ConfigError("chunk_seconds must be positive");
  if (!(watchdog_seconds > 0.0)) throw ConfigError("watchdog_seconds must be positive");
  if (!(handshake_seconds > 0.0)) throw ConfigError("handshake_seconds must be positive");
  try {
    spectrogram.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  std::set<std::string> names;
  for (const auto& s : stages) {
    if (s.name.empty() || s.name == "source" ||
        !std::all_of(s.name.begin(), s.name.end(), [](unsigned char c) {
          return std::isalnum(c) || c == '_' || c == '-';
        }))
      throw ConfigError("invalid stage name '" + s.name + "' (letters, digits, _ and -; not 'source')");
    if (!names.insert(s.name).second) throw ConfigError("duplicate stage name '" + s.name + "'");
    if (s.kind == "builtin") {
      if (s.type.empty()) throw ConfigError("stage '" + s.name + "': builtin stage needs a type");
    } else if (s.kind == "external") {
      if (s.command.empty()) throw ConfigError("stage '" + s.name + "': external stage needs a command");
    } else {
      throw ConfigError("stage '" + s.name + "': unknown kind '" + s.kind + "'");
    }
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config: not a JSON object");
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  try {
    check_keys(j, {"channel_capacity", "chunk_seconds", "seed", "watchdog_seconds",
                   "handshake_seconds", "realtime", "spectrogram", "stages"},
               "config");
    if (j.contains("channel_capacity")) {
      const auto c = j["channel_capacity"].get<long long>();
      if (c < 1) throw ConfigError("channel_capacity must be >= 1");
      cfg.channel_capacity = static_cast<std::size_t>(c);
    }
    cfg.chunk_seconds = j.value("chunk_seconds", cfg.chunk_seconds);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.watchdog_seconds = j.value("watchdog_seconds", cfg.watchdog_seconds);
    cfg.handshake_seconds = j.value("handshake_seconds", cfg.handshake_seconds);
    cfg.realtime = j.value("realtime", cfg.realtime);
    if (j.contains("spectrogram")) {
      const json& s = j["spectrogram"];
      check_keys(s, {"sample_rate", "n_fft", "hop_length", "n_mels", "f_min", "f_max"}, "spectrogram");
      auto& sp = cfg.spectrogram;
      sp.sample_rate = s.value("sample_rate", sp.sample_rate);
      if (!s.contains("f_max")) sp.f_max = sp.sample_rate / 2.0;
      sp.n_fft = s.value("n_fft", sp.n_fft);
      sp.hop_length = s.value("hop_length", sp.hop_length);
      sp.n_mels = s.value("n_mels", sp.n_mels);
      sp.f_min = s.value("f_min", sp.f_min);
      sp.f_max = s.value("f_max", sp.f_max);
    }
    if (!j.contains("stages") || !j["stages"].is_array())
      throw ConfigError("config: 'stages' must be an array");
    for (const auto& s : j["stages"]) {
      if (!s.is_object()) throw ConfigError("config: each stage must be an object");
      check_keys(s, {"name", "kind", "type", "command", "branch", "params"}, "stage");
      StageSpec spec;
      spec.name = s.value("name", std::string());
      spec.kind = s.value("kind", std::string("builtin"));
      spec.type = s.value("type", std::string());
      if (s.contains("command")) {
        if (s["command"].is_string())
          spec.command = {s["command"].get<std::string>()};
        else
          spec.command = s["command"].get<std::vector<std::string>>();
        if (!spec.command.empty() && spec.command.front().find('/') != std::string::npos) {
          fs::path exe = spec.command.front();
          if (exe.is_relative() && !base_dir.empty()) spec.command.front() = (base_dir / exe).string();
        }
      }
      if (s.contains("branch")) {
        const auto b = s["branch"].get<std::string>();
        if (b == "audio")
          spec.branch = Branch::kAudio;
        else if (b == "video")
          spec.branch = Branch::kVideo;
        else
          throw ConfigError("stage '" + spec.name + "': branch must be audio or video");
      }
      if (s.contains("params")) spec.params = s["params"];
      cfg.stages.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config: missing file " + path.string());
  return parse_pipeline_config(read_text_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Runtime pieces

namespace {

struct Envelope {
  StageMessage msg;
  Port port = Port::kMain;
};
using Inbox = BoundedChannel<Envelope>;

std::string type_list(const std::vector<ContentType>& types) {
  std::string out = "[";
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (i) out += ", ";
    out += content_type_name(types[i]);
  }
  return out + "]";
}

std::string error_type_name(const std::exception& e) {
  if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
  if (dynamic_cast<const StageError*>(&e)) return "StageError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "InternalError";
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Assigns stream ids and sequence numbers for one producer and fans each
/// message out to the subscribed inboxes.
class NodeEmitter final : public Emitter {
 public:
  NodeEmitter(std::string node, std::vector<ContentType> produces, Clock::time_point t0, bool record)
      : node_(std::move(node)), produces_(std::move(produces)), t0_(t0), record_(record) {
    for (auto t : produces_) streams_[t].id = node_ + "." + std::string(content_type_name(t));
  }

  void route(ContentType t, Inbox* inbox, Port port) { streams_.at(t).routes.push_back({inbox, port}); }

  void emit(ContentType type, Payload payload, double start_s, double end_s) override {
    std::lock_guard lock(mu_);
    auto it = streams_.find(type);
    if (it == streams_.end())
      throw StageError("stage '" + node_ + "' emitted undeclared content type " +
                       std::string(content_type_name(type)));
    check_payload(type, payload);
    if (closed_) throw StageError("stage '" + node_ + "' emitted after its streams closed");
    OutStream& s = it->second;
    StageMessage msg;
    msg.stream_id = s.id;
    msg.seq = s.seq++;
    msg.kind = MessageKind::kData;
    msg.content_type = type;
    msg.payload = std::make_shared<const Payload>(std::move(payload));
    msg.start_s = start_s;
    msg.end_s = end_s;
    ++messages_out;
    bytes_out += payload_bytes(*msg.payload);
    if (!first_output) first_output = seconds_since(t0_);
    for (const auto& [inbox, port] : s.routes) inbox->push({msg, port});
    if (record_) recorded.push_back(std::move(msg));
  }

  void close(MessageKind kind, const std::string& error) {
    std::lock_guard lock(mu_);
    closed_ = true;
    for (auto& [type, s] : streams_) {
      StageMessage msg;
      msg.stream_id = s.id;
      msg.seq = s.seq++;
      msg.kind = kind;
      msg.content_type = type;
      msg.error = error;
      for (const auto& [inbox, port] : s.routes) inbox->push({msg, port});
    }
  }

  std::uint64_t messages_out = 0;
  std::uint64_t bytes_out = 0;
  std::optional<double> first_output;
  std::vector<StageMessage> recorded;

 private:
  struct OutStream {
    std::string id;
    std::uint64_t seq = 0;
    std::vector<std::pair<Inbox*, Port>> routes;
  };
  std::string node_;
  std::vector<ContentType> produces_;
  Clock::time_point t0_;
  bool record_;
  bool closed_ = false;
  std::mutex mu_;
  std::map<ContentType, OutStream> streams_;
};

struct NodeResult {
  bool failed = false;
  bool upstream = false;
  std::string error;
  std::string error_type;
  double wall_time_s = 0.0;
  double busy_time_s = 0.0;
  std::uint64_t messages_in = 0;
  std::uint64_t bytes_in = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Impl {
  PipelineConfig cfg;
  std::vector<NodeInfo> nodes;
  std::vector<std::unique_ptr<Stage>> stages;  // parallel to nodes
  std::string join;
  std::string last_audio;
  bool used = false;
};

Pipeline::Pipeline(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Pipeline::Pipeline(Pipeline&&) noexcept = default;
Pipeline& Pipeline::operator=(Pipeline&&) noexcept = default;
Pipeline::~Pipeline() = default;

const std::vector<NodeInfo>& Pipeline::nodes() const { return impl_->nodes; }
const PipelineConfig& Pipeline::config() const { return impl_->cfg; }
const std::string& Pipeline::join_node() const { return impl_->join; }

const NodeInfo* Pipeline::node(std::string_view name) const {
  for (const auto& n : impl_->nodes)
    if (n.name == name) return &n;
  return nullptr;
}

Pipeline build_pipeline(const PipelineConfig& cfg, const StageRegistry& registry) {
  cfg.validate();
  auto impl = std::make_unique<Pipeline::Impl>();
  impl->cfg = cfg;

  struct Pending {
    const StageSpec* spec;
    Branch branch;
  };
  std::vector<Pending> audio, video;
  for (const auto& s : cfg.stages) {
    Branch b = s.branch ? *s.branch
                        : (s.kind == "builtin" ? registry.default_branch(s.type) : Branch::kAudio);
    (b == Branch::kAudio ? audio : video).push_back({&s, b});
  }
  if (audio.empty()) throw ConfigError("pipeline has no audio-branch stage");
  if (video.empty()) throw ConfigError("pipeline has no video-branch stage to join the dubbed audio");
  for (const auto& p : audio) {
    if (p.spec->kind == "builtin" && !registry.contains(p.spec->type))
      throw ConfigError("stage '" + p.spec->name + "': unknown builtin type '" + p.spec->type + "'");
  }
  for (const auto& p : video) {
    if (p.spec->kind == "builtin" && !registry.contains(p.spec->type))
      throw ConfigError("stage '" + p.spec->name + "': unknown builtin type '" + p.spec->type + "'");
  }

  const auto watchdog = std::chrono::milliseconds(std::llround(cfg.watchdog_seconds * 1000));
  const auto handshake = std::chrono::milliseconds(std::llround(cfg.handshake_seconds * 1000));
  auto instantiate = [&](const Pending& p) {
    std::unique_ptr<Stage> stage =
        p.spec->kind == "builtin" ? registry.create(*p.spec)
                                  : make_external_stage(p.spec->name, p.spec->command, watchdog, handshake);
    NodeInfo info;
    info.name = p.spec->name;
    info.descriptor = stage->descriptor();
    info.branch = p.branch;
    impl->nodes.push_back(std::move(info));
    impl->stages.push_back(std::move(stage));
    return impl->nodes.size() - 1;
  };

  auto wire_chain = [&](const std::vector<Pending>& chain, std::vector<ContentType> source_types) {
    std::string prev = "source";
    std::vector<ContentType> prev_types = std::move(source_types);
    std::size_t last = 0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const std::size_t idx = instantiate(chain[i]);
      NodeInfo& n = impl->nodes[idx];
      std::vector<ContentType> accepted;
      for (auto t : prev_types)
        if (n.descriptor.accepts_type(t)) accepted.push_back(t);
      if (accepted.empty())
        throw ConfigError("stage '" + n.name + "' (" + n.descriptor.type + ") accepts " +
                          type_list(n.descriptor.accepts) + " but " +
                          (prev == "source" ? std::string("the input provides ")
                                            : "'" + prev + "' produces ") +
                          type_list(prev_types));
      for (auto t : accepted) n.inputs.push_back({prev, t, Port::kMain});
      if (chain[i].branch == Branch::kAudio && i > 0 && n.descriptor.accepts_type(ContentType::kAudio))
        n.inputs.push_back({"source", ContentType::kAudio, Port::kSpeakerReference});
      prev = n.name;
      prev_types = n.descriptor.produces;
      last = idx;
    }
    return last;
  };

  const std::size_t last_audio =
      wire_chain(audio, {ContentType::kAudio, ContentType::kTranscript});
  {
    const NodeInfo& a = impl->nodes[last_audio];
    if (!a.descriptor.produces_type(ContentType::kAudio))
      throw ConfigError("last audio-branch stage '" + a.name + "' must produce audio, produces " +
                        type_list(a.descriptor.produces));
    impl->last_audio = a.name;
  }
  const std::size_t join = wire_chain(video, {ContentType::kFrames});
  NodeInfo& j = impl->nodes[join];
  const NodeInfo& a = impl->nodes[last_audio];
  if (!j.descriptor.produces_type(ContentType::kFrames))
    throw ConfigError("join stage '" + j.name + "' must produce frames, produces " +
                      type_list(j.descriptor.produces));
  bool joined = false;
  for (auto t : {ContentType::kAudio, ContentType::kMel}) {
    if (a.descriptor.produces_type(t) && j.descriptor.accepts_type(t)) {
      j.inputs.push_back({a.name, t, Port::kDubbedAudio});
      joined = true;
    }
  }
  if (!joined)
    throw ConfigError("join stage '" + j.name + "' accepts " + type_list(j.descriptor.accepts) +
                      " but the audio branch ends with '" + a.name + "' producing " +
                      type_list(a.descriptor.produces));
  j.is_join = true;
  impl->join = j.name;
  return Pipeline(std::move(impl));
}

std::vector<std::string> output_entries() {
  return {"audio.wav", "frames", "translation.ssml", "intermediates", "outputs.json"};
}

namespace {

void remove_outputs(const fs::path& out_dir) {
  std::error_code ec;
  for (const auto& e : output_entries()) fs::remove_all(out_dir / e, ec);
}

AudioBuffer to_pipeline_audio(const AudioBuffer& in, int rate) {
  AudioBuffer mono{in.sample_rate, 1, {}};
  const auto ch = static_cast<std::size_t>(in.channels);
  mono.samples.resize(in.frame_count());
  for (std::size_t i = 0; i < mono.samples.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += in.samples[i * ch + c];
    mono.samples[i] = acc / static_cast<double>(ch);
  }
  return dsp::resample_linear(mono, rate);
}

struct LoadedInput {
  AudioBuffer audio;
  FrameSequence frames;
  std::optional<FaceTrack> track;
  std::vector<stages::EmphasisTranscript> utterances;
};

LoadedInput load_input(const InputManifest& m, const PipelineConfig& cfg) {
  LoadedInput in;
  in.audio = to_pipeline_audio(read_wav(m.audio_path), cfg.spectrogram.sample_rate);
  in.frames = read_frame_seq(m.frames_dir);
  if (m.face_track_path) in.track = read_face_track(*m.face_track_path, &in.frames);
  if (m.transcript_path) {
    in.utterances = stages::parse_sidecar(read_text_file(*m.transcript_path));
    double prev_end = 0.0;
    for (const auto& u : in.utterances) {
      u.validate();
      if (!u.words.empty()) {
        if (u.words.front().start_s < prev_end)
          throw FormatError("transcript: utterances overlap or are out of order");
        prev_end = u.words.back().end_s;
      }
    }
  }
  return in;
}

}  // namespace

const StageReport* RunReport::stage(std::string_view name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

json RunReport::to_json() const {
  json j;
  j["status"] = status;
  if (!ok()) {
    j["error"] = error;
    j["error_type"] = error_type;
  }
  j["wall_time_s"] = wall_time_s;
  j["input_duration_s"] = input_duration_s;
  j["stages"] = json::array();
  for (const auto& s : stages) {
    json st = {{"name", s.name},
               {"type", s.type},
               {"status", s.status},
               {"wall_time_s", s.wall_time_s},
               {"busy_time_s", s.busy_time_s},
               {"messages_in", s.messages_in},
               {"messages_out", s.messages_out},
               {"bytes_in", s.bytes_in},
               {"bytes_out", s.bytes_out}};
    st["first_output_latency_s"] =
        s.first_output_latency_s ? json(*s.first_output_latency_s) : json(nullptr);
    if (!s.error.empty()) st["error"] = s.error;
    j["stages"].push_back(std::move(st));
  }
  j["outputs"] = outputs;
  return j;
}

RunReport Pipeline::run(const InputManifest& manifest, const fs::path& out_dir) {
  Impl& p = *impl_;
  if (p.used) throw ConfigError("a pipeline instance runs once; build a new one");
  p.used = true;
  const PipelineConfig& cfg = p.cfg;

  const LoadedInput input = load_input(manifest, cfg);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  remove_outputs(out_dir);

  const std::size_t n = p.nodes.size();
  const auto t0 = Clock::now();
  std::vector<std::unique_ptr<Inbox>> inboxes;
  std::vector<std::unique_ptr<NodeEmitter>> emitters;
  for (std::size_t i = 0; i < n; ++i) {
    inboxes.push_back(std::make_unique<Inbox>(cfg.channel_capacity));
    emitters.push_back(std::make_unique<NodeEmitter>(p.nodes[i].name, p.nodes[i].descriptor.produces, t0, true));
  }
  NodeEmitter source("source", {ContentType::kAudio, ContentType::kTranscript, ContentType::kFrames}, t0, false);
  auto emitter_of = [&](const std::string& name) -> NodeEmitter& {
    if (name == "source") return source;
    for (std::size_t i = 0; i < n; ++i)
      if (p.nodes[i].name == name) return *emitters[i];
    throw ConfigError("unknown node " + name);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& sub : p.nodes[i].inputs) emitter_of(sub.from).route(sub.type, inboxes[i].get(), sub.port);

  std::vector<NodeResult> results(n);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      const auto started = Clock::now();
      NodeResult& r = results[i];
      Stage& stage = *p.stages[i];
      NodeEmitter& out = *emitters[i];
      const NodeInfo& info = p.nodes[i];
      auto fail = [&](std::string msg, std::string type, bool upstream) {
        if (r.failed) return;
        r.failed = true;
        r.upstream = upstream;
        r.error = std::move(msg);
        r.error_type = std::move(type);
        try {
          stage.abort();
        } catch (...) {
        }
      };
      auto guarded = [&](auto&& fn) {
        if (r.failed) return;
        const auto b0 = Clock::now();
        try {
          fn();
        } catch (const std::exception& e) {
          fail(e.what(), error_type_name(e), false);
        }
        r.busy_time_s += seconds_since(b0);
      };

      RunContext ctx;
      ctx.node_name = info.name;
      ctx.spectrogram = cfg.spectrogram;
      ctx.frame_rate = input.frames.frame_rate;
      ctx.seed = stage_seed(cfg.seed, info.name);
      ctx.manifest = &manifest;
      for (const auto& s : cfg.stages)
        if (s.name == info.name) ctx.params = s.params;
      ctx.base_dir = cfg.base_dir;
      for (const auto& sub : info.inputs) ctx.inputs[sub.port].push_back(sub.type);

      struct InState {
        std::uint64_t next = 0;
        bool done = false;
      };
      std::map<std::string, InState> expected;
      for (const auto& sub : info.inputs)
        expected[sub.from + "." + std::string(content_type_name(sub.type))] = {};
      std::size_t open = expected.size();

      guarded([&] {
        stage.prepare(ctx);
        stage.begin(out);
      });
      while (open > 0) {
        Envelope env = inboxes[i]->pop();
        const StageMessage& msg = env.msg;
        auto it = expected.find(msg.stream_id);
        if (it == expected.end() || it->second.done) {
          fail("internal: unexpected message on stream " + msg.stream_id, "InternalError", false);
          continue;
        }
        if (msg.seq != it->second.next)
          fail("internal: stream " + msg.stream_id + " delivered seq " + std::to_string(msg.seq) +
                   ", expected " + std::to_string(it->second.next),
               "InternalError", false);
        it->second.next = msg.seq + 1;
        switch (msg.kind) {
          case MessageKind::kData:
            ++r.messages_in;
            r.bytes_in += payload_bytes(*msg.payload);
            guarded([&] { stage.process(msg, env.port, out); });
            break;
          case MessageKind::kEnd:
            it->second.done = true;
            --open;
            guarded([&] { stage.end_of_stream(msg, env.port, out); });
            break;
          case MessageKind::kError:
            it->second.done = true;
            --open;
            fail(msg.error, "StageError", true);
            break;
        }
      }
      guarded([&] { stage.finish(out); });
      if (r.failed)
        out.close(MessageKind::kError, r.upstream ? r.error : "stage '" + info.name + "': " + r.error);
      else
        out.close(MessageKind::kEnd, {});
      r.wall_time_s = seconds_since(started);
    });
  }

  // Source: audio in chunks, each followed by the utterances it completes
  // and the frames it covers.
  threads.emplace_back([&] {
    const int sr = cfg.spectrogram.sample_rate;
    const std::int64_t total = static_cast<std::int64_t>(input.audio.samples.size());
    const std::int64_t chunk = std::max<std::int64_t>(1, std::llround(cfg.chunk_seconds * sr));
    const std::int64_t num = input.frames.frame_rate.num, den = input.frames.frame_rate.den;
    const std::size_t n_frames = input.frames.frames.size();
    std::size_t next_utt = 0, next_frame = 0;

    auto push_utterances = [&](std::int64_t covered, bool all) {
      while (next_utt < input.utterances.size()) {
        const auto& u = input.utterances[next_utt];
        if (!all && !u.words.empty() && std::llround(u.words.back().end_s * sr) > covered) break;
        if (!u.words.empty()) source.emit(ContentType::kTranscript, u, u.words.front().start_s, u.words.back().end_s);
        ++next_utt;
      }
    };
    auto push_frames = [&](std::size_t upto) {
      upto = std::min(upto, n_frames);
      if (upto <= next_frame) return;
      FrameChunk fc;
      fc.first_index = next_frame;
      fc.frames = FrameSequence{input.frames.width, input.frames.height, input.frames.frame_rate, {}};
      fc.frames.frames.assign(input.frames.frames.begin() + static_cast<std::ptrdiff_t>(next_frame),
                              input.frames.frames.begin() + static_cast<std::ptrdiff_t>(upto));
      if (input.track) {
        fc.tracked = true;
        for (const auto& b : input.track->entries)
          if (b.frame_index >= next_frame && b.frame_index < upto) fc.track.entries.push_back(b);
      }
      const double s = static_cast<double>(next_frame) * static_cast<double>(den) / static_cast<double>(num);
      const double e = static_cast<double>(upto) * static_cast<double>(den) / static_cast<double>(num);
      next_frame = upto;
      source.emit(ContentType::kFrames, std::move(fc), s, e);
    };

    for (std::int64_t k = 0, begin = 0; begin < total; ++k, begin += chunk) {
      const std::int64_t end = std::min(total, begin + chunk);
      if (cfg.realtime)
        std::this_thread::sleep_until(
            t0 + std::chrono::duration_cast<Clock::duration>(
                     std::chrono::duration<double>(static_cast<double>(end) / sr)));
      AudioBuffer piece{sr, 1, {}};
      piece.samples.assign(input.audio.samples.begin() + begin, input.audio.samples.begin() + end);
      source.emit(ContentType::kAudio, std::move(piece), static_cast<double>(begin) / sr,
                  static_cast<double>(end) / sr);
      push_utterances(end, false);
      // frames with timestamp f/fps < end/sr
      const std::int64_t q = den * sr;
      push_frames(static_cast<std::size_t>((end * num + q - 1) / q));
    }
    push_utterances(total, true);
    push_frames(n_frames);
    source.close(MessageKind::kEnd, {});
  });

  for (auto& t : threads) t.join();

  RunReport report;
  report.input_duration_s = input.audio.duration_s();
  for (std::size_t i = 0; i < n; ++i) {
    StageReport s;
    s.name = p.nodes[i].name;
    s.type = p.nodes[i].descriptor.type;
    s.status = results[i].failed ? "error" : "ok";
    s.error = results[i].error;
    s.wall_time_s = results[i].wall_time_s;
    s.busy_time_s = results[i].busy_time_s;
    s.messages_in = results[i].messages_in;
    s.bytes_in = results[i].bytes_in;
    s.messages_out = emitters[i]->messages_out;
    s.bytes_out = emitters[i]->bytes_out;
    s.first_output_latency_s = emitters[i]->first_output;
    report.stages.push_back(std::move(s));
    if (results[i].failed && report.ok()) {
      report.status = "error";
    }
  }
  if (!report.ok()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (results[i].failed && !results[i].upstream) {
        report.error = "stage '" + p.nodes[i].name + "': " + results[i].error;
        report.error_type = results[i].error_type;
        break;
      }
    }
    report.wall_time_s = seconds_since(t0);
    return report;
  }

  // Outputs are written only after every stage succeeded.
  try {
    const auto index_of = [&](const std::string& name) {
      for (std::size_t i = 0; i < n; ++i)
        if (p.nodes[i].name == name) return i;
      return n;
    };
    AudioTimeline timeline(cfg.spectrogram.sample_rate);
    for (const auto& m : emitters[index_of(p.last_audio)]->recorded)
      if (m.content_type == ContentType::kAudio)
        timeline.place(to_pipeline_audio(m.as<AudioBuffer>(), cfg.spectrogram.sample_rate), m.start_s);
    timeline.pad_to(input.audio.samples.size());
    write_wav(timeline.audio(), out_dir / "audio.wav");

    FrameSequence frames{input.frames.width, input.frames.height, input.frames.frame_rate, {}};
    for (const auto& m : emitters[index_of(p.join)]->recorded) {
      if (m.content_type != ContentType::kFrames) continue;
      const auto& fc = m.as<FrameChunk>();
      if (fc.first_index != frames.frames.size())
        throw StageError("join stage '" + p.join + "' emitted frames out of order");
      if (fc.frames.width != frames.width || fc.frames.height != frames.height)
        throw StageError("join stage '" + p.join + "' changed the frame size");
      frames.frames.insert(frames.frames.end(), fc.frames.frames.begin(), fc.frames.frames.end());
    }
    if (frames.frames.size() != input.frames.frames.size())
      throw StageError("join stage '" + p.join + "' emitted " + std::to_string(frames.frames.size()) +
                       " frames for " + std::to_string(input.frames.frames.size()) + " input frames");
    write_frame_seq(frames, out_dir / "frames");

    json manifest_out = {{"audio", "audio.wav"}, {"frames", "frames"}};
    report.outputs = {"audio.wav", "frames"};

    std::string ssml;
    bool has_ssml = false;
    for (const auto& node : p.nodes) {
      if (node.branch != Branch::kAudio || !node.descriptor.produces_type(ContentType::kSsml)) continue;
      has_ssml = true;
      ssml.clear();
      for (const auto& m : emitters[index_of(node.name)]->recorded)
        if (m.content_type == ContentType::kSsml) ssml += m.as<std::string>() + "\n";
    }
    if (has_ssml) {
      write_text_file(out_dir / "translation.ssml", ssml);
      manifest_out["translation"] = "translation.ssml";
      report.outputs.push_back("translation.ssml");
    }

    std::vector<std::string> inter;
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path dir = out_dir / "intermediates" / p.nodes[i].name;
      for (const auto& m : emitters[i]->recorded) {
        if (m.content_type == ContentType::kFrames) continue;
        char name[32];
        std::snprintf(name, sizeof name, "%06llu.", static_cast<unsigned long long>(m.seq));
        const fs::path rel = fs::path("intermediates") / p.nodes[i].name /
                             (name + std::string(payload_extension(m.content_type)));
        fs::create_directories(dir);
        write_binary_file(out_dir / rel, serialize_payload(m.content_type, *m.payload));
        inter.push_back(rel.generic_string());
      }
    }
    std::sort(inter.begin(), inter.end());
    manifest_out["intermediates"] = inter;
    if (!inter.empty()) report.outputs.push_back("intermediates");
    write_text_file(out_dir / "outputs.json", manifest_out.dump(2) + "\n");
    report.outputs.push_back("outputs.json");
  } catch (const std::exception& e) {
    remove_outputs(out_dir);
    report.status = "error";
    report.error = std::string("writing outputs: ") + e.what();
    report.error_type = error_type_name(e);
    report.outputs.clear();
  }
  report.wall_time_s = seconds_since(t0);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

class CollectingEmitter final : public Emitter {
 public:
  explicit CollectingEmitter(std::vector<ContentType> produces) : produces_(std::move(produces)) {}

  void emit(ContentType type, Payload payload, double start_s, double end_s) override {
    std::lock_guard lock(mu_);
    if (std::find(produces_.begin(), produces_.end(), type) == produces_.end())
      throw StageError("stage emitted undeclared content type " + std::string(content_type_name(type)));
    check_payload(type, payload);
    StageMessage m;
    m.stream_id = "out." + std::string(content_type_name(type));
    m.seq = seqs_[type]++;
    m.content_type = type;
    m.payload = std::make_shared<const Payload>(std::move(payload));
    m.start_s = start_s;
    m.end_s = end_s;
    out.push_back(std::move(m));
  }

  std::vector<StageMessage> out;

 private:
  std::vector<ContentType> produces_;
  std::map<ContentType, std::uint64_t> seqs_;
  std::mutex mu_;
};

}  // namespace

std::vector<StageMessage> run_standalone(Stage& stage, const RunContext& base_ctx,
                                         const std::vector<StandaloneInput>& inputs) {
  const StageDescriptor desc = stage.descriptor();
  RunContext ctx = base_ctx;
  ctx.inputs.clear();
  std::vector<StageMessage> msgs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    if (!desc.accepts_type(in.type))
      throw ConfigError("stage '" + desc.type + "' does not accept " + std::string(content_type_name(in.type)));
    check_payload(in.type, in.payload);
    StageMessage m;
    m.stream_id = "input" + std::to_string(i) + "." + std::string(content_type_name(in.type));
    m.content_type = in.type;
    m.payload = std::make_shared<const Payload>(in.payload);
    m.start_s = in.start_s;
    m.end_s = in.end_s;
    ctx.inputs[stage.standalone_port(in.type)].push_back(in.type);
    msgs.push_back(std::move(m));
  }
  CollectingEmitter out(desc.produces);
  try {
    stage.prepare(ctx);
    stage.begin(out);
    for (const auto& m : msgs) stage.process(m, stage.standalone_port(m.content_type), out);
    for (const auto& m : msgs) {
      StageMessage end = m;
      end.seq = 1;
      end.kind = MessageKind::kEnd;
      end.payload.reset();
      stage.end_of_stream(end, stage.standalone_port(m.content_type), out);
    }
    stage.finish(out);
  } catch (...) {
    stage.abort();
    throw;
  }
  return std::move(out.out);
}

}  // namespace dub::engine

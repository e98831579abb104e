#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "dub/engine.hpp"
#include "dub/error.hpp"
#include "dub/stages.hpp"

namespace dub::engine {

namespace {

using nlohmann::json;

void check_params(const StageSpec& spec, std::initializer_list<std::string_view> allowed) {
  if (!spec.params.is_object()) throw ConfigError("stage '" + spec.name + "': params must be an object");
  for (const auto& [key, value] : spec.params.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("stage '" + spec.name + "': unknown param '" + key + "'");
  }
}

template <typename T>
T param(const json& params, const char* key, T fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("param '") + key + "' has the wrong type");
  }
}

AudioBuffer to_mono_at(const AudioBuffer& in, int rate) {
  AudioBuffer mono = in;
  if (in.channels != 1) {
    mono.channels = 1;
    mono.samples.assign(in.frame_count(), 0.0);
    const auto ch = static_cast<std::size_t>(in.channels);
    for (std::size_t i = 0; i < mono.samples.size(); ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < ch; ++c) acc += in.samples[i * ch + c];
      mono.samples[i] = acc / static_cast<double>(ch);
    }
  }
  return dsp::resample_linear(mono, rate);
}

std::size_t seconds_to_samples(double s, int rate) {
  return static_cast<std::size_t>(std::max<long long>(0, std::llround(s * rate)));
}

// ---------------------------------------------------------------------------

class AsrStage final : public Stage {
 public:
  explicit AsrStage(const StageSpec& spec) {
    check_params(spec, {"z_threshold"});
    cfg_.z_threshold = param(spec.params, "z_threshold", 1.0);
  }

  StageDescriptor descriptor() const override {
    return {"stub_asr", {ContentType::kAudio, ContentType::kTranscript}, {ContentType::kTranscript}};
  }

  void prepare(const RunContext& ctx) override { audio_.sample_rate = ctx.spectrogram.sample_rate; }

  void process(const StageMessage& msg, Port, Emitter& out) override {
    if (msg.content_type == ContentType::kAudio) {
      const auto chunk = to_mono_at(msg.as<AudioBuffer>(), audio_.sample_rate);
      audio_.samples.insert(audio_.samples.end(), chunk.samples.begin(), chunk.samples.end());
    } else if (msg.content_type == ContentType::kTranscript) {
      pending_.push_back(msg.as<stages::EmphasisTranscript>());
    }
    drain(out);
  }

  void end_of_stream(const StageMessage& msg, Port, Emitter& out) override {
    if (msg.content_type == ContentType::kAudio) audio_done_ = true;
    drain(out);
  }

  void finish(Emitter& out) override {
    audio_done_ = true;
    drain(out);
  }

 private:
  void drain(Emitter& out) {
    while (!pending_.empty()) {
      const auto& utt = pending_.front();
      if (!utt.words.empty() && !audio_done_ &&
          seconds_to_samples(utt.words.back().end_s, audio_.sample_rate) > audio_.samples.size())
        return;
      if (!utt.words.empty()) {
        auto flagged = stages::stub_asr(audio_, utt, cfg_);
        const double s = flagged.words.front().start_s, e = flagged.words.back().end_s;
        out.emit(ContentType::kTranscript, std::move(flagged), s, e);
      }
      pending_.pop_front();
    }
  }

  stages::AsrConfig cfg_;
  AudioBuffer audio_;
  bool audio_done_ = false;
  std::deque<stages::EmphasisTranscript> pending_;
};

// ---------------------------------------------------------------------------

class MtStage final : public Stage {
 public:
  explicit MtStage(const StageSpec& spec) : spec_(spec) {
    check_params(spec, {"lexicon", "heads", "model_dim"});
  }

  StageDescriptor descriptor() const override {
    return {"lexicon_mt", {ContentType::kTranscript}, {ContentType::kSsml, ContentType::kAttn}};
  }

  void prepare(const RunContext& ctx) override {
    if (auto p = ctx.param_path("lexicon"))
      cfg_ = stages::parse_mt_lexicon(read_text_file(*p));
    else if (ctx.manifest && ctx.manifest->mt_lexicon_path)
      cfg_ = stages::parse_mt_lexicon(read_text_file(*ctx.manifest->mt_lexicon_path));
    cfg_.heads = param(spec_.params, "heads", 8);
    cfg_.model_dim = param(spec_.params, "model_dim", 512);
    if (cfg_.heads < 1) throw ConfigError("lexicon_mt: heads must be >= 1");
  }

  void process(const StageMessage& msg, Port, Emitter& out) override {
    if (msg.content_type != ContentType::kTranscript) return;
    auto result = stages::lexicon_mt(msg.as<stages::EmphasisTranscript>(), cfg_);
    out.emit(ContentType::kSsml, std::move(result.ssml), msg.start_s, msg.end_s);
    out.emit(ContentType::kAttn, std::move(result.attention), msg.start_s, msg.end_s);
  }

 private:
  StageSpec spec_;
  stages::LexiconMtConfig cfg_;
};

// ---------------------------------------------------------------------------

class TtsStage final : public Stage {
 public:
  explicit TtsStage(const StageSpec& spec) : spec_(spec) {
    check_params(spec, {"lexicon", "base_duration_frames", "base_energy", "pitch_start_hz",
                        "pitch_end_hz", "duration_mult", "energy_mult", "pitch_shift_semitones",
                        "direction"});
  }

  StageDescriptor descriptor() const override {
    return {"toy_tts",
            {ContentType::kSsml},
            {ContentType::kAudio, ContentType::kMel, ContentType::kProsody}};
  }

  void prepare(const RunContext& ctx) override {
    if (auto p = ctx.param_path("lexicon"))
      lex_ = stages::parse_tts_lexicon(read_text_file(*p));
    else if (ctx.manifest && ctx.manifest->tts_lexicon_path)
      lex_ = stages::parse_tts_lexicon(read_text_file(*ctx.manifest->tts_lexicon_path));
    const json& p = spec_.params;
    lex_.base_duration_frames = param(p, "base_duration_frames", lex_.base_duration_frames);
    lex_.base_energy = param(p, "base_energy", lex_.base_energy);
    lex_.pitch_start_hz = param(p, "pitch_start_hz", lex_.pitch_start_hz);
    lex_.pitch_end_hz = param(p, "pitch_end_hz", lex_.pitch_end_hz);
    policy_.duration_mult = param(p, "duration_mult", policy_.duration_mult);
    policy_.energy_mult = param(p, "energy_mult", policy_.energy_mult);
    policy_.pitch_shift_semitones = param(p, "pitch_shift_semitones", policy_.pitch_shift_semitones);
    const auto dir = param<std::string>(p, "direction", "exaggerate");
    if (dir == "exaggerate")
      policy_.direction = prosody::PitchDirection::kExaggerate;
    else if (dir == "toward_median")
      policy_.direction = prosody::PitchDirection::kTowardMedian;
    else
      throw ConfigError("toy_tts: direction must be exaggerate or toward_median");
    policy_.validate();
    if (lex_.base_duration_frames < 1) throw ConfigError("toy_tts: base_duration_frames must be >= 1");
    cfg_ = ctx.spectrogram;
    seed_ = ctx.seed;
  }

  void process(const StageMessage& msg, Port, Emitter& out) override {
    if (msg.content_type != ContentType::kSsml) return;
    auto r = stages::toy_tts(msg.as<std::string>(), lex_, cfg_, policy_, seed_ + ordinal_++);
    out.emit(ContentType::kAudio, std::move(r.audio), msg.start_s, msg.end_s);
    out.emit(ContentType::kMel, std::move(r.mel), msg.start_s, msg.end_s);
    out.emit(ContentType::kProsody, std::move(r.prosody), msg.start_s, msg.end_s);
  }

 private:
  StageSpec spec_;
  stages::TtsLexicon lex_ = stages::TtsLexicon::letters();
  prosody::EmphasisPolicy policy_;
  dsp::SpectrogramConfig cfg_;
  std::uint64_t seed_ = 0;
  std::uint64_t ordinal_ = 0;
};

// ---------------------------------------------------------------------------

/// Converts each synthesized utterance toward the speaker of the original
/// audio. The target sample is the input audio from 0 to the utterance end.
class VcStage final : public Stage {
 public:
  explicit VcStage(const StageSpec& spec) {
    check_params(spec, {"griffin_lim_iterations"});
    iterations_ = param(spec.params, "griffin_lim_iterations", 32);
    if (iterations_ < 0) throw ConfigError("formant_shift_vc: griffin_lim_iterations must be >= 0");
  }

  StageDescriptor descriptor() const override {
    return {"formant_shift_vc",
            {ContentType::kAudio, ContentType::kMel},
            {ContentType::kAudio, ContentType::kMel}};
  }

  Port standalone_port(ContentType t) const override {
    return t == ContentType::kAudio ? Port::kSpeakerReference : Port::kMain;
  }

  void prepare(const RunContext& ctx) override {
    cfg_ = ctx.spectrogram;
    seed_ = ctx.seed;
    reference_.sample_rate = cfg_.sample_rate;
    auto main = ctx.inputs.find(Port::kMain);
    use_mel_ = main != ctx.inputs.end() &&
               std::find(main->second.begin(), main->second.end(), ContentType::kMel) !=
                   main->second.end();
    if (!ctx.inputs.contains(Port::kSpeakerReference))
      throw ConfigError("formant_shift_vc: no speaker reference audio is wired to '" +
                        ctx.node_name + "'");
  }

  void process(const StageMessage& msg, Port port, Emitter& out) override {
    if (port == Port::kSpeakerReference) {
      if (msg.content_type == ContentType::kAudio) {
        const auto chunk = to_mono_at(msg.as<AudioBuffer>(), cfg_.sample_rate);
        reference_.samples.insert(reference_.samples.end(), chunk.samples.begin(), chunk.samples.end());
      }
    } else if (msg.content_type == ContentType::kMel && use_mel_) {
      pending_.push_back({msg.as<dsp::MelSpectrogram>(), msg.start_s, msg.end_s});
    } else if (msg.content_type == ContentType::kAudio && !use_mel_) {
      pending_.push_back({dsp::mel_spectrogram(to_mono_at(msg.as<AudioBuffer>(), cfg_.sample_rate), cfg_),
                          msg.start_s, msg.end_s});
    }
    drain(out);
  }

  void end_of_stream(const StageMessage&, Port port, Emitter& out) override {
    if (port == Port::kSpeakerReference) reference_done_ = true;
    drain(out);
  }

  void finish(Emitter& out) override {
    reference_done_ = true;
    drain(out);
  }

 private:
  struct Pending {
    dsp::MelSpectrogram mel;
    double start_s, end_s;
  };

  void drain(Emitter& out) {
    while (!pending_.empty()) {
      const auto& p = pending_.front();
      const std::size_t need = seconds_to_samples(p.end_s, cfg_.sample_rate);
      if (!reference_done_ && reference_.samples.size() < need) return;
      AudioBuffer target{cfg_.sample_rate, 1, {}};
      target.samples.assign(reference_.samples.begin(),
                            reference_.samples.begin() +
                                static_cast<std::ptrdiff_t>(std::min(need, reference_.samples.size())));
      auto r = stages::formant_shift_vc(p.mel, target, cfg_, seed_ + ordinal_++, iterations_);
      out.emit(ContentType::kAudio, std::move(r.audio), p.start_s, p.end_s);
      out.emit(ContentType::kMel, std::move(r.mel), p.start_s, p.end_s);
      pending_.pop_front();
    }
  }

  int iterations_ = 32;
  dsp::SpectrogramConfig cfg_;
  std::uint64_t seed_ = 0;
  std::uint64_t ordinal_ = 0;
  bool use_mel_ = true;
  AudioBuffer reference_;
  bool reference_done_ = false;
  std::deque<Pending> pending_;
};

// ---------------------------------------------------------------------------

/// Supplies a face box per frame: boxes already attached to a chunk win,
/// otherwise the whole frame is the face.
class FaceTrackStage final : public Stage {
 public:
  explicit FaceTrackStage(const StageSpec& spec) { check_params(spec, {}); }

  StageDescriptor descriptor() const override {
    return {"face_track", {ContentType::kFrames}, {ContentType::kFrames}};
  }

  void process(const StageMessage& msg, Port, Emitter& out) override {
    if (msg.content_type != ContentType::kFrames) return;
    FrameChunk chunk = msg.as<FrameChunk>();
    if (!chunk.tracked) {
      chunk.track = stages::full_frame_track(chunk.frames, chunk.first_index);
      chunk.tracked = true;
    }
    out.emit(ContentType::kFrames, std::move(chunk), msg.start_s, msg.end_s);
  }
};

// ---------------------------------------------------------------------------

/// Joins frames with the dubbed audio. Each dubbed audio message extends
/// the placed timeline; the frames whose audio window ends inside the new
/// part form one segment, drawn with that segment's peak RMS as the
/// normalizer once all its frames have arrived. Frames past the last
/// utterance reuse the last normalizer.
class LipgenStage final : public Stage {
 public:
  explicit LipgenStage(const StageSpec& spec) {
    check_params(spec, {"width_frac", "height_frac", "center_y_frac"});
    geometry_.width_frac = param(spec.params, "width_frac", geometry_.width_frac);
    geometry_.height_frac = param(spec.params, "height_frac", geometry_.height_frac);
    geometry_.center_y_frac = param(spec.params, "center_y_frac", geometry_.center_y_frac);
  }

  StageDescriptor descriptor() const override {
    return {"energy_lipgen",
            {ContentType::kFrames, ContentType::kAudio, ContentType::kMel},
            {ContentType::kFrames}};
  }

  Port standalone_port(ContentType t) const override {
    return t == ContentType::kFrames ? Port::kMain : Port::kDubbedAudio;
  }

  void prepare(const RunContext& ctx) override {
    timeline_ = AudioTimeline(ctx.spectrogram.sample_rate);
    rate_ = ctx.frame_rate;
  }

  void process(const StageMessage& msg, Port port, Emitter& out) override {
    if (msg.content_type == ContentType::kFrames) {
      add_frames(msg.as<FrameChunk>());
    } else if (msg.content_type == ContentType::kAudio && port != Port::kMain) {
      const auto buf = to_mono_at(msg.as<AudioBuffer>(), timeline_.audio().sample_rate);
      timeline_.place(buf, msg.start_s);
      extend_segments();
    }
    flush(out, false);
  }

  void end_of_stream(const StageMessage& msg, Port, Emitter& out) override {
    if (msg.content_type == ContentType::kFrames) frames_done_ = true;
    flush(out, false);
  }

  void finish(Emitter& out) override {
    frames_done_ = true;
    flush(out, true);
  }

 private:
  struct Segment {
    std::size_t begin, end;
  };

  std::int64_t window_end(std::size_t f) const {
    const std::int64_t sr = timeline_.audio().sample_rate;
    const std::int64_t len = std::max<std::int64_t>(1, (2 * sr * rate_.den + rate_.num) / (2 * rate_.num));
    const std::int64_t numer = 2 * static_cast<std::int64_t>(f) * rate_.den * sr - len * rate_.num;
    const std::int64_t denom = 2 * rate_.num;
    std::int64_t start = numer / denom;
    if (numer % denom != 0 && numer < 0) --start;
    return start + len;
  }

  void add_frames(const FrameChunk& chunk) {
    if (chunk.first_index != received_)
      throw StageError("energy_lipgen: frame chunk starts at " + std::to_string(chunk.first_index) +
                       ", expected " + std::to_string(received_));
    if (received_ == 0) {
      width_ = chunk.frames.width;
      height_ = chunk.frames.height;
      rate_ = chunk.frames.frame_rate;
    }
    for (const auto& img : chunk.frames.frames) buffered_.push_back(img);
    for (const auto& box : chunk.track.entries) track_.entries.push_back(box);
    received_ += chunk.frames.frames.size();
  }

  void extend_segments() {
    const auto horizon = static_cast<std::int64_t>(timeline_.end());
    std::size_t f = segment_next_;
    while (window_end(f) <= horizon) ++f;
    if (f > segment_next_) segments_.push_back({segment_next_, f});
    segment_next_ = f;
  }

  void flush(Emitter& out, bool final) {
    while (!segments_.empty()) {
      Segment seg = segments_.front();
      if (frames_done_) seg.end = std::min(seg.end, received_);
      if (!frames_done_ && received_ < seg.end) return;
      if (seg.begin < seg.end) {
        const auto rms = stages::frame_window_rms(timeline_.audio(), rate_, seg.begin, seg.end - seg.begin);
        const double peak = *std::max_element(rms.begin(), rms.end());
        if (peak > 1e-9) last_norm_ = peak;
        draw(out, seg.end, peak);
      }
      segments_.pop_front();
    }
    if (final && emitted_ < received_) draw(out, received_, last_norm_);
  }

  void draw(Emitter& out, std::size_t end, double norm) {
    if (end <= emitted_) return;
    FrameSequence seq{width_, height_, rate_, {}};
    const std::size_t n = end - emitted_;
    seq.frames.assign(std::make_move_iterator(buffered_.begin()),
                      std::make_move_iterator(buffered_.begin() + static_cast<std::ptrdiff_t>(n)));
    buffered_.erase(buffered_.begin(), buffered_.begin() + static_cast<std::ptrdiff_t>(n));
    FaceTrack track;
    for (const auto& box : track_.entries)
      if (box.frame_index >= emitted_ && box.frame_index < end) track.entries.push_back(box);
    FrameChunk chunk;
    chunk.first_index = emitted_;
    chunk.frames = stages::energy_lipgen(seq, track, timeline_.audio(), emitted_, norm, geometry_);
    chunk.track = std::move(track);
    chunk.tracked = true;
    const double s = static_cast<double>(emitted_) / rate_.value();
    const double e = static_cast<double>(end) / rate_.value();
    emitted_ = end;
    out.emit(ContentType::kFrames, std::move(chunk), s, e);
  }

  stages::LipGeometry geometry_;
  AudioTimeline timeline_{16000};
  Rational rate_;
  int width_ = 0, height_ = 0;
  std::deque<Image> buffered_;  // frames [emitted_, received_)
  FaceTrack track_;
  std::size_t received_ = 0;
  std::size_t emitted_ = 0;
  bool frames_done_ = false;
  std::size_t segment_next_ = 0;
  std::deque<Segment> segments_;
  double last_norm_ = 0.0;
};

template <typename T>
StageFactory factory() {
  return [](const StageSpec& spec) { return std::make_unique<T>(spec); };
}

}  // namespace

StageRegistry builtin_registry() {
  StageRegistry r;
  r.add("stub_asr", factory<AsrStage>());
  r.add("lexicon_mt", factory<MtStage>());
  r.add("toy_tts", factory<TtsStage>());
  r.add("formant_shift_vc", factory<VcStage>());
  r.add("face_track", factory<FaceTrackStage>(), Branch::kVideo);
  r.add("energy_lipgen", factory<LipgenStage>(), Branch::kVideo);
  return r;
}

}  // namespace dub::engine

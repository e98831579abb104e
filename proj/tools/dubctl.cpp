// dubctl: command-line entry point for the dubbing cascade.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dub/engine.hpp"
#include "dub/error.hpp"
#include "dub/metrics.hpp"
#include "dub/sample.hpp"
#include "dub/ssml.hpp"
#include "dub/stages.hpp"

namespace fs = std::filesystem;
using namespace dub;

namespace {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

std::vector<std::string> read_lines(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file " + path.string());
  std::istringstream in(read_text_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

metrics::Words split_words(const std::string& line) {
  std::istringstream in(line);
  metrics::Words out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<metrics::Words> read_corpus(const fs::path& path) {
  std::vector<metrics::Words> out;
  for (const auto& line : read_lines(path)) out.push_back(split_words(line));
  return out;
}

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  return read_text_file(path);
}

std::string error_name(const std::exception& e) {
  if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
  if (dynamic_cast<const StageError*>(&e)) return "StageError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  return "Error";
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config, input, out, report;
  std::uint64_t seed = 0;
  std::optional<double> chunk_seconds;
  std::optional<std::size_t> capacity;
  bool realtime = false;
};

int cmd_run(const RunArgs& a) {
  auto cfg = engine::load_pipeline_config(a.config);
  cfg.seed = a.seed;
  if (a.chunk_seconds) cfg.chunk_seconds = *a.chunk_seconds;
  if (a.capacity) cfg.channel_capacity = *a.capacity;
  if (a.realtime) cfg.realtime = true;
  cfg.validate();
  const auto manifest = read_manifest(a.input);
  auto pipeline = engine::build_pipeline(cfg);
  const auto report = pipeline.run(manifest, a.out);
  if (!a.report.empty()) write_text_file(a.report, report.to_json().dump(2) + "\n");
  if (!report.ok()) {
    std::cerr << "error: " << report.error_type << ": " << report.error << "\n";
    return 1;
  }
  std::cerr << "ok: " << pipeline.nodes().size() << " stages, " << report.input_duration_s
            << " s of input in " << report.wall_time_s << " s; outputs in " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct StageArgs {
  std::string name, config, manifest;
  std::vector<std::string> in, out;
  std::uint64_t seed = 0;
};

std::optional<ContentType> type_for_path(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".wav") return ContentType::kAudio;
  if (ext == ".mel") return ContentType::kMel;
  if (ext == ".transcript") return ContentType::kTranscript;
  if (ext == ".ssml") return ContentType::kSsml;
  if (ext == ".prosody") return ContentType::kProsody;
  if (ext == ".attn") return ContentType::kAttn;
  if (ext == ".txt") return ContentType::kText;
  if (ext.empty()) return ContentType::kFrames;
  return std::nullopt;
}

int cmd_stage_run(const StageArgs& a) {
  const auto cfg = engine::load_pipeline_config(a.config);
  const engine::StageSpec* spec = nullptr;
  for (const auto& s : cfg.stages)
    if (s.name == a.name) spec = &s;
  if (!spec) throw ConfigError("config has no stage named '" + a.name + "'");

  std::unique_ptr<engine::Stage> stage;
  if (spec->kind == "builtin")
    stage = engine::builtin_registry().create(*spec);
  else
    stage = engine::make_external_stage(
        spec->name, spec->command,
        std::chrono::milliseconds(std::llround(cfg.watchdog_seconds * 1000)),
        std::chrono::milliseconds(std::llround(cfg.handshake_seconds * 1000)));

  std::optional<InputManifest> manifest;
  if (!a.manifest.empty()) manifest = read_manifest(a.manifest);

  std::vector<engine::StandaloneInput> inputs;
  std::optional<FaceTrack> track;
  std::optional<FrameSequence> frames;
  for (const auto& path_str : a.in) {
    const fs::path path = path_str;
    if (!fs::exists(path)) throw IoError("missing input " + path.string());
    if (path.extension() == ".jsonl") {
      track = read_face_track(path);
      continue;
    }
    if (fs::is_directory(path)) {
      frames = read_frame_seq(path);
      continue;
    }
    const auto type = type_for_path(path);
    if (!type) throw InvalidArgument("cannot infer a content type for " + path.string());
    engine::StandaloneInput in{*type, deserialize_payload(*type, read_binary_file(path)), 0.0, 0.0};
    if (*type == ContentType::kAudio) {
      in.end_s = std::get<AudioBuffer>(in.payload).duration_s();
    } else if (*type == ContentType::kTranscript) {
      const auto& t = std::get<stages::EmphasisTranscript>(in.payload);
      if (!t.words.empty()) {
        in.start_s = t.words.front().start_s;
        in.end_s = t.words.back().end_s;
      }
    }
    inputs.push_back(std::move(in));
  }
  engine::RunContext ctx;
  if (frames) {
    if (track) track->validate(&*frames);
    FrameChunk chunk;
    chunk.frames = *frames;
    chunk.tracked = track.has_value();
    if (track) chunk.track = *track;
    ctx.frame_rate = frames->frame_rate;
    inputs.insert(inputs.begin(), {ContentType::kFrames, std::move(chunk), 0.0, frames->duration_s()});
  }
  ctx.node_name = spec->name;
  ctx.spectrogram = cfg.spectrogram;
  ctx.seed = engine::stage_seed(a.seed, spec->name);
  ctx.params = spec->params;
  ctx.base_dir = cfg.base_dir;
  ctx.manifest = manifest ? &*manifest : nullptr;

  const auto produced = engine::run_standalone(*stage, ctx, inputs);
  for (const auto& out_str : a.out) {
    const fs::path out = out_str;
    const auto type = type_for_path(out);
    if (!type) throw InvalidArgument("cannot infer a content type for output " + out.string());
    std::vector<const StageMessage*> msgs;
    for (const auto& m : produced)
      if (m.content_type == *type) msgs.push_back(&m);
    if (msgs.empty())
      throw StageError("stage '" + a.name + "' produced no " + std::string(content_type_name(*type)));
    switch (*type) {
      case ContentType::kAudio: {
        engine::AudioTimeline tl(cfg.spectrogram.sample_rate);
        for (const auto* m : msgs) tl.place(m->as<AudioBuffer>(), m->start_s);
        write_wav(tl.audio(), out);
        break;
      }
      case ContentType::kFrames: {
        const auto& first = msgs.front()->as<FrameChunk>().frames;
        FrameSequence seq{first.width, first.height, first.frame_rate, {}};
        for (const auto* m : msgs) {
          const auto& f = m->as<FrameChunk>().frames.frames;
          seq.frames.insert(seq.frames.end(), f.begin(), f.end());
        }
        write_frame_seq(seq, out);
        break;
      }
      case ContentType::kSsml:
      case ContentType::kText: {
        std::string text;
        for (const auto* m : msgs) text += m->as<std::string>() + "\n";
        write_text_file(out, text);
        break;
      }
      default:
        if (msgs.size() != 1)
          throw StageError("stage '" + a.name + "' produced " + std::to_string(msgs.size()) + " " +
                           std::string(content_type_name(*type)) + " messages; expected one");
        write_binary_file(out, serialize_payload(*type, *msgs.front()->payload));
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_probe(const fs::path& dir) {
  if (fs::exists(dir / "outputs.json")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto bytes = read_binary_file(dir / f);
      char hash[17];
      std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
      std::cout << f.generic_string() << " " << bytes.size() << " " << hash << "\n";
    }
    return 0;
  }
  const auto m = read_manifest(dir);
  const auto audio = read_wav(m.audio_path);
  const auto frames = read_frame_seq(m.frames_dir);
  std::cout << "audio " << audio.sample_rate << " Hz, " << audio.channels << " ch, "
            << audio.duration_s() << " s\n";
  std::cout << "frames " << frames.frames.size() << " x " << frames.width << "x" << frames.height
            << " at " << format_rational(frames.frame_rate) << " fps (" << frames.duration_s() << " s)\n";
  if (m.face_track_path) {
    const auto track = read_face_track(*m.face_track_path, &frames);
    std::cout << "face_track " << track.entries.size() << " boxes\n";
  } else {
    std::cout << "face_track none (full-frame boxes)\n";
  }
  if (m.transcript_path) {
    const auto utts = stages::parse_sidecar(read_text_file(*m.transcript_path));
    std::size_t words = 0;
    for (const auto& u : utts) {
      words += u.words.size();
      if (!u.words.empty() && u.words.back().end_s > audio.duration_s())
        throw InvalidArgument("transcript word '" + u.words.back().text + "' ends after the audio");
    }
    std::cout << "transcript " << utts.size() << " utterances, " << words << " words\n";
  } else {
    std::cout << "transcript none\n";
  }
  if (m.mt_lexicon_path)
    std::cout << "mt_lexicon " << stages::parse_mt_lexicon(read_text_file(*m.mt_lexicon_path)).entries.size()
              << " entries\n";
  if (m.tts_lexicon_path)
    std::cout << "tts_lexicon " << stages::parse_tts_lexicon(read_text_file(*m.tts_lexicon_path)).words.size()
              << " words\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dubctl: speech-translated lip-sync video dubbing cascade"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run the full cascade on an input manifest");
  run->add_option("--config", run_args.config, "pipeline config file")->required();
  run->add_option("--input", run_args.input, "input manifest directory")->required();
  run->add_option("--out", run_args.out, "output directory")->required();
  run->add_option("--seed", run_args.seed, "global seed (default 0)");
  run->add_option("--chunk-seconds", run_args.chunk_seconds, "audio chunk length");
  run->add_option("--capacity", run_args.capacity, "channel capacity in messages");
  run->add_flag("--realtime", run_args.realtime, "release input chunks at wall-clock pace");
  run->add_option("--report", run_args.report, "write the run report (JSON) to this file");

  StageArgs stage_args;
  auto* stage = app.add_subcommand("stage", "single-stage operations");
  stage->require_subcommand(1);
  auto* stage_run = stage->add_subcommand("run", "run one configured stage on files");
  stage_run->add_option("name", stage_args.name, "stage name in the config")->required();
  stage_run->add_option("--config", stage_args.config, "pipeline config file")->required();
  stage_run->add_option("--in", stage_args.in, "input files (type from extension; directory = frames)")
      ->required();
  stage_run->add_option("--out", stage_args.out, "output files (type from extension)")->required();
  stage_run->add_option("--input", stage_args.manifest, "manifest directory supplying lexicons");
  stage_run->add_option("--seed", stage_args.seed, "global seed (default 0)");

  auto* metrics_cmd = app.add_subcommand("metrics", "evaluation metrics");
  metrics_cmd->require_subcommand(1);
  std::string ref, hyp, emb_a, emb_b;
  int max_offset = 15;
  auto* wer_cmd = metrics_cmd->add_subcommand("wer", "corpus word error rate, one segment per line");
  auto* bleu_cmd = metrics_cmd->add_subcommand("bleu", "corpus BLEU-4, one segment per line");
  for (auto* c : {wer_cmd, bleu_cmd}) {
    c->add_option("--ref", ref, "reference file")->required();
    c->add_option("--hyp", hyp, "hypothesis file")->required();
  }
  auto* lse_cmd = metrics_cmd->add_subcommand("lse", "LSE-D / LSE-C between embedding sequences");
  auto* fid_cmd = metrics_cmd->add_subcommand("fid", "Frechet distance between embedding sets");
  for (auto* c : {lse_cmd, fid_cmd}) {
    c->add_option("--a", emb_a, "embedding file (video for lse)")->required();
    c->add_option("--b", emb_b, "embedding file (audio for lse)")->required();
  }
  lse_cmd->add_option("--max-offset", max_offset, "offset search radius in frames");

  auto* ssml_cmd = app.add_subcommand("ssml", "emit or parse emphasis SSML");
  ssml_cmd->require_subcommand(1);
  std::vector<std::string> emit_words;
  std::vector<std::size_t> emit_emph;
  std::string emit_level = "strong", parse_path;
  auto* emit_cmd = ssml_cmd->add_subcommand("emit", "words to SSML");
  emit_cmd->add_option("words", emit_words, "words")->required();
  emit_cmd->add_option("--emphasize", emit_emph, "0-based indices of emphasized words");
  emit_cmd->add_option("--level", emit_level, "reduced, moderate or strong");
  auto* parse_cmd = ssml_cmd->add_subcommand("parse", "SSML to one line per word: index level word");
  parse_cmd->add_option("file", parse_path, "SSML file (default stdin)");

  std::string probe_dir;
  auto* probe = app.add_subcommand("probe", "validate an input manifest or list an output tree");
  probe->add_option("dir", probe_dir, "manifest or output directory")->required();

  std::string sample_out;
  SampleSpec sample_spec;
  auto* sample = app.add_subcommand("sample", "write a synthetic input manifest");
  sample->add_option("--out", sample_out, "directory")->required();
  sample->add_option("--seconds", sample_spec.seconds, "duration");
  sample->add_option("--seed", sample_spec.seed, "frame texture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*stage_run) return cmd_stage_run(stage_args);
    if (*wer_cmd) {
      std::cout << format_number(metrics::corpus_wer(read_corpus(ref), read_corpus(hyp))) << "\n";
      return 0;
    }
    if (*bleu_cmd) {
      std::cout << format_number(metrics::bleu(read_corpus(ref), read_corpus(hyp))) << "\n";
      return 0;
    }
    if (*lse_cmd) {
      const auto r = metrics::lse(metrics::parse_embeddings(read_text_file(emb_a)),
                                  metrics::parse_embeddings(read_text_file(emb_b)), max_offset);
      std::cout << "lse_d " << format_number(r.lse_d) << "\nlse_c " << format_number(r.lse_c)
                << "\noffset " << r.offset << "\nframes " << r.frames_used << "\n";
      return 0;
    }
    if (*fid_cmd) {
      std::cout << format_number(metrics::fid(metrics::parse_embeddings(read_text_file(emb_a)),
                                              metrics::parse_embeddings(read_text_file(emb_b))))
                << "\n";
      return 0;
    }
    if (*emit_cmd) {
      const auto level = ssml::parse_level(emit_level);
      if (!level) {
        std::cerr << "error: unknown emphasis level '" << emit_level << "'\n";
        return 2;
      }
      std::cout << ssml::emit(emit_words, {emit_emph.begin(), emit_emph.end()}, *level) << "\n";
      return 0;
    }
    if (*parse_cmd) {
      const auto doc = ssml::parse(read_input(parse_path));
      std::size_t i = 0;
      for (const auto& run_ : doc.runs)
        for (const auto& w : run_.words)
          std::cout << i++ << " " << (run_.emphasis ? ssml::level_name(*run_.emphasis) : "-") << " "
                    << w << "\n";
      return 0;
    }
    if (*probe) return cmd_probe(probe_dir);
    if (*sample) {
      write_sample(sample_out, sample_spec);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << error_name(e) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

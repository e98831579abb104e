#pragma once

#include <cstdint>
#include <filesystem>

namespace dub {

/// Synthetic input set: tone-burst speech with one loud word per
/// four-word utterance, drawn frames with a face region, a face track, a
/// timing sidecar and en->de / pronunciation lexicons.
struct SampleSpec {
  double seconds = 3.0;
  int sample_rate = 16000;
  int width = 96;
  int height = 96;
  std::int64_t fps = 25;
  std::uint64_t seed = 0;
};

/// Writes manifest.json and its files into `dir` (created if needed).
void write_sample(const std::filesystem::path& dir, const SampleSpec& spec = {});

}  // namespace dub

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dub/dsp.hpp"
#include "dub/media_io.hpp"
#include "dub/stages.hpp"

namespace dub::metrics {

using Words = std::vector<std::string>;

/// One embedding vector per video frame.
struct EmbeddingSequence {
  std::size_t dim = 1;
  dsp::Matrix vectors;  // T x dim

  std::size_t size() const { return vectors.rows; }
  void validate() const;
};

/// Text form: `emb v1 <dim> <T>` then T rows of dim values.
std::string format_embeddings(const EmbeddingSequence& e);
EmbeddingSequence parse_embeddings(std::string_view text);

/// Unit-cost word-level Levenshtein distance.
std::size_t edit_distance(const Words& reference, const Words& hypothesis);

/// Edits divided by |reference|. Case-sensitive, no text normalisation.
double wer(const Words& reference, const Words& hypothesis);

/// Corpus WER: total edits over total reference words.
double corpus_wer(const std::vector<Words>& references, const std::vector<Words>& hypotheses);

/// Corpus BLEU-4 with clipped n-gram counts and brevity penalty, one
/// reference per segment, no smoothing.
double bleu(const std::vector<Words>& references, const std::vector<Words>& hypotheses);

struct LseResult {
  double lse_d = 0.0;
  double lse_c = 0.0;
  /// Offset minimising the mean distance over the evaluated frames. Ties
  /// go to the smallest |offset|, then to the negative one.
  int offset = 0;
  std::size_t frames_used = 0;
  /// Per evaluated frame, the offset with the smallest distance.
  std::vector<int> frame_offsets;
};

/// D(t,o) = ||v_t - a_{t+o}|| over o in [-max_offset, max_offset] for the
/// frames with full coverage. lse_d = mean_t min_o D, lse_c = mean_t
/// (mean_o D - min_o D).
LseResult lse(const EmbeddingSequence& video, const EmbeddingSequence& audio, int max_offset = 15);

/// Frechet distance between Gaussian fits (unbiased covariance) of two
/// embedding sets. Never negative.
double fid(const EmbeddingSequence& a, const EmbeddingSequence& b);

/// Mean absolute difference over all channel values scaled to [0, 1].
double l1_image_loss(const Image& a, const Image& b);

/// Composite lip-generation objective: L = L_cGAN + alpha*L_img + beta*L_sync.
struct LossTerms {
  double l_cgan = 0.0;
  double l_img = 0.0;
  double l_sync = 0.0;
  double alpha = 1.0;
  double beta = 0.05;
};

double combine_lipgen_loss(const LossTerms& t);

struct ReferenceEmbeddings {
  EmbeddingSequence audio;
  EmbeddingSequence video;
};

/// 1-D stand-ins for a lip-sync embedder. Audio: frame-synchronous RMS
/// normalised by its maximum. Video: black pixels in the lower half of the
/// face box divided by the area of a fully open mouth ellipse, clamped to
/// [0, 1]. Frames without a box embed to 0.
ReferenceEmbeddings reference_embedders(const AudioBuffer& audio, const FrameSequence& frames,
                                        const FaceTrack& track,
                                        const stages::LipGeometry& geometry = {});

}  // namespace dub::metrics

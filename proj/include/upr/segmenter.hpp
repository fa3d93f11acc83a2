#pragma once

#include <vector>

#include "upr/types.hpp"

namespace upr::segmenter {

// Boundaries at local maxima of the frame-delta norm ||x_t - x_{t-1}||
// that reach the given percentile of the utterance's delta norms, kept
// left to right subject to the minimum segment length. Deterministic.
Segmentation segment_blind(const AcousticSequence& features, double threshold_percentile = 85.0,
                           int min_segment_frames = 2);

// Boundary every floor(period_ms / frame_period_ms) frames, final
// boundary at T.
Segmentation segment_periodic(const AcousticSequence& features, double period_ms = 40.0);

// Per-segment frame matrices (row-major, dim columns), in order.
std::vector<std::vector<float>> slice_segments(const AcousticSequence& features,
                                               const Segmentation& seg);

}  // namespace upr::segmenter

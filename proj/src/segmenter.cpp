#include "upr/segmenter.hpp"

#include <algorithm>
#include <cmath>

namespace upr::segmenter {

Segmentation segment_blind(const AcousticSequence& features, double threshold_percentile,
                           int min_segment_frames) {
  features.validate();
  const int T = features.frames;
  Segmentation seg;
  if (T <= min_segment_frames) {
    seg.ends = {T};
    return seg;
  }

  // delta[t] = ||x_t - x_{t-1}||, defined for t in [1, T)
  std::vector<double> delta(T, 0.0);
  for (int t = 1; t < T; ++t) {
    double acc = 0.0;
    const float* a = features.frame(t);
    const float* b = features.frame(t - 1);
    for (int k = 0; k < features.dim; ++k) {
      const double d = static_cast<double>(a[k]) - b[k];
      acc += d * d;
    }
    delta[t] = std::sqrt(acc);
  }

  // nearest-rank percentile of the delta norms
  std::vector<double> sorted(delta.begin() + 1, delta.end());
  std::sort(sorted.begin(), sorted.end());
  const double q = std::clamp(threshold_percentile, 0.0, 100.0);
  std::size_t rank = static_cast<std::size_t>(std::ceil(q / 100.0 * sorted.size()));
  if (rank > 0) --rank;
  const double threshold = sorted[rank];

  int last = 0;  // start of the open segment
  for (int t = 1; t < T; ++t) {
    const bool peak = delta[t] > delta[t - 1] && (t + 1 >= T || delta[t] >= delta[t + 1]);
    if (!peak || delta[t] < threshold || delta[t] <= 0.0) continue;
    if (t - last < min_segment_frames) continue;   // segment would be too short
    if (T - t < min_segment_frames) break;         // tail would be too short
    seg.ends.push_back(t);
    last = t;
  }
  seg.ends.push_back(T);
  return seg;
}

Segmentation segment_periodic(const AcousticSequence& features, double period_ms) {
  features.validate();
  if (period_ms < features.frame_period_ms)
    throw ValidationError("segment_periodic: period must be >= frame period");
  const int T = features.frames;
  const int step = static_cast<int>(period_ms / features.frame_period_ms);
  Segmentation seg;
  for (int t = step; t < T; t += step) seg.ends.push_back(t);
  seg.ends.push_back(T);
  return seg;
}

std::vector<std::vector<float>> slice_segments(const AcousticSequence& features,
                                               const Segmentation& seg) {
  seg.validate(features.frames);
  std::vector<std::vector<float>> out;
  out.reserve(seg.segment_count());
  for (int i = 0; i < seg.segment_count(); ++i) {
    const float* begin = features.frame(seg.start(i));
    const float* end = features.frame(seg.end(i) - 1) + features.dim;
    out.emplace_back(begin, end);
  }
  return out;
}

}  // namespace upr::segmenter

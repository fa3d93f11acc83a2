#include "upr/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace upr::metrics {

namespace {

int edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  std::vector<int> prev(m + 1), cur(m + 1);
  for (int j = 0; j <= m; ++j) prev[j] = j;
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double per(const PhoneSequence& ref, const PhoneSequence& hyp) {
  if (ref.phones.empty()) throw ValidationError("per: empty reference");
  return static_cast<double>(edit_distance(ref.phones, hyp.phones)) / ref.phones.size();
}

double per_mapped(const PhoneSequence& ref, const PhoneSequence& hyp,
                  const PhoneInventory& inventory) {
  if (inventory.eval_mapping.empty()) return per(ref, hyp);
  const auto map = inventory.eval_index_map();
  auto apply = [&](const PhoneSequence& s) {
    PhoneSequence out;
    out.phones.reserve(s.phones.size());
    for (int p : s.phones) out.phones.push_back(map.at(p));
    return out;
  };
  return per(apply(ref), apply(hyp));
}

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double r_value(double precision, double recall) {
  if (!(precision > 0.0)) throw ValidationError("r_value: undefined for precision 0");
  const double os = recall / precision - 1.0;
  const double r1 = std::sqrt((1.0 - recall) * (1.0 - recall) + os * os);
  const double r2 = (-os + recall - 1.0) / std::sqrt(2.0);
  return 1.0 - (std::fabs(r1) + std::fabs(r2)) / 2.0;
}

void BoundaryAccumulator::add(const Segmentation& ref, const Segmentation& hyp) {
  // interior boundaries only
  std::vector<int> r(ref.ends.begin(), ref.ends.end() - 1);
  std::vector<int> h(hyp.ends.begin(), hyp.ends.end() - 1);
  ref_count_ += static_cast<long>(r.size());
  hyp_count_ += static_cast<long>(h.size());
  std::size_t i = 0, j = 0;
  while (i < r.size() && j < h.size()) {
    if (std::fabs(static_cast<double>(r[i]) - h[j]) <= tolerance_frames_) {
      ++matches_;
      ++i;
      ++j;
    } else if (r[i] < h[j]) {
      ++i;
    } else {
      ++j;
    }
  }
}

BoundaryScore BoundaryAccumulator::score() const {
  BoundaryScore s;
  s.precision = hyp_count_ > 0 ? static_cast<double>(matches_) / hyp_count_ : 0.0;
  s.recall = ref_count_ > 0 ? static_cast<double>(matches_) / ref_count_ : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  if (s.precision > 0.0) {
    s.r_value = r_value(s.precision, s.recall);
    s.r_defined = true;
  }
  return s;
}

BoundaryScore boundary_prf(const Segmentation& ref, const Segmentation& hyp, double tolerance_ms,
                           double frame_period_ms) {
  BoundaryAccumulator acc(tolerance_ms, frame_period_ms);
  acc.add(ref, hyp);
  return acc.score();
}

double mean_entropy(const diff::Tensor& posteriors) {
  if (posteriors.rows < 1) throw ValidationError("mean_entropy: empty input");
  double total = 0.0;
  for (int i = 0; i < posteriors.rows; ++i) {
    double row_sum = 0.0, h = 0.0;
    for (int j = 0; j < posteriors.cols; ++j) {
      const double p = posteriors.at(i, j);
      if (p < 0.0) throw ValidationError("mean_entropy: negative probability");
      row_sum += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::fabs(row_sum - 1.0) > 1e-6)
      throw ValidationError("mean_entropy: row does not sum to 1");
    total += h;
  }
  return total / posteriors.rows;
}

diff::Tensor posterior_confusion(const diff::Tensor& frame_posteriors, std::span<const int> labels,
                                 int classes) {
  if (static_cast<int>(labels.size()) != frame_posteriors.rows)
    throw ValidationError("posterior_confusion: label count must equal frame count");
  diff::Tensor out(classes, frame_posteriors.cols);
  std::vector<int> counts(classes, 0);
  for (int t = 0; t < frame_posteriors.rows; ++t) {
    const int label = labels[t];
    if (label < 0 || label >= classes) throw ValidationError("posterior_confusion: label out of range");
    ++counts[label];
    for (int j = 0; j < frame_posteriors.cols; ++j) out.at(label, j) += frame_posteriors.at(t, j);
  }
  for (int r = 0; r < classes; ++r)
    if (counts[r] > 0)
      for (int j = 0; j < out.cols; ++j) out.at(r, j) /= counts[r];
  return out;
}

}  // namespace upr::metrics

#pragma once

#include <span>
#include <vector>

#include "upr/diff.hpp"
#include "upr/types.hpp"

namespace upr::metrics {

// Levenshtein distance (unit costs) divided by reference length, after
// passing both sequences through the inventory's eval mapping when one
// is present. Throws on an empty reference.
double per(const PhoneSequence& ref, const PhoneSequence& hyp);
double per_mapped(const PhoneSequence& ref, const PhoneSequence& hyp,
                  const PhoneInventory& inventory);

struct BoundaryScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double r_value = 0.0;
  bool r_defined = false;
};

double f1_score(double precision, double recall);

// OS = recall/precision - 1; r1 = sqrt((1-recall)^2 + OS^2);
// r2 = (-OS + recall - 1)/sqrt(2); R = 1 - (|r1| + |r2|)/2.
// Undefined for precision = 0 (throws).
double r_value(double precision, double recall);

// Corpus-level boundary scoring with greedy one-to-one matching in time
// order within the tolerance. The utterance-final boundary (and the
// implicit t=0 one) is excluded from scoring.
class BoundaryAccumulator {
 public:
  BoundaryAccumulator(double tolerance_ms, double frame_period_ms)
      : tolerance_frames_(tolerance_ms / frame_period_ms) {}

  void add(const Segmentation& ref, const Segmentation& hyp);
  BoundaryScore score() const;

 private:
  double tolerance_frames_;
  long matches_ = 0, ref_count_ = 0, hyp_count_ = 0;
};

BoundaryScore boundary_prf(const Segmentation& ref, const Segmentation& hyp,
                           double tolerance_ms = 20.0, double frame_period_ms = 10.0);

// Mean over rows of -sum p log p (natural log), 0 log 0 := 0.
// Rows must lie on the simplex within 1e-6.
double mean_entropy(const diff::Tensor& posteriors);

// Row r = mean posterior over frames whose label is r.
diff::Tensor posterior_confusion(const diff::Tensor& frame_posteriors,
                                 std::span<const int> labels, int classes);

}  // namespace upr::metrics

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "upr/diff.hpp"
#include "upr/types.hpp"

namespace upr::decoder {

// Backoff n-gram model with add-k smoothing. Histories are vectors of
// phone indices, possibly padded with start_symbol(); successors are
// phone indices or end_symbol(). Conditional estimates use the longest
// history with observed counts and back off to shorter ones otherwise.
class NGramLM {
 public:
  NGramLM() = default;

  static NGramLM train(const std::vector<PhoneSequence>& sequences, int order, double add_k,
                       int vocab_size);
  // order-1 model assigning every successor the same probability
  static NGramLM uniform(int vocab_size);

  int order() const { return order_; }
  int vocab_size() const { return vocab_; }
  int start_symbol() const { return vocab_; }
  int end_symbol() const { return vocab_ + 1; }

  // log P(next | context); context holds the most recent symbols,
  // oldest first, and is trimmed to order-1 internally.
  double log_prob(std::span<const int> context, int next) const;
  double log_prob_end(std::span<const int> context) const { return log_prob(context, end_symbol()); }

  // initial context: order-1 copies of the start symbol
  std::vector<int> initial_context() const {
    return std::vector<int>(static_cast<std::size_t>(order_ - 1), start_symbol());
  }
  // rolling context update, keeps at most order-1 symbols
  std::vector<int> advance(std::span<const int> context, int next) const;

  void save(const std::filesystem::path& path, const PhoneInventory& inventory) const;
  static NGramLM load(const std::filesystem::path& path, const PhoneInventory& inventory);

  // for the normalization property test: stored histories at each order
  std::vector<std::vector<int>> stored_histories() const;
  double successor_probability_sum(std::span<const int> history) const;

 private:
  struct Successors {
    long total = 0;
    std::map<int, long> counts;
  };

  int order_ = 1;
  int vocab_ = 0;
  double add_k_ = 0.1;
  // one table per history length 0..order-1
  std::vector<std::map<std::vector<int>, Successors>> tables_;

  void record(std::span<const int> history, int next);
};

struct DecodeConfig {
  double am_lm_ratio = 1.0;
  double self_loop_prob = 0.5;  // frame-wise mode only
  int beam = 64;
  bool framewise = false;

  void validate() const;
};

// Per-row argmax; ties resolved to the lowest phone index.
PhoneSequence decode_max_prob(const diff::Tensor& segment_posteriors);

// Viterbi/beam search over a single-state phone loop composed with the
// LM context. Segment-wise: exactly one phone per input row. Frame-wise:
// per row either stay on the current phone (self_loop_prob) or move to a
// different phone (1 - self_loop_prob, LM-scored); consecutive repeats
// are never emitted. Acoustic score: am_lm_ratio * log max(p, 1e-10).
// Rows are treated as unnormalized scores; uniform positive rescaling
// does not change the output.
PhoneSequence decode_posterior_lm(const diff::Tensor& posteriors, const NGramLM& lm,
                                  const DecodeConfig& cfg);

}  // namespace upr::decoder

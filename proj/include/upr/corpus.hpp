#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "upr/types.hpp"

namespace upr {

// Generative description of a synthetic toy-language corpus: a bigram
// chain over phones, uniform integer durations, and per-phone diagonal
// Gaussian frame emissions.
struct CorpusSpec {
  std::vector<std::string> symbols;
  std::vector<double> bigram;         // [n, n] row-stochastic
  std::vector<double> emission_mean;  // [n, dim]
  std::vector<double> emission_var;   // [n, dim], diagonal
  int feature_dim = 0;
  int min_duration = 1;  // frames per phone
  int max_duration = 1;
  int utterance_count = 0;
  int utterance_length = 0;  // phones per utterance
  double frame_period_ms = 10.0;
  std::uint64_t seed = 1;

  int inventory_size() const { return static_cast<int>(symbols.size()); }
  void validate() const;

  std::string to_json() const;
  static CorpusSpec from_json(const std::string& text);

  // Means placed on distinct coordinate axes at separation_sigmas * sigma,
  // so pairwise centroid distance is separation_sigmas * sqrt(2) * sigma.
  // The bigram is a seeded random stochastic matrix with zero diagonal
  // (consecutive repeats are unrecoverable for boundary-free decoding).
  static CorpusSpec separable(int phones, int dim, double separation_sigmas, int min_duration,
                              int max_duration, int utterance_count, int utterance_length,
                              std::uint64_t seed);
};

struct Utterance {
  std::string id;
  AcousticSequence features;
  PhoneSequence transcript;
  Segmentation oracle_segments;
};

struct Corpus {
  PhoneInventory inventory;
  std::vector<Utterance> utterances;

  const Utterance* find(const std::string& id) const;
};

// Pure function of the spec: same spec -> bit-identical corpus.
Corpus synthesize_corpus(const CorpusSpec& spec);

enum class SplitMode { Match, Nonmatch };

// Returns (speech ids, text ids). Match: both sides carry every id.
// Nonmatch: disjoint partition, speech side gets round(n * speech_fraction)
// utterances (clamped so both sides are nonempty), taken in corpus order.
std::pair<std::vector<std::string>, std::vector<std::string>> split_unpaired(
    const Corpus& corpus, SplitMode mode, double speech_fraction);

// Each phone is independently deleted with delete_rate; each survivor is
// independently emitted twice with duplicate_rate.
PhoneSequence augment_phone_sequence(const PhoneSequence& seq, double delete_rate,
                                     double duplicate_rate, std::uint64_t seed);

// Per-frame phone labels implied by a segmentation + transcript.
std::vector<int> frame_labels(const Segmentation& seg, const PhoneSequence& transcript);

}  // namespace upr

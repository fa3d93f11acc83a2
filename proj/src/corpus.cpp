#include "upr/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "upr/rng.hpp"

namespace upr {

void CorpusSpec::validate() const {
  const int n = inventory_size();
  if (n < 1) throw ValidationError("corpus spec: empty inventory");
  if (feature_dim < 1) throw ValidationError("corpus spec: feature_dim must be positive");
  if (bigram.size() != static_cast<std::size_t>(n) * n)
    throw ValidationError("corpus spec: bigram matrix must be inventory_size^2");
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p = bigram[static_cast<std::size_t>(i) * n + j];
      if (p < 0.0) throw ValidationError("corpus spec: negative bigram probability");
      row += p;
    }
    if (std::fabs(row - 1.0) > 1e-9)
      throw ValidationError("corpus spec: bigram row " + std::to_string(i) + " sums to " +
                            std::to_string(row) + ", expected 1");
  }
  if (emission_mean.size() != static_cast<std::size_t>(n) * feature_dim)
    throw ValidationError("corpus spec: emission_mean must be inventory_size x feature_dim");
  if (emission_var.size() != static_cast<std::size_t>(n) * feature_dim)
    throw ValidationError("corpus spec: emission_var must be inventory_size x feature_dim");
  for (double v : emission_var)
    if (!(v > 0.0)) throw ValidationError("corpus spec: emission variances must be positive");
  if (min_duration < 1) throw ValidationError("corpus spec: min_duration must be >= 1");
  if (max_duration < min_duration)
    throw ValidationError("corpus spec: max_duration must be >= min_duration");
  if (utterance_count < 1) throw ValidationError("corpus spec: utterance_count must be >= 1");
  if (utterance_length < 1) throw ValidationError("corpus spec: utterance_length must be >= 1");
  if (!(frame_period_ms > 0.0))
    throw ValidationError("corpus spec: frame_period_ms must be positive");
}

std::string CorpusSpec::to_json() const {
  nlohmann::json j;
  j["symbols"] = symbols;
  j["bigram"] = bigram;
  j["emission_mean"] = emission_mean;
  j["emission_var"] = emission_var;
  j["feature_dim"] = feature_dim;
  j["min_duration"] = min_duration;
  j["max_duration"] = max_duration;
  j["utterance_count"] = utterance_count;
  j["utterance_length"] = utterance_length;
  j["frame_period_ms"] = frame_period_ms;
  j["seed"] = seed;
  return j.dump(2);
}

CorpusSpec CorpusSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  CorpusSpec s;
  s.symbols = j.at("symbols").get<std::vector<std::string>>();
  s.bigram = j.at("bigram").get<std::vector<double>>();
  s.emission_mean = j.at("emission_mean").get<std::vector<double>>();
  s.emission_var = j.at("emission_var").get<std::vector<double>>();
  s.feature_dim = j.at("feature_dim").get<int>();
  s.min_duration = j.at("min_duration").get<int>();
  s.max_duration = j.at("max_duration").get<int>();
  s.utterance_count = j.at("utterance_count").get<int>();
  s.utterance_length = j.at("utterance_length").get<int>();
  s.frame_period_ms = j.at("frame_period_ms").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

CorpusSpec CorpusSpec::separable(int phones, int dim, double separation_sigmas, int min_duration,
                                 int max_duration, int utterance_count, int utterance_length,
                                 std::uint64_t seed) {
  if (dim < phones) throw ValidationError("separable spec: feature_dim must be >= phone count");
  CorpusSpec s;
  for (int i = 0; i < phones; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "p%02d", i);
    s.symbols.push_back(buf);
  }
  s.feature_dim = dim;
  s.emission_mean.assign(static_cast<std::size_t>(phones) * dim, 0.0);
  s.emission_var.assign(static_cast<std::size_t>(phones) * dim, 1.0);
  for (int i = 0; i < phones; ++i)
    s.emission_mean[static_cast<std::size_t>(i) * dim + i] = separation_sigmas;

  // skewed random rows give the chain distinctive phone statistics;
  // cubing the uniforms concentrates mass on a few successors
  Rng rng(Rng::splitmix64(seed) ^ 0x5eedb16aULL);
  s.bigram.assign(static_cast<std::size_t>(phones) * phones, 0.0);
  for (int i = 0; i < phones; ++i) {
    double row = 0.0;
    for (int j = 0; j < phones; ++j) {
      if (j == i) continue;
      const double u = rng.uniform();
      const double w = 0.02 + u * u * u;
      s.bigram[static_cast<std::size_t>(i) * phones + j] = w;
      row += w;
    }
    for (int j = 0; j < phones; ++j) s.bigram[static_cast<std::size_t>(i) * phones + j] /= row;
  }

  s.min_duration = min_duration;
  s.max_duration = max_duration;
  s.utterance_count = utterance_count;
  s.utterance_length = utterance_length;
  s.seed = seed;
  return s;
}

const Utterance* Corpus::find(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return &u;
  return nullptr;
}

Corpus synthesize_corpus(const CorpusSpec& spec) {
  spec.validate();
  const int n = spec.inventory_size();
  const int d = spec.feature_dim;

  Corpus corpus;
  corpus.inventory.symbols = spec.symbols;

  Rng rng(spec.seed);
  for (int u = 0; u < spec.utterance_count; ++u) {
    Utterance utt;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%05d", u);
    utt.id = buf;

    // phone chain: uniform start, then bigram rows
    int prev = -1;
    for (int i = 0; i < spec.utterance_length; ++i) {
      int phone;
      if (prev < 0) {
        phone = rng.uniform_int(0, n - 1);
      } else {
        phone = rng.categorical(
            std::span<const double>(spec.bigram.data() + static_cast<std::size_t>(prev) * n, n));
      }
      utt.transcript.phones.push_back(phone);
      prev = phone;
    }

    utt.features.dim = d;
    utt.features.frame_period_ms = spec.frame_period_ms;
    for (int phone : utt.transcript.phones) {
      const int dur = rng.uniform_int(spec.min_duration, spec.max_duration);
      const double* mean = spec.emission_mean.data() + static_cast<std::size_t>(phone) * d;
      const double* var = spec.emission_var.data() + static_cast<std::size_t>(phone) * d;
      for (int t = 0; t < dur; ++t)
        for (int k = 0; k < d; ++k)
          utt.features.data.push_back(static_cast<float>(rng.normal(mean[k], std::sqrt(var[k]))));
      utt.features.frames += dur;
      utt.oracle_segments.ends.push_back(utt.features.frames);
    }
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_unpaired(
    const Corpus& corpus, SplitMode mode, double speech_fraction) {
  std::vector<std::string> ids;
  ids.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) ids.push_back(u.id);

  if (mode == SplitMode::Match) return {ids, ids};

  const int n = static_cast<int>(ids.size());
  if (n < 2) throw ValidationError("nonmatch split requires at least 2 utterances");
  if (!(speech_fraction > 0.0 && speech_fraction < 1.0))
    throw ValidationError("nonmatch split requires 0 < speech_fraction < 1");
  int k = static_cast<int>(std::llround(n * speech_fraction));
  k = std::max(1, std::min(n - 1, k));
  std::vector<std::string> speech(ids.begin(), ids.begin() + k);
  std::vector<std::string> text(ids.begin() + k, ids.end());
  return {speech, text};
}

PhoneSequence augment_phone_sequence(const PhoneSequence& seq, double delete_rate,
                                     double duplicate_rate, std::uint64_t seed) {
  if (delete_rate < 0.0 || delete_rate > 1.0 || duplicate_rate < 0.0 || duplicate_rate > 1.0)
    throw ValidationError("augmentation rates must lie in [0,1]");
  Rng rng(seed);
  PhoneSequence out;
  for (int phone : seq.phones) {
    if (rng.uniform() < delete_rate) continue;
    out.phones.push_back(phone);
    if (rng.uniform() < duplicate_rate) out.phones.push_back(phone);
  }
  return out;
}

std::vector<int> frame_labels(const Segmentation& seg, const PhoneSequence& transcript) {
  if (seg.segment_count() != transcript.length())
    throw ValidationError("frame_labels: segment count does not match transcript length");
  std::vector<int> labels(static_cast<std::size_t>(seg.total_frames()));
  for (int i = 0; i < seg.segment_count(); ++i)
    for (int t = seg.start(i); t < seg.end(i); ++t) labels[t] = transcript.phones[i];
  return labels;
}

}  // namespace upr

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace upr {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parse failures carry the offending file and line (0-based byte offset
// for binary files) in the message.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PhoneInventory {
  std::vector<std::string> symbols;
  // optional many-to-one training-phone -> evaluation-phone map; empty = identity
  std::map<std::string, std::string> eval_mapping;

  int size() const { return static_cast<int>(symbols.size()); }

  int index_of(const std::string& sym) const {
    for (int i = 0; i < size(); ++i)
      if (symbols[i] == sym) return i;
    return -1;
  }

  void validate() const {
    if (size() < 2) throw ValidationError("inventory must contain at least 2 phones");
    for (int i = 0; i < size(); ++i)
      for (int j = i + 1; j < size(); ++j)
        if (symbols[i] == symbols[j]) throw ValidationError("duplicate phone symbol: " + symbols[i]);
    if (!eval_mapping.empty()) {
      for (const auto& s : symbols)
        if (eval_mapping.find(s) == eval_mapping.end())
          throw ValidationError("eval_mapping missing phone: " + s);
    }
  }

  // index remap induced by eval_mapping; identity when the map is empty
  std::vector<int> eval_index_map() const;
};

struct AcousticSequence {
  int frames = 0;
  int dim = 0;
  double frame_period_ms = 10.0;
  std::vector<float> data;  // row-major [frames, dim]

  const float* frame(int t) const { return data.data() + static_cast<std::size_t>(t) * dim; }
  float* frame(int t) { return data.data() + static_cast<std::size_t>(t) * dim; }

  void validate() const {
    if (frames < 1) throw ValidationError("acoustic sequence must have at least one frame");
    if (dim < 1) throw ValidationError("acoustic sequence dimension must be positive");
    if (data.size() != static_cast<std::size_t>(frames) * dim)
      throw ValidationError("acoustic sequence payload size mismatch");
    for (float v : data)
      if (!std::isfinite(v)) throw ValidationError("acoustic sequence contains non-finite value");
  }
};

// Phones stored as indices into the owning corpus inventory.
struct PhoneSequence {
  std::vector<int> phones;

  int length() const { return static_cast<int>(phones.size()); }
  bool operator==(const PhoneSequence& o) const = default;
};

// Phone-level segmentation as strictly increasing exclusive end indices;
// segment i covers [ends[i-1], ends[i]) with ends[-1] = 0 and ends.back() = T.
struct Segmentation {
  std::vector<int> ends;

  int segment_count() const { return static_cast<int>(ends.size()); }
  int total_frames() const { return ends.empty() ? 0 : ends.back(); }
  int start(int i) const { return i == 0 ? 0 : ends[i - 1]; }
  int end(int i) const { return ends[i]; }
  int length(int i) const { return end(i) - start(i); }

  void validate(int frames) const {
    if (ends.empty()) throw ValidationError("segmentation must contain at least one segment");
    int prev = 0;
    for (int e : ends) {
      if (e <= prev) throw ValidationError("segmentation ends must be strictly increasing from 0");
      prev = e;
    }
    if (ends.back() != frames)
      throw ValidationError("segmentation must end at the utterance frame count");
  }

  bool operator==(const Segmentation& o) const = default;
};

inline std::vector<int> PhoneInventory::eval_index_map() const {
  std::vector<int> map(symbols.size());
  if (eval_mapping.empty()) {
    for (int i = 0; i < size(); ++i) map[i] = i;
    return map;
  }
  // evaluation classes indexed by first appearance in inventory order
  std::vector<std::string> eval_classes;
  for (int i = 0; i < size(); ++i) {
    const std::string& target = eval_mapping.at(symbols[i]);
    auto it = std::find(eval_classes.begin(), eval_classes.end(), target);
    if (it == eval_classes.end()) {
      map[i] = static_cast<int>(eval_classes.size());
      eval_classes.push_back(target);
    } else {
      map[i] = static_cast<int>(it - eval_classes.begin());
    }
  }
  return map;
}

}  // namespace upr

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "upr/corpus.hpp"
#include "upr/diff.hpp"
#include "upr/types.hpp"

namespace upr::io {

// Feature file: "UPRF" magic, u32 version, u32 frames, u32 dim,
// f64 frame_period_ms, then frames*dim little-endian f32, row-major.
// Roundtrips bit-exactly.
void write_features(const std::filesystem::path& path, const AcousticSequence& seq);
AcousticSequence read_features(const std::filesystem::path& path);

// One utterance per line: "id<TAB>phone phone ...".
void write_transcriptions(const std::filesystem::path& path, const PhoneInventory& inventory,
                          const std::vector<std::pair<std::string, PhoneSequence>>& entries);
std::vector<std::pair<std::string, PhoneSequence>> read_transcriptions(
    const std::filesystem::path& path, const PhoneInventory& inventory);

// One utterance per line: "id<TAB>end_1 end_2 ..." (exclusive frame ends).
void write_boundaries(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, Segmentation>>& entries);
std::vector<std::pair<std::string, Segmentation>> read_boundaries(
    const std::filesystem::path& path);

// One phone per line; optional "<TAB>eval_phone" column for the mapping.
void write_inventory(const std::filesystem::path& path, const PhoneInventory& inventory);
PhoneInventory read_inventory(const std::filesystem::path& path);

// Corpus directory: inventory.txt, transcripts.txt, boundaries.txt,
// features/<id>.fea.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

// Model checkpoint: "UPRM" magic, u32 version, u64 metadata length +
// UTF-8 JSON metadata, u32 tensor count, then per tensor: u32 name
// length + name, u32 rows, u32 cols, row-major little-endian f64.
using NamedTensors = std::vector<std::pair<std::string, diff::Tensor>>;
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors,
                     const std::string& meta_json);
std::pair<NamedTensors, std::string> load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Fixed shortest-roundtrip double formatting for CSV and JSON output.
std::string format_double(double x);

}  // namespace upr::io

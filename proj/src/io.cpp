#include "upr/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace upr::io {

namespace {

constexpr char kFeatureMagic[4] = {'U', 'P', 'R', 'F'};
constexpr char kModelMagic[4] = {'U', 'P', 'R', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

[[noreturn]] void parse_fail(const std::filesystem::path& path, const std::string& what,
                             std::size_t where, const char* unit) {
  throw ParseError(path.string() + ": " + what + " (" + unit + " " + std::to_string(where) + ")");
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) parse_fail(path, "unexpected end of file", static_cast<std::size_t>(in.gcount()), "offset");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open: " + path.string());
  return in;
}

}  // namespace

void write_features(const std::filesystem::path& path, const AcousticSequence& seq) {
  seq.validate();
  auto out = open_out(path, std::ios::binary);
  out.write(kFeatureMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.frames));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.dim));
  put<double>(out, seq.frame_period_ms);
  out.write(reinterpret_cast<const char*>(seq.data.data()),
            static_cast<std::streamsize>(seq.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

AcousticSequence read_features(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    parse_fail(path, "bad magic, not a feature file", 0, "offset");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFormatVersion)
    parse_fail(path, "unsupported version " + std::to_string(version), 4, "offset");
  AcousticSequence seq;
  seq.frames = static_cast<int>(get<std::uint32_t>(in, path));
  seq.dim = static_cast<int>(get<std::uint32_t>(in, path));
  seq.frame_period_ms = get<double>(in, path);
  if (seq.frames < 1 || seq.dim < 1) parse_fail(path, "invalid header dimensions", 8, "offset");
  const std::size_t count = static_cast<std::size_t>(seq.frames) * seq.dim;
  seq.data.resize(count);
  in.read(reinterpret_cast<char*>(seq.data.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
    parse_fail(path, "payload shorter than header frames x dim", 24, "offset");
  in.peek();
  if (!in.eof()) parse_fail(path, "trailing bytes after payload", 24 + count * sizeof(float), "offset");
  return seq;
}

namespace {

std::vector<std::pair<std::string, std::vector<std::string>>> read_tab_lines(
    const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) parse_fail(path, "missing TAB separator", lineno, "line");
    const std::string id = line.substr(0, tab);
    if (id.empty()) parse_fail(path, "empty utterance id", lineno, "line");
    std::vector<std::string> tokens;
    std::istringstream rest(line.substr(tab + 1));
    std::string tok;
    while (rest >> tok) tokens.push_back(tok);
    out.emplace_back(id, std::move(tokens));
  }
  return out;
}

}  // namespace

void write_transcriptions(const std::filesystem::path& path, const PhoneInventory& inventory,
                          const std::vector<std::pair<std::string, PhoneSequence>>& entries) {
  auto out = open_out(path, std::ios::out);
  for (const auto& [id, seq] : entries) {
    out << id << '\t';
    for (int i = 0; i < seq.length(); ++i) {
      if (i) out << ' ';
      out << inventory.symbols.at(seq.phones[i]);
    }
    out << '\n';
  }
}

std::vector<std::pair<std::string, PhoneSequence>> read_transcriptions(
    const std::filesystem::path& path, const PhoneInventory& inventory) {
  std::vector<std::pair<std::string, PhoneSequence>> out;
  auto in = open_in(path, std::ios::in);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) parse_fail(path, "missing TAB separator", lineno, "line");
    PhoneSequence seq;
    std::istringstream rest(line.substr(tab + 1));
    std::string tok;
    while (rest >> tok) {
      const int idx = inventory.index_of(tok);
      if (idx < 0) parse_fail(path, "unknown phone symbol '" + tok + "'", lineno, "line");
      seq.phones.push_back(idx);
    }
    out.emplace_back(line.substr(0, tab), std::move(seq));
  }
  return out;
}

void write_boundaries(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, Segmentation>>& entries) {
  auto out = open_out(path, std::ios::out);
  for (const auto& [id, seg] : entries) {
    out << id << '\t';
    for (int i = 0; i < seg.segment_count(); ++i) {
      if (i) out << ' ';
      out << seg.ends[i];
    }
    out << '\n';
  }
}

std::vector<std::pair<std::string, Segmentation>> read_boundaries(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, Segmentation>> out;
  for (auto& [id, tokens] : read_tab_lines(path)) {
    Segmentation seg;
    for (const std::string& tok : tokens) {
      try {
        seg.ends.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": non-integer boundary '" + tok + "' for utterance " + id);
      }
    }
    if (seg.ends.empty()) throw ParseError(path.string() + ": no boundaries for utterance " + id);
    out.emplace_back(id, std::move(seg));
  }
  return out;
}

void write_inventory(const std::filesystem::path& path, const PhoneInventory& inventory) {
  auto out = open_out(path, std::ios::out);
  for (const auto& sym : inventory.symbols) {
    out << sym;
    if (!inventory.eval_mapping.empty()) out << '\t' << inventory.eval_mapping.at(sym);
    out << '\n';
  }
}

PhoneInventory read_inventory(const std::filesystem::path& path) {
  PhoneInventory inv;
  auto in = open_in(path, std::ios::in);
  std::string line;
  std::size_t lineno = 0;
  int mapped_lines = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      inv.symbols.push_back(line);
    } else {
      const std::string sym = line.substr(0, tab);
      inv.symbols.push_back(sym);
      inv.eval_mapping[sym] = line.substr(tab + 1);
      ++mapped_lines;
    }
  }
  if (mapped_lines != 0 && mapped_lines != static_cast<int>(inv.symbols.size()))
    throw ParseError(path.string() + ": eval mapping column present on only some lines");
  inv.validate();
  return inv;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir / "features");
  write_inventory(dir / "inventory.txt", corpus.inventory);
  std::vector<std::pair<std::string, PhoneSequence>> transcripts;
  std::vector<std::pair<std::string, Segmentation>> boundaries;
  for (const auto& u : corpus.utterances) {
    write_features(dir / "features" / (u.id + ".fea"), u.features);
    transcripts.emplace_back(u.id, u.transcript);
    boundaries.emplace_back(u.id, u.oracle_segments);
  }
  write_transcriptions(dir / "transcripts.txt", corpus.inventory, transcripts);
  write_boundaries(dir / "boundaries.txt", boundaries);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  corpus.inventory = read_inventory(dir / "inventory.txt");
  auto transcripts = read_transcriptions(dir / "transcripts.txt", corpus.inventory);
  auto boundaries = read_boundaries(dir / "boundaries.txt");
  if (boundaries.size() != transcripts.size())
    throw ParseError(dir.string() + ": transcript and boundary counts differ");
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    Utterance u;
    u.id = transcripts[i].first;
    if (boundaries[i].first != u.id)
      throw ParseError(dir.string() + ": transcript/boundary id mismatch at entry " +
                       std::to_string(i));
    u.transcript = std::move(transcripts[i].second);
    u.oracle_segments = std::move(boundaries[i].second);
    u.features = read_features(dir / "features" / (u.id + ".fea"));
    u.oracle_segments.validate(u.features.frames);
    if (u.oracle_segments.segment_count() != u.transcript.length())
      throw ParseError(dir.string() + ": utterance " + u.id +
                       ": oracle segment count differs from transcript length");
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors,
                     const std::string& meta_json) {
  auto out = open_out(path, std::ios::binary);
  out.write(kModelMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, meta_json.size());
  out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::pair<NamedTensors, std::string> load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    parse_fail(path, "bad magic, not a checkpoint", 0, "offset");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFormatVersion)
    parse_fail(path, "unsupported version " + std::to_string(version), 4, "offset");
  const auto meta_len = get<std::uint64_t>(in, path);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) parse_fail(path, "truncated metadata", 16, "offset");
  const auto count = get<std::uint32_t>(in, path);
  NamedTensors tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    diff::Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!in) parse_fail(path, "truncated tensor '" + name + "'", i, "tensor");
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return {std::move(tensors), std::move(meta)};
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace upr::io

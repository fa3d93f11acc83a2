#include "upr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace upr::decoder {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosteriorFloor = 1e-10;
}  // namespace

void NGramLM::record(std::span<const int> history, int next) {
  // count the event under every backoff order
  for (std::size_t drop = 0; drop <= history.size(); ++drop) {
    std::vector<int> h(history.begin() + static_cast<long>(drop), history.end());
    auto& entry = tables_[h.size()][std::move(h)];
    entry.total += 1;
    entry.counts[next] += 1;
  }
}

NGramLM NGramLM::train(const std::vector<PhoneSequence>& sequences, int order, double add_k,
                       int vocab_size) {
  if (order < 1) throw ValidationError("ngram: order must be >= 1");
  if (vocab_size < 1) throw ValidationError("ngram: empty vocabulary");
  if (add_k < 0.0) throw ValidationError("ngram: add_k must be >= 0");
  if (sequences.empty()) throw ValidationError("ngram: empty training corpus");

  NGramLM lm;
  lm.order_ = order;
  lm.vocab_ = vocab_size;
  lm.add_k_ = add_k;
  lm.tables_.resize(static_cast<std::size_t>(order));

  for (const auto& seq : sequences) {
    std::vector<int> ctx = lm.initial_context();
    for (int phone : seq.phones) {
      if (phone < 0 || phone >= vocab_size)
        throw ValidationError("ngram: phone index outside vocabulary");
      lm.record(ctx, phone);
      ctx = lm.advance(ctx, phone);
    }
    lm.record(ctx, lm.end_symbol());
  }
  return lm;
}

NGramLM NGramLM::uniform(int vocab_size) {
  if (vocab_size < 1) throw ValidationError("ngram: empty vocabulary");
  NGramLM lm;
  lm.order_ = 1;
  lm.vocab_ = vocab_size;
  lm.add_k_ = 1.0;
  lm.tables_.resize(1);
  return lm;
}

std::vector<int> NGramLM::advance(std::span<const int> context, int next) const {
  std::vector<int> out(context.begin(), context.end());
  out.push_back(next);
  const std::size_t keep = static_cast<std::size_t>(order_ - 1);
  if (out.size() > keep) out.erase(out.begin(), out.end() - static_cast<long>(keep));
  return out;
}

double NGramLM::log_prob(std::span<const int> context, int next) const {
  std::vector<int> h(context.begin(), context.end());
  const std::size_t keep = static_cast<std::size_t>(order_ - 1);
  if (h.size() > keep) h.erase(h.begin(), h.end() - static_cast<long>(keep));

  const int successor_count = vocab_ + 1;  // phones plus the end symbol
  while (true) {
    const auto& table = tables_[h.size()];
    auto it = table.find(h);
    if (it != table.end()) {
      long c = 0;
      auto cit = it->second.counts.find(next);
      if (cit != it->second.counts.end()) c = cit->second;
      const double num = static_cast<double>(c) + add_k_;
      const double den = static_cast<double>(it->second.total) + add_k_ * successor_count;
      if (num <= 0.0) return kNegInf;
      return std::log(num) - std::log(den);
    }
    if (h.empty()) {
      // no unigram counts at all (uniform model): every successor equal
      return -std::log(static_cast<double>(successor_count));
    }
    h.erase(h.begin());
  }
}

std::vector<std::vector<int>> NGramLM::stored_histories() const {
  std::vector<std::vector<int>> out;
  for (const auto& table : tables_)
    for (const auto& [h, _] : table) out.push_back(h);
  return out;
}

double NGramLM::successor_probability_sum(std::span<const int> history) const {
  double sum = 0.0;
  for (int s = 0; s < vocab_; ++s) sum += std::exp(log_prob(history, s));
  sum += std::exp(log_prob(history, end_symbol()));
  return sum;
}

void NGramLM::save(const std::filesystem::path& path, const PhoneInventory& inventory) const {
  if (inventory.size() != vocab_) throw ValidationError("ngram save: inventory size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "UPRLM 1\n";
  out << "order " << order_ << "\n";
  out << "add_k " << add_k_ << "\n";
  out << "vocab " << vocab_ << "\n";
  for (const auto& s : inventory.symbols) out << s << "\n";
  auto sym = [&](int id) -> std::string {
    if (id == start_symbol()) return "<s>";
    if (id == end_symbol()) return "</s>";
    return inventory.symbols.at(id);
  };
  out << "counts\n";
  for (const auto& table : tables_)
    for (const auto& [h, succ] : table)
      for (const auto& [next, count] : succ.counts) {
        for (int x : h) out << sym(x) << ' ';
        out << ": " << sym(next) << ' ' << count << "\n";
      }
}

NGramLM NGramLM::load(const std::filesystem::path& path, const PhoneInventory& inventory) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw ParseError(path.string() + ": truncated LM file");
    ++lineno;
  };
  next_line();
  if (line != "UPRLM 1") throw ParseError(path.string() + ": bad LM header");
  NGramLM lm;
  next_line();
  std::sscanf(line.c_str(), "order %d", &lm.order_);
  next_line();
  std::sscanf(line.c_str(), "add_k %lf", &lm.add_k_);
  next_line();
  std::sscanf(line.c_str(), "vocab %d", &lm.vocab_);
  if (lm.order_ < 1 || lm.vocab_ < 1) throw ParseError(path.string() + ": invalid LM header values");
  if (lm.vocab_ != inventory.size()) throw ParseError(path.string() + ": LM/inventory size mismatch");
  for (int i = 0; i < lm.vocab_; ++i) {
    next_line();
    if (line != inventory.symbols[static_cast<std::size_t>(i)])
      throw ParseError(path.string() + ": LM vocabulary does not match inventory (line " +
                       std::to_string(lineno) + ")");
  }
  next_line();
  if (line != "counts") throw ParseError(path.string() + ": missing counts section");
  lm.tables_.resize(static_cast<std::size_t>(lm.order_));
  auto parse_sym = [&](const std::string& tok) {
    if (tok == "<s>") return lm.start_symbol();
    if (tok == "</s>") return lm.end_symbol();
    const int idx = inventory.index_of(tok);
    if (idx < 0)
      throw ParseError(path.string() + ": unknown symbol '" + tok + "' (line " +
                       std::to_string(lineno) + ")");
    return idx;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<int> history;
    std::string tok;
    bool seen_colon = false;
    int next = -1;
    long count = -1;
    while (ss >> tok) {
      if (tok == ":") {
        seen_colon = true;
        std::string nsym;
        if (!(ss >> nsym >> count))
          throw ParseError(path.string() + ": malformed count line " + std::to_string(lineno));
        next = parse_sym(nsym);
        break;
      }
      history.push_back(parse_sym(tok));
    }
    if (!seen_colon || count < 0)
      throw ParseError(path.string() + ": malformed count line " + std::to_string(lineno));
    if (history.size() >= static_cast<std::size_t>(lm.order_))
      throw ParseError(path.string() + ": history longer than order-1 at line " +
                       std::to_string(lineno));
    auto& entry = lm.tables_[history.size()][history];
    entry.total += count;
    entry.counts[next] += count;
  }
  return lm;
}

void DecodeConfig::validate() const {
  if (!(am_lm_ratio > 0.0)) throw ValidationError("decode: am_lm_ratio must be positive");
  if (self_loop_prob < 0.0 || self_loop_prob >= 1.0)
    throw ValidationError("decode: self_loop_prob must lie in [0,1)");
  if (beam < 1) throw ValidationError("decode: beam must be >= 1");
}

PhoneSequence decode_max_prob(const diff::Tensor& segment_posteriors) {
  if (segment_posteriors.rows < 1) throw ValidationError("decode_max_prob: empty input");
  PhoneSequence out;
  for (int i = 0; i < segment_posteriors.rows; ++i) {
    int best = 0;
    for (int j = 1; j < segment_posteriors.cols; ++j)
      if (segment_posteriors.at(i, j) > segment_posteriors.at(i, best)) best = j;
    out.phones.push_back(best);
  }
  return out;
}

namespace {

struct Token {
  std::vector<int> ctx;  // LM context, oldest first
  int cur = -1;          // current phone (frame-wise mode)
  double score = kNegInf;
  int trace = -1;
};

struct TokenKey {
  std::vector<int> ctx;
  int cur;
  bool operator<(const TokenKey& o) const {
    if (ctx != o.ctx) return ctx < o.ctx;
    return cur < o.cur;
  }
};

PhoneSequence backtrace(const std::vector<std::pair<int, int>>& arena, int trace) {
  std::vector<int> rev;
  for (int t = trace; t >= 0; t = arena[static_cast<std::size_t>(t)].first)
    rev.push_back(arena[static_cast<std::size_t>(t)].second);
  PhoneSequence out;
  out.phones.assign(rev.rbegin(), rev.rend());
  return out;
}

PhoneSequence decode_with_beam(const diff::Tensor& posteriors, const NGramLM& lm,
                               const DecodeConfig& cfg, int beam) {
  const int L = posteriors.rows;
  const int V = lm.vocab_size();
  auto am = [&](int row, int phone) {
    return cfg.am_lm_ratio * std::log(std::max(posteriors.at(row, phone), kPosteriorFloor));
  };
  const double log_stay = cfg.framewise ? std::log(std::max(cfg.self_loop_prob, 1e-300)) : 0.0;
  const double log_leave = cfg.framewise ? std::log1p(-cfg.self_loop_prob) : 0.0;

  std::vector<std::pair<int, int>> arena;  // (parent trace, emitted phone)
  std::map<TokenKey, Token> frontier;

  // first row: enter some phone
  for (int s = 0; s < V; ++s) {
    Token t;
    t.ctx = lm.advance(lm.initial_context(), s);
    t.cur = s;
    t.score = lm.log_prob(lm.initial_context(), s) + am(0, s);
    arena.emplace_back(-1, s);
    t.trace = static_cast<int>(arena.size()) - 1;
    frontier[{t.ctx, t.cur}] = std::move(t);
  }

  auto prune = [&](std::map<TokenKey, Token>& tokens) {
    if (static_cast<int>(tokens.size()) <= beam) return;
    std::vector<std::pair<TokenKey, Token>> all(tokens.begin(), tokens.end());
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.second.score != b.second.score) return a.second.score > b.second.score;
      return a.first < b.first;
    });
    tokens.clear();
    for (int i = 0; i < beam; ++i) tokens.insert(all[static_cast<std::size_t>(i)]);
  };
  prune(frontier);

  for (int row = 1; row < L; ++row) {
    std::map<TokenKey, Token> next;
    auto offer = [&](TokenKey key, Token tok) {
      auto it = next.find(key);
      if (it == next.end() || tok.score > it->second.score) next[std::move(key)] = std::move(tok);
    };
    for (const auto& [key, tok] : frontier) {
      if (cfg.framewise) {
        // stay on the current phone, no emission
        Token stay = tok;
        stay.score += log_stay + am(row, tok.cur);
        offer({stay.ctx, stay.cur}, std::move(stay));
        // or move to a different phone
        for (int s = 0; s < V; ++s) {
          if (s == tok.cur) continue;
          Token move = tok;
          move.score += log_leave + lm.log_prob(tok.ctx, s) + am(row, s);
          move.ctx = lm.advance(tok.ctx, s);
          move.cur = s;
          arena.emplace_back(tok.trace, s);
          move.trace = static_cast<int>(arena.size()) - 1;
          offer({move.ctx, move.cur}, std::move(move));
        }
      } else {
        for (int s = 0; s < V; ++s) {
          Token move = tok;
          move.score += lm.log_prob(tok.ctx, s) + am(row, s);
          move.ctx = lm.advance(tok.ctx, s);
          move.cur = s;
          arena.emplace_back(tok.trace, s);
          move.trace = static_cast<int>(arena.size()) - 1;
          offer({move.ctx, move.cur}, std::move(move));
        }
      }
    }
    prune(next);
    frontier = std::move(next);
    if (frontier.empty()) return {};  // caller widens and retries
  }

  const Token* best = nullptr;
  double best_score = kNegInf;
  for (auto& [key, tok] : frontier) {
    const double final_score = tok.score + lm.log_prob_end(tok.ctx);
    if (best == nullptr || final_score > best_score) {
      best = &tok;
      best_score = final_score;
    }
  }
  if (best == nullptr || !std::isfinite(best_score)) return {};
  return backtrace(arena, best->trace);
}

}  // namespace

PhoneSequence decode_posterior_lm(const diff::Tensor& posteriors, const NGramLM& lm,
                                  const DecodeConfig& cfg) {
  cfg.validate();
  if (posteriors.rows < 1) throw ValidationError("decode_posterior_lm: empty input");
  if (posteriors.cols != lm.vocab_size())
    throw ValidationError("decode_posterior_lm: posterior width " + std::to_string(posteriors.cols) +
                          " does not match LM vocabulary " + std::to_string(lm.vocab_size()));

  int beam = cfg.beam;
  for (int attempt = 0; attempt < 3; ++attempt) {
    PhoneSequence out = decode_with_beam(posteriors, lm, cfg, beam);
    if (!out.phones.empty()) return out;
    beam *= 4;  // widen and retry
  }
  throw std::runtime_error("decode_posterior_lm: beam search exhausted after widening");
}

}  // namespace upr::decoder

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nomon/core.hpp"

namespace nomon::lm {

/// Symbols the character model predicts: letters, apostrophe, space and the
/// four sentence punctuation marks.
inline constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz' .,?!";
inline constexpr std::size_t kAlphabetSize = kAlphabet.size();

inline int symbol_index(char c) {
  if (c >= 'a' && c <= 'z') return c - 'a';
  switch (c) {
    case '\'': return 26;
    case ' ': return 27;
    case '.': return 28;
    case ',': return 29;
    case '?': return 30;
    case '!': return 31;
    default: return -1;
  }
}

using CharDistribution = std::array<double, kAlphabetSize>;

namespace detail {

inline char encode_char(char c) { return c == ' ' ? '_' : c; }
inline char decode_char(char c) { return c == '_' ? ' ' : c; }

inline std::string encode_context(std::string_view ctx) {
  if (ctx.empty()) return "^";
  std::string out(ctx);
  for (auto& c : out) c = encode_char(c);
  return out;
}

inline std::string decode_context(std::string_view s) {
  if (s == "^") return {};
  std::string out(s);
  for (auto& c : out) c = decode_char(c);
  return out;
}

}  // namespace detail

/// Character n-gram model with Witten-Bell backoff smoothing.
///
/// For a context h with count C(h) and T(h) distinct followers, a seen symbol
/// gets C(h,c) / (C(h) + T(h)); the remaining T(h) / (C(h) + T(h)) is shared
/// among unseen symbols in proportion to the next-shorter context's
/// distribution. The empty context backs off to uniform. A context that has
/// seen every symbol uses relative frequencies.
class CharNgramModel {
 public:
  CharNgramModel() = default;

  /// Trains on each line separately; a line is followed by one space so
  /// sentence-final words learn their trailing space.
  static CharNgramModel train(const std::vector<std::string>& lines, int order) {
    if (order < 1 || order > 10) throw Error("train_char_model: order must lie in [1, 10]");
    CharNgramModel m;
    m.order_ = order;
    bool any = false;
    for (const auto& raw : lines) {
      const std::string line = raw + ' ';
      std::vector<int> sym;
      sym.reserve(line.size());
      for (char c : line) {
        const int s = symbol_index(c);
        if (s < 0) throw Error(std::string("train_char_model: character outside alphabet: '") + c + "'");
        sym.push_back(s);
      }
      if (raw.empty()) continue;
      any = true;
      for (std::size_t i = 0; i < sym.size(); ++i) {
        const int max_k = std::min<int>(order - 1, static_cast<int>(i));
        for (int k = 0; k <= max_k; ++k) {
          const std::uint64_t key = make_key(sym.data() + i - k, k);
          m.table_[key].add(sym[i]);
        }
      }
    }
    if (!any) throw Error("train_char_model: empty corpus");
    return m;
  }

  int order() const { return order_; }

  /// Next-symbol distribution after `context` (only its last N-1 symbols matter).
  CharDistribution distribution(std::string_view context) const {
    std::vector<int> sym;
    const std::size_t take = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
    for (std::size_t i = context.size() - take; i < context.size(); ++i) {
      const int s = symbol_index(context[i]);
      if (s < 0) throw Error(std::string("char model: context character outside alphabet: '") + context[i] + "'");
      sym.push_back(s);
    }
    return distribution(sym);
  }

  /// Same, for a context already mapped to symbol indices (last N-1 used).
  CharDistribution distribution(const std::vector<int>& ctx) const {
    const int n = static_cast<int>(ctx.size());
    const int k_max = std::min(n, order_ - 1);
    CharDistribution p;
    p.fill(1.0 / kAlphabetSize);
    for (int k = 0; k <= k_max; ++k) {
      const auto it = table_.find(make_key(ctx.data() + n - k, k));
      if (it == table_.end()) continue;  // unseen context: lower order passes through
      const Stats& st = it->second;
      CharDistribution q{};
      std::array<bool, kAlphabetSize> seen{};
      for (const auto& [s, c] : st.counts) seen[s] = true;
      const double denom = static_cast<double>(st.total + st.counts.size());
      if (st.counts.size() == kAlphabetSize) {
        for (const auto& [s, c] : st.counts) q[s] = static_cast<double>(c) / st.total;
      } else {
        double unseen_lower = 0;
        for (std::size_t s = 0; s < kAlphabetSize; ++s)
          if (!seen[s]) unseen_lower += p[s];
        const double backoff = static_cast<double>(st.counts.size()) / denom;
        for (std::size_t s = 0; s < kAlphabetSize; ++s)
          if (!seen[s]) q[s] = backoff * p[s] / unseen_lower;
        for (const auto& [s, c] : st.counts) q[s] = static_cast<double>(c) / denom;
      }
      p = q;
    }
    return p;
  }

  /// Identifies the context that actually conditions the next symbol: the
  /// last min(N - 1, n) symbols.
  std::uint64_t context_key(const std::vector<int>& ctx) const {
    const int n = static_cast<int>(ctx.size());
    const int k = std::min(n, order_ - 1);
    return make_key(ctx.data() + n - k, k);
  }

  double logprob(std::string_view context, char symbol) const {
    const int s = symbol_index(symbol);
    if (s < 0) throw Error(std::string("char_logprob: symbol outside alphabet: '") + symbol + "'");
    return std::log(distribution(context)[static_cast<std::size_t>(s)]);
  }

  /// Count C(h, c); zero when unseen.
  std::uint32_t count(std::string_view context, char symbol) const {
    std::vector<int> sym;
    for (char c : context) sym.push_back(symbol_index(c));
    const auto it = table_.find(make_key(sym.data(), static_cast<int>(sym.size())));
    if (it == table_.end()) return 0;
    for (const auto& [s, c] : it->second.counts)
      if (s == symbol_index(symbol)) return c;
    return 0;
  }

  /// Header `N alphabet`, then `context symbol count` lines sorted by context
  /// and symbol. Space is written as `_`, the empty context as `^`.
  void save(std::ostream& os) const {
    os << order_ << ' ' << detail::encode_context(kAlphabet) << '\n';
    std::vector<std::string> lines;
    for (const auto& [key, st] : table_) {
      const std::string ctx = detail::encode_context(decode_key(key));
      for (const auto& [s, c] : st.counts)
        lines.push_back(ctx + ' ' + detail::encode_char(kAlphabet[static_cast<std::size_t>(s)]) + ' ' +
                        std::to_string(c));
    }
    std::sort(lines.begin(), lines.end());
    for (const auto& l : lines) os << l << '\n';
  }

  static CharNgramModel load(std::istream& is) {
    CharNgramModel m;
    std::string alphabet;
    if (!(is >> m.order_ >> alphabet)) throw Error("char model: malformed header");
    if (m.order_ < 1 || m.order_ > 10) throw Error("char model: order must lie in [1, 10]");
    if (detail::decode_context(alphabet) != kAlphabet) throw Error("char model: alphabet mismatch");
    std::string ctx, sym;
    std::uint32_t count = 0;
    while (is >> ctx >> sym >> count) {
      const std::string c = detail::decode_context(ctx);
      std::vector<int> s;
      for (char ch : c) s.push_back(symbol_index(ch));
      if (sym.size() != 1 || symbol_index(detail::decode_char(sym[0])) < 0) throw Error("char model: bad symbol " + sym);
      if (static_cast<int>(s.size()) >= m.order_ || std::find(s.begin(), s.end(), -1) != s.end())
        throw Error("char model: bad context " + ctx);
      auto& st = m.table_[make_key(s.data(), static_cast<int>(s.size()))];
      st.add(symbol_index(detail::decode_char(sym[0])), count);
    }
    return m;
  }

  std::size_t context_count() const { return table_.size(); }

 private:
  struct Stats {
    std::uint32_t total = 0;
    std::vector<std::pair<std::uint8_t, std::uint32_t>> counts;

    void add(int s, std::uint32_t n = 1) {
      total += n;
      for (auto& [sym, c] : counts)
        if (sym == s) {
          c += n;
          return;
        }
      counts.emplace_back(static_cast<std::uint8_t>(s), n);
      std::sort(counts.begin(), counts.end());
    }
  };

  // Up to 9 symbols at 6 bits each, plus the length in the top nibble.
  static std::uint64_t make_key(const int* sym, int k) {
    std::uint64_t key = static_cast<std::uint64_t>(k) << 60;
    for (int i = 0; i < k; ++i) key |= static_cast<std::uint64_t>(sym[i] + 1) << (6 * i);
    return key;
  }

  static std::string decode_key(std::uint64_t key) {
    const int k = static_cast<int>(key >> 60);
    std::string out;
    for (int i = 0; i < k; ++i) out += kAlphabet[((key >> (6 * i)) & 63U) - 1];
    return out;
  }

  int order_ = 0;
  std::unordered_map<std::uint64_t, Stats> table_;
};

/// Splits text into word tokens, dropping sentence punctuation.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if ((c >= 'a' && c <= 'z') || c == '\'') {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kUnknownWord = "<unk>";

/// Lexicographically sorted word list with a character trie for
/// prefix-constrained enumeration.
class Vocabulary {
 public:
  static constexpr int kTrieSymbols = 27;  // a-z and apostrophe

  Vocabulary() { nodes_.emplace_back(); }

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    std::sort(words_.begin(), words_.end());
    words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
    nodes_.emplace_back();
    for (std::size_t w = 0; w < words_.size(); ++w) {
      int node = 0;
      for (char c : words_[w]) {
        const int s = symbol_index(c);
        if (s < 0 || s >= kTrieSymbols) throw Error("Vocabulary: invalid character in word '" + words_[w] + "'");
        int next = nodes_[static_cast<std::size_t>(node)].child[static_cast<std::size_t>(s)];
        if (next < 0) {
          next = static_cast<int>(nodes_.size());
          nodes_[static_cast<std::size_t>(node)].child[static_cast<std::size_t>(s)] = next;
          nodes_.emplace_back();
        }
        node = next;
      }
      nodes_[static_cast<std::size_t>(node)].word = static_cast<int>(w);
    }
  }

  struct Node {
    std::array<int, kTrieSymbols> child;
    int word = -1;
    Node() { child.fill(-1); }
  };

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  bool contains(std::string_view w) const { return std::binary_search(words_.begin(), words_.end(), w); }

  int index_of(std::string_view w) const {
    const auto it = std::lower_bound(words_.begin(), words_.end(), w);
    return it != words_.end() && *it == w ? static_cast<int>(it - words_.begin()) : -1;
  }

  /// Trie node reached by `prefix`, or -1.
  int find_node(std::string_view prefix) const {
    int node = 0;
    for (char c : prefix) {
      const int s = symbol_index(c);
      if (s < 0 || s >= kTrieSymbols) return -1;
      node = nodes_[static_cast<std::size_t>(node)].child[static_cast<std::size_t>(s)];
      if (node < 0) return -1;
    }
    return node;
  }

  /// Every word starting with `prefix`, in lexicographic order.
  std::vector<std::string> with_prefix(std::string_view prefix) const {
    const auto lo = std::lower_bound(words_.begin(), words_.end(), prefix);
    std::vector<std::string> out;
    for (auto it = lo; it != words_.end() && it->compare(0, prefix.size(), prefix) == 0; ++it) out.push_back(*it);
    return out;
  }

 private:
  std::vector<std::string> words_;
  std::vector<Node> nodes_;
};

/// Word bigram model with Witten-Bell backoff to a Witten-Bell unigram, which
/// itself backs off to uniform over the vocabulary (plus <unk>).
class WordBigramModel {
 public:
  WordBigramModel() = default;

  static WordBigramModel train(const std::vector<std::string>& lines, const Vocabulary& vocab) {
    WordBigramModel m;
    m.vocab_size_ = vocab.size() + 1;
    for (const auto& line : lines) {
      std::string prev(kSentenceStart);
      for (auto& w : word_tokens(line)) {
        std::string tok = vocab.contains(w) ? w : std::string(kUnknownWord);
        m.add(prev, tok, 1);
        prev = std::move(tok);
      }
    }
    return m;
  }

  void add(const std::string& prev, const std::string& word, std::uint32_t n) {
    auto& u = unigram_[word];
    if (u == 0) ++unigram_types_;
    u += n;
    unigram_total_ += n;
    ++generation_;
    auto& ctx = bigram_[prev];
    auto& c = ctx.counts[word];
    if (c == 0) ++ctx.types;
    c += n;
    ctx.total += n;
  }

  void set_vocab_size(std::size_t n) { vocab_size_ = n; }

  double unigram_logprob(const std::string& word) const {
    const double denom = static_cast<double>(unigram_total_ + unigram_types_);
    const auto it = unigram_.find(word);
    if (it != unigram_.end()) return std::log(static_cast<double>(it->second) / denom);
    const double unseen = static_cast<double>(vocab_size_ > unigram_types_ ? vocab_size_ - unigram_types_ : 1);
    return std::log(static_cast<double>(unigram_types_) / denom / unseen);
  }

  /// log P(word | prev); `word` outside the training data is treated as <unk>-like mass.
  double logprob(const std::string& prev, const std::string& word) const {
    const auto ctx = bigram_.find(prev);
    if (ctx == bigram_.end()) return unigram_logprob(word);
    const auto& st = ctx->second;
    const double denom = static_cast<double>(st.total + st.types);
    const auto it = st.counts.find(word);
    if (it != st.counts.end()) return std::log(static_cast<double>(it->second) / denom);
    if (st.alpha_generation != generation_) {
      double seen_lower = 0;
      for (const auto& [w, c] : st.counts) seen_lower += std::exp(unigram_logprob(w));
      st.log_alpha = std::log(static_cast<double>(st.types) / denom) - std::log(std::max(1e-300, 1.0 - seen_lower));
      st.alpha_generation = generation_;
    }
    return st.log_alpha + unigram_logprob(word);
  }

  /// `prev word count` lines, sorted.
  void save(std::ostream& os) const {
    std::vector<std::string> lines;
    for (const auto& [prev, st] : bigram_)
      for (const auto& [w, c] : st.counts) lines.push_back(prev + ' ' + w + ' ' + std::to_string(c));
    std::sort(lines.begin(), lines.end());
    for (const auto& l : lines) os << l << '\n';
  }

  static WordBigramModel load(std::istream& is, std::size_t vocab_size) {
    WordBigramModel m;
    m.vocab_size_ = vocab_size;
    std::string prev, word;
    std::uint32_t c = 0;
    while (is >> prev >> word >> c) m.add(prev, word, c);
    return m;
  }

 private:
  struct Context {
    std::uint32_t total = 0;
    std::uint32_t types = 0;
    std::map<std::string, std::uint32_t> counts;
    mutable double log_alpha = 0;
    mutable std::uint64_t alpha_generation = ~std::uint64_t{0};
  };
  std::uint64_t generation_ = 0;
  std::map<std::string, std::uint32_t> unigram_;
  std::uint64_t unigram_total_ = 0;
  std::size_t unigram_types_ = 0;
  std::size_t vocab_size_ = 1;
  std::unordered_map<std::string, Context> bigram_;
};

}  // namespace nomon::lm

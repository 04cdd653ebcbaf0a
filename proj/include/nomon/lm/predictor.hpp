#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nomon/core.hpp"
#include "nomon/layout.hpp"
#include "nomon/lm/ngram.hpp"
#include "nomon/text_state.hpp"

namespace nomon::lm {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

/// Words seen at least `min_count` times.
inline std::vector<std::string> build_vocabulary(const std::vector<std::string>& lines, int min_count = 2) {
  std::map<std::string, int> counts;
  for (const auto& l : lines)
    for (auto& w : word_tokens(l)) ++counts[w];
  std::vector<std::string> out;
  for (const auto& [w, c] : counts)
    if (c >= min_count) out.push_back(w);
  return out;
}

/// Character model, word model and vocabulary trained on one corpus.
struct LanguageModel {
  CharNgramModel chars;
  WordBigramModel words;
  Vocabulary vocab;

  static LanguageModel train(const std::vector<std::string>& lines, int order = 6, int min_count = 2) {
    LanguageModel m;
    m.chars = CharNgramModel::train(lines, order);
    m.vocab = Vocabulary(build_vocabulary(lines, min_count));
    m.words = WordBigramModel::train(lines, m.vocab);
    return m;
  }

  /// Writes `<prefix>.chars`, `<prefix>.vocab` and `<prefix>.bigrams`.
  void save(const std::filesystem::path& prefix) const {
    auto open = [&](const char* ext) {
      std::ofstream os(prefix.string() + ext);
      if (!os) throw Error("cannot write " + prefix.string() + ext);
      return os;
    };
    auto c = open(".chars");
    chars.save(c);
    auto v = open(".vocab");
    for (const auto& w : vocab.words()) v << w << ' ' << words.unigram_logprob(w) << '\n';
    auto b = open(".bigrams");
    words.save(b);
  }

  static LanguageModel load(const std::filesystem::path& prefix) {
    auto open = [&](const char* ext) {
      std::ifstream is(prefix.string() + ext);
      if (!is) throw Error("cannot open " + prefix.string() + ext);
      return is;
    };
    LanguageModel m;
    auto c = open(".chars");
    m.chars = CharNgramModel::load(c);
    auto v = open(".vocab");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(v, line)) {
      const auto sp = line.find(' ');
      if (!line.empty()) words.push_back(line.substr(0, sp));
    }
    m.vocab = Vocabulary(std::move(words));
    auto b = open(".bigrams");
    m.words = WordBigramModel::load(b, m.vocab.size() + 1);
    return m;
  }
};

struct ScoredWord {
  std::string word;
  /// Character-model log probability of the remaining letters plus the space.
  double char_logprob = 0;
  /// char_logprob plus the word bigram log probability.
  double score = 0;
};

inline bool better(const ScoredWord& a, const ScoredWord& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.word < b.word;
}

/// Everything the interfaces need after a given text: the next-character
/// distribution, the best completions overall, and the best completions per
/// next letter.
struct Prediction {
  static constexpr std::size_t kTopWords = 18;
  static constexpr std::size_t kPerLetter = 3;

  CharDistribution chars{};
  std::vector<ScoredWord> top;
  std::array<std::vector<ScoredWord>, 26> by_letter;

  std::vector<std::string> top_words(std::size_t k) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, top.size()); ++i) out.push_back(top[i].word);
    return out;
  }

  std::vector<std::vector<std::string>> letter_words(std::size_t k) const {
    std::vector<std::vector<std::string>> out(26);
    for (std::size_t c = 0; c < 26; ++c)
      for (std::size_t i = 0; i < std::min(k, by_letter[c].size()); ++i) out[c].push_back(by_letter[c][i].word);
    return out;
  }
};

/// Previous word for the bigram model: <s> at the start of text or after
/// sentence punctuation, <unk> for out-of-vocabulary words.
inline std::string previous_word(std::string_view left_context, const Vocabulary& vocab) {
  std::size_t end = left_context.size();
  while (end > 0 && left_context[end - 1] == ' ') --end;
  if (end == 0) return std::string(kSentenceStart);
  const char last = left_context[end - 1];
  if (last == '.' || last == '?' || last == '!') return std::string(kSentenceStart);
  const auto toks = word_tokens(left_context.substr(0, end));
  if (toks.empty()) return std::string(kSentenceStart);
  return vocab.contains(toks.back()) ? toks.back() : std::string(kUnknownWord);
}

/// Computes and memoizes predictions per text. Thread-safe; one instance can
/// be shared by every run of a sweep.
class Predictor {
 public:
  explicit Predictor(const LanguageModel& model) : model_(&model) {}

  const LanguageModel& model() const { return *model_; }

  std::shared_ptr<const Prediction> predict(const std::string& text) const {
    {
      std::lock_guard lock(mu_);
      const auto it = cache_.find(text);
      if (it != cache_.end()) return it->second;
    }
    auto p = std::make_shared<const Prediction>(compute(text));
    std::lock_guard lock(mu_);
    return cache_.emplace(text, std::move(p)).first->second;
  }

  /// Warms the cache for every text reachable by one selection from `text`:
  /// each alphabet symbol and each of the top completions.
  std::size_t precompute_next(const std::string& text) const {
    const auto here = predict(text);
    std::size_t n = 0;
    for (char c : kAlphabet) {
      predict(text + c);
      ++n;
    }
    TextState base(text);
    for (const auto& w : here->top) {
      TextState s = base;
      s.apply({"w", TargetKind::word_completion, w.word});
      predict(s.text());
      ++n;
    }
    return n;
  }

  std::size_t cache_size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  Prediction compute(const std::string& text) const {
    const auto& m = *model_;
    Prediction out;
    std::vector<int> syms;
    syms.reserve(text.size() + 32);
    for (char c : text) {
      const int s = symbol_index(c);
      if (s < 0) throw Error(std::string("predict: character outside alphabet: '") + c + "'");
      syms.push_back(s);
    }
    out.chars = distribution(syms);

    const TextState state(text);
    const std::string prefix(state.partial_word());
    const std::string prev = previous_word(state.left_context(), m.vocab);
    const int root = m.vocab.find_node(prefix);
    if (root < 0) return out;

    std::vector<ScoredWord> all;
    std::vector<int> group;  // first letter after the prefix, -1 for the prefix itself
    std::string path = prefix;
    const int space = symbol_index(' ');

    auto visit = [&](auto& self, int node, double acc, int first) -> void {
      const auto& nd = m.vocab.node(node);
      const CharDistribution d = distribution(syms);
      if (nd.word >= 0) {
        const double cl = acc + std::log(d[static_cast<std::size_t>(space)]);
        all.push_back({path, cl, cl + m.words.logprob(prev, path)});
        group.push_back(first);
      }
      for (int s = 0; s < Vocabulary::kTrieSymbols; ++s) {
        const int child = nd.child[static_cast<std::size_t>(s)];
        if (child < 0) continue;
        syms.push_back(s);
        path.push_back(kAlphabet[static_cast<std::size_t>(s)]);
        self(self, child, acc + std::log(d[static_cast<std::size_t>(s)]), first < 0 && s < 26 ? s : (first < 0 ? 26 : first));
        path.pop_back();
        syms.pop_back();
      }
    };
    visit(visit, root, 0.0, -1);

    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return better(all[a], all[b]); });
    for (std::size_t i : order) {
      if (out.top.size() < Prediction::kTopWords) out.top.push_back(all[i]);
      const int g = group[i];
      if (g >= 0 && g < 26 && out.by_letter[static_cast<std::size_t>(g)].size() < Prediction::kPerLetter)
        out.by_letter[static_cast<std::size_t>(g)].push_back(all[i]);
    }
    return out;
  }

  CharDistribution distribution(const std::vector<int>& syms) const {
    const std::uint64_t key = model_->chars.context_key(syms);
    {
      std::lock_guard lock(dist_mu_);
      const auto it = dist_cache_.find(key);
      if (it != dist_cache_.end()) return it->second;
    }
    const CharDistribution d = model_->chars.distribution(syms);
    std::lock_guard lock(dist_mu_);
    dist_cache_.emplace(key, d);
    return d;
  }

  const LanguageModel* model_;
  mutable std::mutex dist_mu_;
  mutable std::unordered_map<std::uint64_t, CharDistribution> dist_cache_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::shared_ptr<const Prediction>> cache_;
};

/// Nomon priors over a populated layout's live targets: completions get the
/// character-model probability of finishing the word; a character gets its
/// next-symbol probability minus the mass of completions shown beside it.
inline std::vector<double> nomon_scores(const std::vector<Target>& targets, const Prediction& p) {
  std::vector<double> out(targets.size(), 0.0);
  std::map<std::string, double> completion_mass;  // by letter id
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.kind != TargetKind::word_completion || t.id.size() < 3) continue;
    const std::size_t letter = static_cast<std::size_t>(t.id[2] - 'a');
    if (letter >= 26) continue;
    for (const auto& w : p.by_letter[letter]) {
      if (w.word != t.label) continue;
      out[i] = std::exp(w.char_logprob);
      completion_mass[std::string(1, t.id[2])] += out[i];
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.kind != TargetKind::character) continue;
    const int s = symbol_index(t.label.empty() ? '\0' : t.label[0]);
    if (s < 0) continue;
    const auto it = completion_mass.find(t.id);
    out[i] = std::max(0.0, p.chars[static_cast<std::size_t>(s)] - (it == completion_mass.end() ? 0.0 : it->second));
  }
  return out;
}

}  // namespace nomon::lm

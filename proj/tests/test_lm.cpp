#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "nomon/lm/predictor.hpp"

using namespace nomon;
using namespace nomon::lm;

namespace {

// Straightforward Witten-Bell reference over strings, written independently
// of the table layout used by the model.
struct ReferenceWB {
  int order;
  std::map<std::string, std::map<char, int>> counts;

  ReferenceWB(const std::vector<std::string>& lines, int n) : order(n) {
    for (const auto& raw : lines) {
      const std::string line = raw + ' ';
      for (std::size_t i = 0; i < line.size(); ++i)
        for (int k = 0; k <= std::min<int>(n - 1, static_cast<int>(i)); ++k)
          ++counts[line.substr(i - static_cast<std::size_t>(k), static_cast<std::size_t>(k))][line[i]];
    }
  }

  double prob(std::string ctx, char c) const {
    if (static_cast<int>(ctx.size()) > order - 1) ctx = ctx.substr(ctx.size() - static_cast<std::size_t>(order - 1));
    const auto d = dist(ctx, static_cast<int>(ctx.size()));
    return d.at(c);
  }

  // Distribution given the last k characters of ctx, one level at a time.
  std::map<char, double> dist(const std::string& ctx, int k) const {
    std::map<char, double> out;
    if (k < 0) {
      for (char s : kAlphabet) out[s] = 1.0 / kAlphabetSize;
      return out;
    }
    const auto lower = dist(ctx, k - 1);
    const auto it = counts.find(ctx.substr(ctx.size() - static_cast<std::size_t>(k)));
    if (it == counts.end()) return lower;
    double total = 0;
    for (const auto& [s, n] : it->second) total += n;
    const double types = static_cast<double>(it->second.size());
    double unseen_lower = 0;
    for (char s : kAlphabet)
      if (!it->second.count(s)) unseen_lower += lower.at(s);
    for (char s : kAlphabet) {
      if (it->second.count(s)) out[s] = it->second.at(s) / (types == kAlphabetSize ? total : total + types);
      else out[s] = types / (total + types) * lower.at(s) / unseen_lower;
    }
    return out;
  }
};

double at(const CharDistribution& d, char c) { return d[static_cast<std::size_t>(symbol_index(c))]; }

const std::vector<std::string>& small_corpus() {
  static const std::vector<std::string> lines = {
      "the cat sat on the mat.", "the dog sat on the log.", "a cat and a dog.",
      "is the cat on the mat?", "the cat's hat, the dog's log!", "the end",
  };
  return lines;
}

}  // namespace

TEST(CharModel, WittenBellMatchesHandComputedValues) {
  const auto m = CharNgramModel::train({"abab"}, 2);
  // Unigram: a 2, b 2, space 1 -> C=5, T=3.
  EXPECT_NEAR(at(m.distribution(""), 'a'), 2.0 / 8, 1e-15);
  EXPECT_NEAR(at(m.distribution(""), ' '), 1.0 / 8, 1e-15);
  EXPECT_NEAR(at(m.distribution(""), 'z'), 3.0 / 8 / 29, 1e-15);
  // After 'a': b twice -> C=2, T=1.
  EXPECT_NEAR(at(m.distribution("a"), 'b'), 2.0 / 3, 1e-15);
  EXPECT_NEAR(at(m.distribution("a"), 'a'), 1.0 / 9, 1e-15);
  EXPECT_NEAR(at(m.distribution("a"), ' '), 1.0 / 18, 1e-15);
  // After 'b': a and space -> C=2, T=2.
  EXPECT_NEAR(at(m.distribution("b"), 'a'), 1.0 / 4, 1e-15);
  EXPECT_NEAR(at(m.distribution("b"), 'b'), 1.0 / 5, 1e-15);
  // Unseen context passes the lower order through; only the last symbol matters.
  EXPECT_NEAR(at(m.distribution("z"), 'a'), 2.0 / 8, 1e-15);
  EXPECT_NEAR(at(m.distribution("zzza"), 'b'), 2.0 / 3, 1e-15);
  EXPECT_EQ(m.count("a", 'b'), 2U);
  EXPECT_EQ(m.count("a", 'a'), 0U);
}

TEST(CharModel, AgreesWithReferenceImplementation) {
  const auto& lines = small_corpus();
  for (int order : {1, 3, 6}) {
    const auto m = CharNgramModel::train(lines, order);
    const ReferenceWB ref(lines, order);
    for (const std::string ctx : {"", "t", "th", "the c", "xq", "dog's ", "on the m", "cat and a d"}) {
      const auto d = m.distribution(ctx);
      for (char c : kAlphabet) ASSERT_NEAR(at(d, c), ref.prob(ctx, c), 1e-12) << order << " '" << ctx << "' " << c;
    }
  }
}

TEST(CharModel, DistributionsSumToOneAndArePositive) {
  const auto m = CharNgramModel::train(small_corpus(), 6);
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::string ctx;
    const auto len = rng.below(12);
    for (std::uint64_t i = 0; i < len; ++i) ctx += kAlphabet[rng.below(kAlphabetSize)];
    const auto d = m.distribution(ctx);
    double s = 0;
    for (double p : d) {
      ASSERT_GT(p, 0);
      s += p;
    }
    ASSERT_NEAR(s, 1.0, 1e-12) << ctx;
  }
}

TEST(CharModel, RejectsBadInput) {
  EXPECT_THROW(CharNgramModel::train({"abc"}, 0), Error);
  EXPECT_THROW(CharNgramModel::train({"ABC"}, 3), Error);
  EXPECT_THROW(CharNgramModel::train({""}, 3), Error);
  const auto m = CharNgramModel::train({"abc"}, 3);
  EXPECT_THROW(m.distribution("A"), Error);
}

TEST(CharModel, SaveLoadRoundTrips) {
  const auto m = CharNgramModel::train(small_corpus(), 4);
  std::stringstream ss;
  m.save(ss);
  const auto back = CharNgramModel::load(ss);
  EXPECT_EQ(back.order(), 4);
  EXPECT_EQ(back.context_count(), m.context_count());
  for (const std::string ctx : {"", "th", "the", "g's "}) {
    const auto a = m.distribution(ctx), b = back.distribution(ctx);
    for (std::size_t i = 0; i < kAlphabetSize; ++i) EXPECT_DOUBLE_EQ(a[i], b[i]);
  }
}

TEST(Vocabulary, PrefixEnumerationIsSortedAndComplete) {
  const Vocabulary v({"a", "and", "ant", "cat", "do", "don't", "dog"});
  EXPECT_TRUE(v.contains("don't"));
  EXPECT_FALSE(v.contains("an"));
  EXPECT_EQ(v.with_prefix("an"), (std::vector<std::string>{"and", "ant"}));
  EXPECT_EQ(v.with_prefix("do"), (std::vector<std::string>{"do", "dog", "don't"}));
  EXPECT_EQ(v.with_prefix(""), v.words());
  EXPECT_TRUE(v.with_prefix("x").empty());
  EXPECT_EQ(v.find_node("x"), -1);
  EXPECT_EQ(v.index_of("cat"), 3);
}

TEST(WordModel, BigramProbabilitiesFollowWittenBell) {
  const Vocabulary v({"a", "b", "c"});
  const auto m = WordBigramModel::train({"a b", "a c", "a b"}, v);
  // <s> -> a three times: C=3, T=1.
  EXPECT_NEAR(std::exp(m.logprob("<s>", "a")), 3.0 / 4, 1e-12);
  // a -> b twice, c once: C=3, T=2.
  EXPECT_NEAR(std::exp(m.logprob("a", "b")), 2.0 / 5, 1e-12);
  // Unigram: a 3, b 2, c 1 -> C=6, T=3.
  EXPECT_NEAR(std::exp(m.unigram_logprob("b")), 2.0 / 9, 1e-12);
  // Backoff for unseen "a a": (2/5) * P(a) / (1 - P(b) - P(c)).
  EXPECT_NEAR(std::exp(m.logprob("a", "a")), 0.4 * (3.0 / 9) / (1 - 3.0 / 9), 1e-12);
}

TEST(LanguageModel, SavesAndLoadsAllThreeParts) {
  const auto m = LanguageModel::train(small_corpus(), 4, 2);
  const auto dir = std::filesystem::temp_directory_path() / "nomon_lm_test";
  std::filesystem::create_directories(dir);
  m.save(dir / "model");
  const auto back = LanguageModel::load(dir / "model");
  EXPECT_EQ(back.vocab.words(), m.vocab.words());
  EXPECT_NEAR(back.words.logprob("the", "cat"), m.words.logprob("the", "cat"), 1e-12);
  Predictor a(m), b(back);
  EXPECT_EQ(a.predict("the c")->top_words(5), b.predict("the c")->top_words(5));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(LanguageModel::load(dir / "model"), Error);
}

TEST(Predictor, CompletionsMatchPrefixAndAreRanked) {
  const auto m = LanguageModel::train(small_corpus(), 4, 1);
  Predictor pr(m);
  const auto p = pr.predict("the d");
  ASSERT_FALSE(p->top.empty());
  for (const auto& w : p->top) EXPECT_EQ(w.word.rfind('d', 0), 0U) << w.word;
  for (std::size_t i = 1; i < p->top.size(); ++i) EXPECT_FALSE(better(p->top[i], p->top[i - 1]));
  EXPECT_EQ(p->top.front().word, "dog");
  // Per-letter groups are keyed by the letter after the prefix.
  const auto q = pr.predict("the ");
  for (std::size_t c = 0; c < 26; ++c)
    for (const auto& w : q->by_letter[c]) EXPECT_EQ(w.word[0], static_cast<char>('a' + c));
  EXPECT_TRUE(pr.predict("the zq")->top.empty());
  EXPECT_THROW(pr.predict("The"), Error);
}

TEST(Predictor, CachesAndPrecomputes) {
  const auto m = LanguageModel::train(small_corpus(), 4, 1);
  Predictor pr(m);
  const auto a = pr.predict("the ");
  EXPECT_EQ(pr.predict("the ").get(), a.get());
  const auto n = pr.precompute_next("the ");
  EXPECT_EQ(n, kAlphabetSize + a->top.size());
  EXPECT_GE(pr.cache_size(), n);
}

TEST(Predictor, NomonScoresSplitCharacterMass) {
  const auto m = LanguageModel::train(small_corpus(), 4, 1);
  Predictor pr(m);
  const auto p = pr.predict("the ");
  std::vector<Target> targets = {{"c", TargetKind::character, "c"}, {"d", TargetKind::character, "d"}};
  ASSERT_FALSE(p->by_letter[2].empty());
  const std::string word = p->by_letter[2][0].word;
  targets.push_back({"w:c:0", TargetKind::word_completion, word});
  targets.push_back({"undo", TargetKind::undo, "undo"});
  const auto s = nomon_scores(targets, *p);
  const double completion = std::exp(p->by_letter[2][0].char_logprob);
  EXPECT_NEAR(s[2], completion, 1e-15);
  EXPECT_NEAR(s[0] + s[2], at(p->chars, 'c'), 1e-12);
  EXPECT_NEAR(s[1], at(p->chars, 'd'), 1e-15);
  EXPECT_EQ(s[3], 0.0);
}

TEST(PreviousWord, HandlesSentenceBoundaries) {
  const Vocabulary v({"cat", "the"});
  EXPECT_EQ(previous_word("", v), "<s>");
  EXPECT_EQ(previous_word("the ", v), "the");
  EXPECT_EQ(previous_word("the dog ", v), "<unk>");
  EXPECT_EQ(previous_word("the cat. ", v), "<s>");
  EXPECT_EQ(previous_word("the cat, ", v), "cat");
}

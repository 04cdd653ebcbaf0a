#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "nomon/metrics.hpp"

using namespace nomon;

namespace {

// Exhaustive recursion straight from the definition of edit distance.
std::size_t edit_distance(std::string_view a, std::string_view b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const std::size_t sub = edit_distance(a.substr(1), b.substr(1)) + (a[0] == b[0] ? 0 : 1);
  return std::min({sub, edit_distance(a.substr(1), b) + 1, edit_distance(a, b.substr(1)) + 1});
}

}  // namespace

TEST(Levenshtein, KnownPairs) {
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3U);
  EXPECT_EQ(levenshtein("", "abc"), 3U);
  EXPECT_EQ(levenshtein("abc", ""), 3U);
  EXPECT_EQ(levenshtein("flaw", "lawn"), 2U);
  EXPECT_EQ(levenshtein("same", "same"), 0U);
}

TEST(Levenshtein, AgreesWithExhaustiveRecursion) {
  Rng rng(8);
  for (int trial = 0; trial < 400; ++trial) {
    std::string a, b;
    const auto la = rng.below(7), lb = rng.below(7);
    for (std::uint64_t i = 0; i < la; ++i) a += static_cast<char>('a' + rng.below(3));
    for (std::uint64_t i = 0; i < lb; ++i) b += static_cast<char>('a' + rng.below(3));
    ASSERT_EQ(levenshtein(a, b), edit_distance(a, b)) << a << " / " << b;
    ASSERT_EQ(levenshtein(a, b), levenshtein(b, a));
  }
}

TEST(Rates, MatchDefinitions) {
  // 25 characters in 30 s: 5 words in half a minute.
  EXPECT_DOUBLE_EQ(entry_rate(std::string(25, 'x'), 1000, 31000), 10.0);
  EXPECT_DOUBLE_EQ(entry_rate("", 0, 0), 0.0);
  EXPECT_THROW(entry_rate("abc", 5, 5), Error);
  EXPECT_DOUBLE_EQ(selection_rate(6, 0, 30000), 12.0);
  EXPECT_DOUBLE_EQ(click_load(30, "hello world "), 2.5);
  EXPECT_THROW(click_load(3, ""), Error);
  EXPECT_DOUBLE_EQ(final_error_rate("the cat ", "the bat "), 0.125);
  EXPECT_THROW(final_error_rate("", "x"), Error);
  const std::vector<TargetKind> kinds = {TargetKind::character, TargetKind::undo, TargetKind::character,
                                         TargetKind::backspace};
  EXPECT_DOUBLE_EQ(correction_rate(kinds), 0.5);
  EXPECT_THROW(correction_rate(std::vector<TargetKind>{}), Error);
}

TEST(ReactionTime, ExactlyTwoClicksPerTrial) {
  const std::vector<Timestamp> flashes = {1000, 5000, 9000};
  const std::vector<Timestamp> clicks = {1350, 1530, 5300, 9400, 9590, 9700};
  const auto r = srt_dct(flashes, clicks);
  EXPECT_EQ(r.trials, 3U);
  EXPECT_EQ(r.dropped, 2U);
  EXPECT_DOUBLE_EQ(r.srt_mean, 350);
  EXPECT_DOUBLE_EQ(r.dct_mean, 180);
  EXPECT_THROW(srt_dct(flashes, std::vector<Timestamp>{}), Error);
}

TEST(Bootstrap, IntervalBracketsTheMeanAndIsDeterministic) {
  Rng rng(1);
  std::vector<double> xs(200);
  for (auto& x : xs) x = 10 + 2 * rng.normal();
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= 200;
  const auto [lo, hi] = bootstrap_ci(xs, 0.95, 4000, 3);
  EXPECT_LT(lo, mean);
  EXPECT_GT(hi, mean);
  // Standard error is about 2 / sqrt(200); the 95% interval spans about 3.9 of them.
  EXPECT_NEAR(hi - lo, 3.92 * 2 / std::sqrt(200.0), 0.1);
  EXPECT_EQ(bootstrap_ci(xs, 0.95, 4000, 3), std::make_pair(lo, hi));
  const std::vector<double> constant(10, 4.0);
  EXPECT_EQ(bootstrap_ci(constant, 0.9, 100, 0), std::make_pair(4.0, 4.0));
  EXPECT_THROW(bootstrap_ci(std::vector<double>{1.0}), Error);
  EXPECT_THROW(bootstrap_ci(xs, 1.0), Error);
}

TEST(MetricsFromLog, ScoresTextPhrase) {
  SessionLog log;
  log.append(msg::phrase_prompt, 0, {{"phrase", "hi "}, {"phrase_id", "p001"}, {"iv_oov", "IV"}});
  log.append(msg::click, 1000, {{"source", "client"}});
  log.append(msg::click, 2000, {{"source", "client"}});
  log.append(msg::selection, 2000, {{"id", "h"}, {"kind", "character"}, {"label", "h"}});
  log.append(msg::click, 3000);
  log.append(msg::selection, 3000, {{"id", "o"}, {"kind", "character"}, {"label", "o"}});
  log.append(msg::click, 4000);
  log.append(msg::selection, 4000, {{"id", "undo"}, {"kind", "undo"}, {"label", "undo"}});
  log.append(msg::click, 5000);
  log.append(msg::selection, 5000, {{"id", "i"}, {"kind", "character"}, {"label", "i"}});
  log.append(msg::click, 7000);
  log.append(msg::selection, 7000, {{"id", "space"}, {"kind", "character"}, {"label", " "}});
  log.append(msg::done, 7000, {{"text", "hi "}});
  const auto ms = metrics_from_log(log);
  ASSERT_EQ(ms.size(), 1U);
  const auto& m = ms[0];
  EXPECT_EQ(m.phrase_id, "p001");
  EXPECT_EQ(m.clicks, 6U);
  EXPECT_EQ(m.selections, 5U);
  EXPECT_EQ(m.duration_ms, 6000);
  EXPECT_DOUBLE_EQ(m.wpm, 3.0 / 5 / 0.1);
  EXPECT_DOUBLE_EQ(m.cpc, 2.0);
  EXPECT_DOUBLE_EQ(m.corr_rate, 0.2);
  EXPECT_DOUBLE_EQ(m.err_rate, 0.0);
}

TEST(MetricsFromLog, ScoresPictureSequenceAndIgnoresStrayMessages) {
  SessionLog log;
  log.append(msg::click, 0);
  log.append(msg::phrase_prompt, 0, {{"task", "picture"}, {"phrase_id", "s1"}});
  log.append(msg::click, 1000);
  log.append(msg::selection, 1500, {{"id", "p3"}, {"kind", "picture"}, {"label", "x"}});
  log.append(msg::click, 2000);
  log.append(msg::click, 3000);
  log.append(msg::selection, 4000, {{"id", "p1"}, {"kind", "picture"}, {"label", "y"}});
  log.append(msg::done, 4000, {{"targets", {"p3", "p2"}}, {"selected", {"p3", "p1"}}});
  const auto ms = metrics_from_log(log);
  ASSERT_EQ(ms.size(), 1U);
  EXPECT_TRUE(ms[0].picture);
  EXPECT_DOUBLE_EQ(ms[0].wpm, 2 / 0.05);
  EXPECT_DOUBLE_EQ(ms[0].cpc, 1.5);
  EXPECT_DOUBLE_EQ(ms[0].err_rate, 0.5);
}

TEST(MetricsCsv, RowMatchesHeader) {
  PhraseMetrics p;
  p.phrase_id = "p002";
  p.iv_oov = "OOV";
  p.wpm = 7.25;
  p.clicks = 12;
  p.duration_ms = 9000;
  std::ostringstream os;
  write_metrics_csv_row(os, "s1", "nomon", p);
  EXPECT_EQ(os.str(), "s1,nomon,p002,OOV,7.250000,0.000000,0.000000,0.000000,12,9000\n");
  EXPECT_EQ(std::count(kMetricsCsvHeader.begin(), kMetricsCsvHeader.end(), ','), 9);
}

#include <gtest/gtest.h>

#include "nomon/simuser.hpp"
#include "support.hpp"

using namespace nomon;
using namespace nomon::sim;

namespace {

std::vector<Target> text_targets() { return build_nomon_layout(1, 0).live_targets(); }

}  // namespace

TEST(ExpertUser, ClickOffsetsHaveStatedMoments) {
  const auto d = expert_distribution(rotation_period(14));
  Rng rng(1);
  double s = 0, ss = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = d.sample(rng);
    s += x;
    ss += x * x;
  }
  const double mean = s / n, sd = std::sqrt(ss / n - mean * mean);
  EXPECT_NEAR(mean, 120, 2);
  EXPECT_NEAR(sd, 50, 3);
  EXPECT_NEAR(expert_scan_noise().mode(), 120, expert_scan_noise().bin_width());
}

TEST(PickTarget, FollowsGoalAndCorrects) {
  auto live = text_targets();
  EXPECT_EQ(pick_target("", live, "hi ", false)->id, "h");
  EXPECT_EQ(pick_target("hi", live, "hi ", false)->id, "space");
  EXPECT_FALSE(pick_target("hi ", live, "hi ", false));
  EXPECT_EQ(pick_target("hx", live, "hi ", false)->id, "backspace");
  EXPECT_EQ(pick_target("hx", live, "hi ", true)->id, "undo");
  live.push_back({"w:h:0", TargetKind::word_completion, "hi"});
  EXPECT_EQ(pick_target("h", live, "hi there ", false)->id, "w:h:0");
  // A completion is not used for a word carrying punctuation.
  EXPECT_EQ(pick_target("", live, "hi, ", false)->id, "h");
}

TEST(PhraseGoal, AbandonedWordFreezesText) {
  PhraseGoal g("the quick fox");
  EXPECT_EQ(g.goal(), "the quick fox ");
  EXPECT_EQ(g.word_at("the qu"), 1U);
  EXPECT_EQ(g.word_at("the qx"), 1U);
  g.fail(1, "the qx");
  EXPECT_EQ(g.goal(), "the qx fox ");
  EXPECT_TRUE(g.failed()[1]);
  EXPECT_TRUE(g.on_track("the qx f"));
  EXPECT_EQ(split_words("  a  b "), (std::vector<std::string>{"a", "b"}));
}

TEST(NomonDisplay, RespectsPerLetterAndTotalLimits) {
  lm::Predictor pr(test::bundled_model());
  const auto p = pr.predict("the ");
  for (int wc = 1; wc <= 3; ++wc)
    for (int wm : {0, 1, 5, 17, 26 * wc}) {
      const auto shown = nomon_display(*p, wc, wm);
      std::size_t total = 0;
      for (std::size_t c = 0; c < 26; ++c) {
        EXPECT_LE(shown[c].size(), static_cast<std::size_t>(wc));
        for (const auto& w : shown[c]) EXPECT_EQ(w[0], static_cast<char>('a' + c));
        total += shown[c].size();
      }
      EXPECT_LE(total, static_cast<std::size_t>(wm));
    }
}

TEST(IdealUsers, TypeEveryPhraseWithoutError) {
  lm::Predictor pr(test::bundled_model());
  const auto& phrases = test::bundled_phrases();
  const UserModel ideal;
  for (std::size_t i = 0; i < phrases.size(); i += 21) {
    Rng a(i), b(i);
    NomonSimConfig nc;
    nc.engine_dist = point_mass_distribution(rotation_period(14));
    const auto n = run_nomon_phrase(phrases[i].text, pr, nc, ideal, a);
    EXPECT_EQ(n.final_text, phrases[i].text + " ");
    EXPECT_EQ(n.errors, 0U);
    const auto r = run_rcs_phrase(phrases[i].text, pr, RcsSimConfig{}, ideal, b);
    EXPECT_EQ(r.final_text, phrases[i].text + " ");
    EXPECT_EQ(r.errors, 0U);
    EXPECT_EQ(r.clicks, 2 * r.selections);
  }
}

TEST(ExpertUsers, RunsAreReproducibleAndLogged) {
  lm::Predictor pr(test::bundled_model());
  const auto& phrase = test::bundled_phrases()[3];
  const UserModel expert{expert_distribution(rotation_period(14))};
  NomonSimConfig cfg;
  cfg.engine_dist = expert_distribution(rotation_period(14));
  Rng a(9), b(9);
  const auto x = run_nomon_phrase(phrase.text, pr, cfg, expert, a, {"p1", "IV"});
  const auto y = run_nomon_phrase(phrase.text, pr, cfg, expert, b, {"p1", "IV"});
  EXPECT_EQ(x.log.messages(), y.log.messages());
  const auto m = metrics_from_log(x.log);
  ASSERT_EQ(m.size(), 1U);
  EXPECT_EQ(m[0].clicks, x.clicks);
  EXPECT_EQ(m[0].selections, x.selections);
  EXPECT_EQ(m[0].phrase_id, "p1");
  EXPECT_EQ(x.target, phrase.text + " ");
  EXPECT_GT(m[0].wpm, 0);
}

TEST(ExpertUsers, RcsNoiseCausesSomeErrorsAtFastSpeeds) {
  lm::Predictor pr(test::bundled_model());
  const UserModel expert{expert_scan_noise()};
  RcsSimConfig cfg;
  cfg.scan = scan_time(20);
  std::size_t errors = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    Rng rng(i);
    const auto out = run_rcs_phrase(test::bundled_phrases()[i].text, pr, cfg, expert, rng);
    errors += out.errors;
    EXPECT_LE(levenshtein(out.target, out.final_text), out.target.size());
  }
  EXPECT_GT(errors, 0U);
}

TEST(LearningUser, FeedbackMovesTheEngineModeTowardTheUser) {
  const double T = rotation_period(14);
  const UserModel expert{expert_distribution(T)};
  NomonEngine engine(default_prior_distribution(T));
  const auto targets = build_picture_layout(16).live_targets();
  const std::vector<double> scores(targets.size(), 1.0);
  Rng rng(3);
  Timestamp now = 0;
  for (int round = 0; round < 150; ++round) {
    engine.set_targets(targets, scores, now);
    const auto r = nomon_round(engine, rng.below(targets.size()), expert, rng, now);
    now = r.time;
    auto d = engine.distribution();
    for (double off : engine.click_feedback()) d = d.update(off);
    engine.set_distribution(std::move(d));
  }
  EXPECT_NEAR(engine.distribution().mode(), 120, 2 * engine.distribution().bin_width());
}

#include <gtest/gtest.h>

#include <set>

#include "nomon/core.hpp"

using namespace nomon;

TEST(TargetKind, RoundTripsThroughStrings) {
  for (auto k : {TargetKind::character, TargetKind::word_completion, TargetKind::undo, TargetKind::backspace,
                 TargetKind::clear, TargetKind::picture})
    EXPECT_EQ(target_kind_from_string(to_string(k)), k);
  EXPECT_THROW(target_kind_from_string("letter"), Error);
}

TEST(TargetKind, CorrectivesAreUndoBackspaceClear) {
  EXPECT_TRUE(is_corrective(TargetKind::undo));
  EXPECT_TRUE(is_corrective(TargetKind::backspace));
  EXPECT_TRUE(is_corrective(TargetKind::clear));
  EXPECT_FALSE(is_corrective(TargetKind::character));
  EXPECT_FALSE(is_corrective(TargetKind::word_completion));
  EXPECT_FALSE(is_corrective(TargetKind::picture));
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformStaysInUnitInterval) {
  Rng r(1);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(Rng, BelowCoversRangeWithoutBias) {
  Rng r(7);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[r.below(6)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_THROW(r.below(0), Error);
}

TEST(Rng, NormalHasUnitMoments) {
  Rng r(9);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(DeriveSeed, DistinctInputsGiveDistinctSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 50; ++b) seen.insert(derive_seed(1, a, b));
  EXPECT_EQ(seen.size(), 2500U);
  EXPECT_EQ(derive_seed(3, 4, 5), derive_seed(3, 4, 5));
  EXPECT_NE(derive_seed(3, 4, 5), derive_seed(3, 5, 4));
}

TEST(Fnv1a, MatchesPublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

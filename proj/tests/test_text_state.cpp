#include <gtest/gtest.h>

#include "nomon/text_state.hpp"

using namespace nomon;

namespace {

Target ch(char c) { return {std::string(1, c), TargetKind::character, std::string(1, c)}; }
const Target kUndo{"undo", TargetKind::undo, "undo"};
const Target kBackspace{"backspace", TargetKind::backspace, "backspace"};
const Target kClear{"clear", TargetKind::clear, "clear"};

}  // namespace

TEST(TextState, CharactersAppend) {
  TextState s;
  for (char c : std::string("hi there")) s.apply(ch(c));
  EXPECT_EQ(s.text(), "hi there");
  EXPECT_EQ(s.partial_word(), "there");
  EXPECT_EQ(s.left_context(), "hi ");
  EXPECT_EQ(s.history_size(), 8U);
}

TEST(TextState, CompletionReplacesPartialWord) {
  TextState s("we don");
  s.apply({"w0", TargetKind::word_completion, "don't"});
  EXPECT_EQ(s.text(), "we don't ");
  EXPECT_EQ(s.partial_word(), "");
  s.apply({"w1", TargetKind::word_completion, ""});
  EXPECT_EQ(s.text(), "we don't ");
  TextState t("end.");
  t.apply({"w0", TargetKind::word_completion, "so"});
  EXPECT_EQ(t.text(), "end.so ");
}

TEST(TextState, UndoRestoresBeforeLastEdit) {
  TextState s("ab");
  s.apply({"w0", TargetKind::word_completion, "about"});
  s.apply(kBackspace);
  EXPECT_EQ(s.text(), "about");
  s.apply(kUndo);
  EXPECT_EQ(s.text(), "about ");
  s.apply(kUndo);
  EXPECT_EQ(s.text(), "ab");
  s.apply(kUndo);
  EXPECT_EQ(s.text(), "ab");
}

TEST(TextState, ClearAndBackspaceOnEmpty) {
  TextState s("xyz");
  s.apply(kClear);
  EXPECT_EQ(s.text(), "");
  s.apply(kBackspace);
  EXPECT_EQ(s.text(), "");
  s.apply(kUndo);
  s.apply(kUndo);
  EXPECT_EQ(s.text(), "xyz");
}

TEST(TextState, ApostropheIsPartOfAWord) {
  TextState s("it's");
  EXPECT_EQ(s.partial_word(), "it's");
  TextState t("so,");
  EXPECT_EQ(t.partial_word(), "");
  EXPECT_TRUE(is_word_char('\''));
  EXPECT_FALSE(is_word_char('A'));
}

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nomon/core.hpp"

namespace nomon {

inline bool is_word_char(char c) { return (c >= 'a' && c <= 'z') || c == '\''; }

/// Text being composed plus an undo history of prior texts.
class TextState {
 public:
  TextState() = default;
  explicit TextState(std::string text) : text_(std::move(text)) {}

  const std::string& text() const { return text_; }
  std::size_t history_size() const { return history_.size(); }

  /// Trailing run of word characters: the word being typed.
  std::string_view partial_word() const {
    std::size_t i = text_.size();
    while (i > 0 && is_word_char(text_[i - 1])) --i;
    return std::string_view(text_).substr(i);
  }

  /// Everything before the partial word.
  std::string_view left_context() const {
    return std::string_view(text_).substr(0, text_.size() - partial_word().size());
  }

  /// Applies a selection. Characters append; a completion replaces the
  /// partial word with the word and a space; undo restores the text before
  /// the last edit.
  void apply(const Target& t) {
    switch (t.kind) {
      case TargetKind::character:
        push();
        text_ += t.label;
        break;
      case TargetKind::word_completion: {
        if (t.label.empty()) return;
        push();
        const auto keep = left_context().size();
        text_.resize(keep);
        text_ += t.label;
        text_ += ' ';
        break;
      }
      case TargetKind::backspace:
        push();
        if (!text_.empty()) text_.pop_back();
        break;
      case TargetKind::clear:
        push();
        text_.clear();
        break;
      case TargetKind::undo:
        if (!history_.empty()) {
          text_ = std::move(history_.back());
          history_.pop_back();
        }
        break;
      case TargetKind::picture:
        break;
    }
  }

 private:
  void push() { history_.push_back(text_); }

  std::string text_;
  std::vector<std::string> history_;
};

}  // namespace nomon

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nomon/core.hpp"

namespace nomon {

enum class Ordering { alphabetical, frequency };
/// Where completions live: an edge row band (RCS) or beside each letter (Nomon).
enum class Placement { top, bottom, inline_ };

inline std::string_view to_string(Ordering o) {
  return o == Ordering::alphabetical ? "alphabetical" : "frequency";
}
inline std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::top: return "top";
    case Placement::bottom: return "bottom";
    case Placement::inline_: return "inline";
  }
  return "?";
}
inline Ordering ordering_from_string(std::string_view s) {
  if (s == "alphabetical") return Ordering::alphabetical;
  if (s == "frequency") return Ordering::frequency;
  throw Error("unknown ordering: " + std::string(s));
}
inline Placement placement_from_string(std::string_view s) {
  if (s == "top") return Placement::top;
  if (s == "bottom") return Placement::bottom;
  if (s == "inline") return Placement::inline_;
  throw Error("unknown placement: " + std::string(s));
}

/// One occupied grid position. Several cells may share (row, col) in the
/// Nomon layout: slot 0 is the principal option, slots 1..W_c its completions.
struct Cell {
  int row = 0;
  int col = 0;
  int slot = 0;
  Target target;

  bool operator==(const Cell&) const = default;
};

struct Layout {
  int rows = 0;
  int cols = 0;
  Ordering ordering = Ordering::alphabetical;
  Placement placement = Placement::top;
  int w_max = 0;
  int w_c = 0;
  std::vector<Cell> cells;

  bool operator==(const Layout&) const = default;

  const Cell* at(int row, int col, int slot = 0) const {
    for (const auto& c : cells)
      if (c.row == row && c.col == col && c.slot == slot) return &c;
    return nullptr;
  }
  const Cell* find(std::string_view id) const {
    for (const auto& c : cells)
      if (c.target.id == id) return &c;
    return nullptr;
  }
  std::size_t count(TargetKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        cells.begin(), cells.end(), [&](const Cell& c) { return c.target.kind == kind; }));
  }
  /// Targets that can currently be selected (unfilled completion slots excluded).
  std::vector<Target> live_targets() const {
    std::vector<Target> out;
    for (const auto& c : cells)
      if (c.target.kind != TargetKind::word_completion || !c.target.label.empty())
        out.push_back(c.target);
    return out;
  }
};

namespace layout_detail {

inline constexpr std::string_view kFrequencyLetters = "etaoinsrhldcumfpgwybvkxjqz";
inline constexpr std::string_view kPunctuation = ".,'?!";

inline std::string char_id(char c) {
  switch (c) {
    case ' ': return "space";
    case '.': return "period";
    case ',': return "comma";
    case '\'': return "apostrophe";
    case '?': return "question";
    case '!': return "exclamation";
    default: return std::string(1, c);
  }
}

inline Target char_target(char c) { return {char_id(c), TargetKind::character, std::string(1, c)}; }

inline std::vector<Target> correctives() {
  return {{"undo", TargetKind::undo, "undo"},
          {"backspace", TargetKind::backspace, "backspace"},
          {"clear", TargetKind::clear, "clear"}};
}

inline std::vector<Target> principal_options(Ordering ordering) {
  std::vector<Target> out;
  if (ordering == Ordering::frequency) {
    for (char c : kFrequencyLetters) out.push_back(char_target(c));
  } else {
    for (char c = 'a'; c <= 'z'; ++c) out.push_back(char_target(c));
  }
  out.push_back(char_target(' '));
  for (char c : kPunctuation) out.push_back(char_target(c));
  for (auto& t : correctives()) out.push_back(std::move(t));
  return out;
}

inline std::string escape_label(std::string_view s) {
  if (s.empty()) return "\\e";
  std::string out;
  for (char c : s) {
    if (c == ' ') out += "\\s";
    else if (c == '\\') out += "\\\\";
    else out += c;
  }
  return out;
}

inline std::string unescape_label(std::string_view s) {
  if (s == "\\e") return {};
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      out += s[i] == 's' ? ' ' : s[i];
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace layout_detail

inline constexpr int kRcsRows = 8;
inline constexpr int kRcsCols = 7;
inline constexpr int kRcsMaxCompletions = 18;

/// Row-column scanning text layout on an 8 x 7 grid: five rows of principal
/// options plus ceil(W_max / 7) completion rows on the chosen edge. Rows past
/// the last occupied one stay empty.
inline Layout build_rcs_layout(Ordering ordering, Placement placement, int w_max) {
  if (w_max < 0 || w_max > kRcsMaxCompletions)
    throw Error("build_rcs_layout: W_max must lie in [0, 18]");
  if (placement == Placement::inline_) throw Error("build_rcs_layout: placement must be top or bottom");
  const auto principal = layout_detail::principal_options(ordering);
  const int principal_rows = static_cast<int>((principal.size() + kRcsCols - 1) / kRcsCols);
  const int completion_rows = (w_max + kRcsCols - 1) / kRcsCols;

  Layout layout;
  layout.rows = kRcsRows;
  layout.cols = kRcsCols;
  layout.ordering = ordering;
  layout.placement = placement;
  layout.w_max = w_max;
  layout.w_c = 0;

  const int first_principal_row = placement == Placement::top ? completion_rows : 0;
  const int first_completion_row = placement == Placement::top ? 0 : principal_rows;
  for (int k = 0; k < w_max; ++k) {
    layout.cells.push_back({first_completion_row + k / kRcsCols, k % kRcsCols, 0,
                            {"w" + std::to_string(k), TargetKind::word_completion, ""}});
  }
  for (std::size_t k = 0; k < principal.size(); ++k) {
    const int idx = static_cast<int>(k);
    layout.cells.push_back({first_principal_row + idx / kRcsCols, idx % kRcsCols, 0, principal[k]});
  }
  std::sort(layout.cells.begin(), layout.cells.end(), [](const Cell& a, const Cell& b) {
    return std::tie(a.row, a.col, a.slot) < std::tie(b.row, b.col, b.slot);
  });
  return layout;
}

inline std::string nomon_slot_id(char letter, int k) {
  return std::string("w:") + letter + ":" + std::to_string(k);
}

/// Nomon text layout: a 6 x 5 grid of principal options in alphabetical order.
/// Letters fill the first 26 cells; the last row packs space, punctuation and
/// the three correctives. Each letter cell carries W_c completion slots.
inline Layout build_nomon_layout(int w_c, int w_max) {
  if (w_c < 1 || w_c > 3) throw Error("build_nomon_layout: W_c must be 1, 2 or 3");
  if (w_max < 0 || w_max > 26 * w_c) throw Error("build_nomon_layout: W_max must lie in [0, 26 W_c]");
  Layout layout;
  layout.rows = 6;
  layout.cols = 5;
  layout.ordering = Ordering::alphabetical;
  layout.placement = Placement::inline_;
  layout.w_max = w_max;
  layout.w_c = w_c;
  for (int k = 0; k < 26; ++k) {
    const char letter = static_cast<char>('a' + k);
    const int row = k / 5, col = k % 5;
    layout.cells.push_back({row, col, 0, layout_detail::char_target(letter)});
    for (int s = 0; s < w_c; ++s)
      layout.cells.push_back({row, col, s + 1, {nomon_slot_id(letter, s), TargetKind::word_completion, ""}});
  }
  using layout_detail::char_target;
  const std::vector<std::pair<int, std::vector<Target>>> tail = {
      {1, {char_target(' ')}},
      {2, {char_target('.'), char_target(','), char_target('\'')}},
      {3, {char_target('?'), char_target('!')}},
      {4, layout_detail::correctives()},
  };
  for (const auto& [col, targets] : tail)
    for (std::size_t s = 0; s < targets.size(); ++s)
      layout.cells.push_back({5, col, static_cast<int>(s), targets[s]});
  return layout;
}

/// Near-square picture grid: ceil(sqrt(n)) columns, row-major fill.
inline Layout build_picture_layout(int n) {
  if (n < 1) throw Error("build_picture_layout: n must be positive");
  Layout layout;
  layout.cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-12));
  layout.rows = (n + layout.cols - 1) / layout.cols;
  layout.placement = Placement::top;
  for (int k = 0; k < n; ++k) {
    std::string id = "p" + std::to_string(k);
    layout.cells.push_back({k / layout.cols, k % layout.cols, 0, {id, TargetKind::picture, id}});
  }
  return layout;
}

/// Fills RCS completion slots (w0, w1, ...) with words in rank order; slots
/// beyond `words` are left empty.
inline Layout with_rcs_completions(Layout layout, const std::vector<std::string>& words) {
  for (auto& c : layout.cells) {
    if (c.target.kind != TargetKind::word_completion) continue;
    const auto k = static_cast<std::size_t>(std::stoi(c.target.id.substr(1)));
    c.target.label = k < words.size() ? words[k] : std::string{};
  }
  return layout;
}

/// Fills Nomon completion slots; `by_letter[c - 'a']` lists the words to show
/// beside letter c, best first.
inline Layout with_nomon_completions(Layout layout, const std::vector<std::vector<std::string>>& by_letter) {
  for (auto& c : layout.cells) {
    if (c.target.kind != TargetKind::word_completion) continue;
    const char letter = c.target.id[2];
    const auto k = static_cast<std::size_t>(c.slot - 1);
    const auto& words = by_letter.at(static_cast<std::size_t>(letter - 'a'));
    c.target.label = k < words.size() ? words[k] : std::string{};
  }
  return layout;
}

/// Text format: header `rows cols ordering placement Wmax Wc`, then one line
/// per cell `r c kind id label` in (r, c, slot) order. Labels escape space as
/// `\s`, backslash as `\\`, and the empty label as `\e`.
inline void write_layout(std::ostream& os, const Layout& layout) {
  os << layout.rows << ' ' << layout.cols << ' ' << to_string(layout.ordering) << ' '
     << to_string(layout.placement) << ' ' << layout.w_max << ' ' << layout.w_c << '\n';
  for (const auto& c : layout.cells) {
    os << c.row << ' ' << c.col << ' ' << to_string(c.target.kind) << ' ' << c.target.id << ' '
       << layout_detail::escape_label(c.target.label) << '\n';
  }
}

inline Layout read_layout(std::istream& is) {
  Layout layout;
  std::string line;
  if (!std::getline(is, line)) throw Error("layout: missing header");
  {
    std::istringstream hs(line);
    std::string ordering, placement;
    if (!(hs >> layout.rows >> layout.cols >> ordering >> placement >> layout.w_max >> layout.w_c))
      throw Error("layout: malformed header: " + line);
    layout.ordering = ordering_from_string(ordering);
    layout.placement = placement_from_string(placement);
  }
  std::map<std::pair<int, int>, int> next_slot;
  std::set<std::string> ids;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Cell c;
    std::string kind, label;
    if (!(ls >> c.row >> c.col >> kind >> c.target.id >> label))
      throw Error("layout: malformed cell on line " + std::to_string(lineno));
    c.target.kind = target_kind_from_string(kind);
    c.target.label = layout_detail::unescape_label(label);
    if (c.row < 0 || c.row >= layout.rows || c.col < 0 || c.col >= layout.cols)
      throw Error("layout: cell outside grid on line " + std::to_string(lineno));
    if (!ids.insert(c.target.id).second)
      throw Error("layout: duplicate id '" + c.target.id + "' on line " + std::to_string(lineno));
    c.slot = next_slot[{c.row, c.col}]++;
    layout.cells.push_back(std::move(c));
  }
  return layout;
}

}  // namespace nomon

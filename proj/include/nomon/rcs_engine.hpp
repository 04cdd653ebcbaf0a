#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "nomon/core.hpp"
#include "nomon/layout.hpp"

namespace nomon {

/// Highlight duration for scan setting j in [0, 20]: 2 e^(-j/14) s, in whole ms.
inline Duration scan_time(int j) {
  if (j < 0 || j > 20) throw Error("scan_time: j must lie in [0, 20]");
  return static_cast<Duration>(std::llround(2000.0 * std::exp(-j / 14.0)));
}

/// Extra dwell on the first row and first column for setting k in [0, 10].
inline Duration extra_delay(int k) {
  if (k < 0 || k > 10) throw Error("extra_delay: k must lie in [0, 10]");
  return static_cast<Duration>(150 * (10 - k));
}

enum class ScanMode { row_scan, col_scan };

inline std::string_view to_string(ScanMode m) { return m == ScanMode::row_scan ? "row" : "col"; }

/// What a click did: picked a row, selected a cell, or hit an empty cell.
struct RcsClick {
  enum class Kind { row_selected, selected, empty } kind = Kind::row_selected;
  std::optional<Target> target;
  int row = 0;
  int col = 0;
};

/// Row-column scanner. Rows with no live cell are skipped; a row's column
/// scan runs to its last live cell, so unfilled completion slots are never
/// highlighted. Column scanning gives up after two full cycles.
class RcsEngine {
 public:
  static constexpr int kMaxColumnCycles = 2;

  RcsEngine(Layout layout, Duration scan, Duration delay, Timestamp start = 0)
      : scan_(scan), delay_(delay) {
    if (scan <= 0) throw Error("RcsEngine: scan time must be positive");
    if (delay < 0) throw Error("RcsEngine: extra delay must be non-negative");
    set_layout(std::move(layout), start);
  }

  const Layout& layout() const { return layout_; }
  ScanMode mode() const { return mode_; }
  /// Position within the current scan (row order, or column within the row).
  int index() const { return index_; }
  int cycles() const { return cycles_; }
  std::optional<int> selected_row() const { return selected_row_; }
  Timestamp highlight_start() const { return highlight_start_; }
  Timestamp next_advance_at() const { return next_advance_at_; }
  Duration scan() const { return scan_; }
  Duration delay() const { return delay_; }
  const std::vector<int>& scan_rows() const { return rows_; }

  /// Grid row currently highlighted (row mode) or being column-scanned.
  int highlighted_row() const { return mode_ == ScanMode::row_scan ? rows_[static_cast<std::size_t>(index_)] : *selected_row_; }

  /// Columns scanned in `row`: up to and including its last live cell.
  int columns_in_row(int row) const {
    return row >= 0 && row < static_cast<int>(row_cols_.size()) ? row_cols_[static_cast<std::size_t>(row)] : 0;
  }

  int current_count() const {
    return mode_ == ScanMode::row_scan ? static_cast<int>(rows_.size()) : columns_in_row(*selected_row_);
  }

  Duration dwell(int index) const { return index == 0 ? scan_ + delay_ : scan_; }

  void set_trace(std::ostream* trace) { trace_ = trace; }

  void set_timing(Duration scan, Duration delay) {
    if (scan <= 0 || delay < 0) throw Error("RcsEngine: invalid timing");
    scan_ = scan;
    delay_ = delay;
  }

  /// Installs a (re-populated) layout and restarts row scanning at `now`.
  void set_layout(Layout layout, Timestamp now) {
    layout_ = std::move(layout);
    row_cols_.assign(static_cast<std::size_t>(std::max(layout_.rows, 0)), 0);
    for (const auto& c : layout_.cells)
      if (c.slot == 0 && live(c) && c.row >= 0 && c.row < layout_.rows)
        row_cols_[static_cast<std::size_t>(c.row)] = std::max(row_cols_[static_cast<std::size_t>(c.row)], c.col + 1);
    rows_.clear();
    for (int r = 0; r < layout_.rows; ++r)
      if (columns_in_row(r) > 0) rows_.push_back(r);
    if (rows_.empty()) throw Error("RcsEngine: layout has no selectable cells");
    restart(now);
  }

  /// Moves the highlight one step; `now` must have reached next_advance_at.
  void advance(Timestamp now) {
    if (now < next_advance_at_) throw Error("RcsEngine::advance called before the highlight expired");
    const Timestamp start = next_advance_at_;
    ++index_;
    if (index_ >= current_count()) {
      index_ = 0;
      if (mode_ == ScanMode::col_scan && ++cycles_ >= kMaxColumnCycles) {
        mode_ = ScanMode::row_scan;
        cycles_ = 0;
        selected_row_.reset();
        emit_trace(start, "reset", nullptr);
      }
    }
    highlight_start_ = start;
    next_advance_at_ = start + dwell(index_);
  }

  void advance_to(Timestamp now) {
    while (next_advance_at_ <= now) advance(now);
  }

  RcsClick observe_click(Timestamp now) {
    if (now < highlight_start_) throw Error("RcsEngine: click time precedes the current highlight");
    advance_to(now);
    RcsClick out;
    if (mode_ == ScanMode::row_scan) {
      out.kind = RcsClick::Kind::row_selected;
      out.row = rows_[static_cast<std::size_t>(index_)];
      selected_row_ = out.row;
      mode_ = ScanMode::col_scan;
      cycles_ = 0;
      index_ = 0;
      highlight_start_ = now;
      next_advance_at_ = now + dwell(0);
      emit_trace(now, "click", nullptr);
      return out;
    }
    out.row = *selected_row_;
    out.col = index_;
    const Cell* cell = layout_.at(out.row, out.col);
    if (cell && live(*cell)) {
      out.kind = RcsClick::Kind::selected;
      out.target = cell->target;
    } else {
      out.kind = RcsClick::Kind::empty;
    }
    emit_trace(now, "select", out.target ? &*out.target : nullptr);
    restart(now);
    return out;
  }

 private:
  static bool live(const Cell& c) { return c.target.kind != TargetKind::word_completion || !c.target.label.empty(); }

  void restart(Timestamp now) {
    mode_ = ScanMode::row_scan;
    index_ = 0;
    cycles_ = 0;
    selected_row_.reset();
    highlight_start_ = now;
    next_advance_at_ = now + dwell(0);
  }

  void emit_trace(Timestamp t, const char* ev, const Target* target) const {
    if (!trace_) return;
    *trace_ << "t=" << t << " ev=" << ev << " target=" << (target ? target->id : std::string("-"))
            << " post1=" << (target ? 1 : 0) << " post2=0 mode=" << to_string(mode_) << '\n';
  }

  Layout layout_;
  Duration scan_;
  Duration delay_;
  std::vector<int> rows_;
  std::vector<int> row_cols_;
  ScanMode mode_ = ScanMode::row_scan;
  int index_ = 0;
  int cycles_ = 0;
  std::optional<int> selected_row_;
  Timestamp highlight_start_ = 0;
  Timestamp next_advance_at_ = 0;
  std::ostream* trace_ = nullptr;
};

}  // namespace nomon

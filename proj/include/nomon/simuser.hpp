#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nomon/clickmodel.hpp"
#include "nomon/core.hpp"
#include "nomon/layout.hpp"
#include "nomon/lm/predictor.hpp"
#include "nomon/log.hpp"
#include "nomon/nomon_engine.hpp"
#include "nomon/rcs_engine.hpp"
#include "nomon/text_state.hpp"

namespace nomon::sim {

/// Click-timing model of a simulated user. Without a noise distribution the
/// user is ideal: every click lands exactly on the aim point.
struct UserModel {
  std::optional<ClickTimeDistribution> noise;
  /// Erroneous selections tolerated per word before it is abandoned.
  int max_error_attempts = 2;

  bool ideal() const { return !noise.has_value(); }
  Duration draw(Rng& rng) const { return noise ? static_cast<Duration>(std::llround(noise->sample(rng))) : 0; }
};

/// The stand-in experienced user: Gaussian click offsets, +120 ms mean, 50 ms sd.
inline constexpr double kExpertMeanMs = 120.0;
inline constexpr double kExpertSdMs = 50.0;

inline ClickTimeDistribution expert_distribution(double period, int bins = ClickTimeDistribution::kDefaultBins) {
  return gaussian_distribution(period, kExpertMeanMs, kExpertSdMs, bins);
}

/// Noise model for scanning, where no period exists: a wide domain with fine bins.
inline ClickTimeDistribution expert_scan_noise() { return gaussian_distribution(4000.0, kExpertMeanMs, kExpertSdMs, 400); }

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// What the user is trying to produce. Starts as the phrase plus a trailing
/// space; abandoning a word freezes the text typed so far and continues with
/// the following words.
class PhraseGoal {
 public:
  explicit PhraseGoal(std::string_view phrase) : words_(split_words(phrase)), failed_(words_.size(), false) {
    rebuild();
  }

  const std::string& goal() const { return goal_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<bool>& failed() const { return failed_; }

  bool on_track(std::string_view text) const {
    return text.size() <= goal_.size() && goal_.compare(0, text.size(), text) == 0;
  }

  /// Index of the word at the first point where `text` stops matching the goal.
  std::size_t word_at(std::string_view text) const {
    std::size_t p = 0;
    while (p < text.size() && p < goal_.size() && text[p] == goal_[p]) ++p;
    if (p < base_.size()) return next_;
    std::size_t w = next_;
    for (std::size_t i = base_.size(); i < p; ++i)
      if (goal_[i] == ' ') ++w;
    return w;
  }

  void fail(std::size_t word, std::string_view text) {
    base_ = std::string(text);
    if (word >= words_.size()) {
      next_ = words_.size();
      goal_ = base_;
      return;
    }
    failed_[word] = true;
    if (!base_.empty() && base_.back() != ' ') base_ += ' ';
    next_ = word + 1;
    rebuild();
  }

 private:
  void rebuild() {
    goal_ = base_;
    for (std::size_t i = next_; i < words_.size(); ++i) goal_ += words_[i] + ' ';
  }

  std::vector<std::string> words_;
  std::vector<bool> failed_;
  std::string base_;
  std::size_t next_ = 0;
  std::string goal_;
};

inline const Target* find_by(const std::vector<Target>& live, TargetKind kind, std::string_view label) {
  for (const auto& t : live)
    if (t.kind == kind && t.label == label) return &t;
  return nullptr;
}

/// Next target for a user aiming at `goal`. On track: the current goal word
/// if it is displayed as a completion, else the next character. Off track:
/// undo right after an erroneous selection, backspace otherwise. Returns
/// nothing once the text equals the goal.
inline std::optional<Target> pick_target(std::string_view text, const std::vector<Target>& live,
                                         std::string_view goal, bool prefer_undo) {
  if (text == goal) return std::nullopt;
  const bool on_track = text.size() < goal.size() && goal.substr(0, text.size()) == text;
  if (!on_track) {
    const Target* t = find_by(live, prefer_undo ? TargetKind::undo : TargetKind::backspace,
                              prefer_undo ? "undo" : "backspace");
    if (!t) throw Error("pick_target: layout lacks corrective targets");
    return *t;
  }
  const TextState state{std::string(text)};
  const std::size_t left = state.left_context().size();
  const std::size_t end = goal.find(' ', left);
  if (end != std::string_view::npos && end > left) {
    const std::string_view word = goal.substr(left, end - left);
    bool plain = true;
    for (char c : word) plain = plain && is_word_char(c);
    if (plain) {
      if (const Target* t = find_by(live, TargetKind::word_completion, word)) return *t;
    }
  }
  const Target* t = find_by(live, TargetKind::character, std::string(1, goal[text.size()]));
  if (!t) throw Error(std::string("pick_target: no target for character '") + goal[text.size()] + "'");
  return *t;
}

struct PhraseInfo {
  std::string phrase_id;
  std::string iv_oov;
};

struct SimOutcome {
  std::string target;
  std::string final_text;
  SessionLog log;
  std::vector<bool> word_failed;
  std::size_t clicks = 0;
  std::size_t selections = 0;
  std::size_t errors = 0;
  Timestamp first_click = 0;
  Timestamp done = 0;
};

namespace detail {

/// Bookkeeping shared by both engines: text, goal, error accounting and log.
///
/// Click noise for each round comes from its own stream keyed by the text
/// at the start of the round and how often that text has been seen in this
/// run. Runs under different settings that reach the same state therefore
/// draw the same noise, which keeps comparisons between settings tight.
class Transcriber {
 public:
  Transcriber(std::string_view phrase, const UserModel& user, const PhraseInfo& info, Rng& rng)
      : goal_(phrase), user_(user), run_seed_(rng.next_u64()) {
    out_.target = std::string(phrase) + " ";
    out_.log.append(msg::phrase_prompt, 0,
                    {{"phrase", out_.target}, {"phrase_id", info.phrase_id}, {"iv_oov", info.iv_oov}, {"task", "text"}});
    max_selections_ = 40 * out_.target.size() + 200;
  }

  const std::string& text() const { return text_.text(); }
  bool finished() const { return text_.text() == goal_.goal() || out_.selections >= max_selections_; }

  Target intended(const std::vector<Target>& live) const {
    return *pick_target(text_.text(), live, goal_.goal(), prefer_undo_);
  }

  Rng round_rng() {
    const std::string& t = text_.text();
    return Rng(derive_seed(run_seed_, fnv1a64(t), static_cast<std::uint64_t>(visits_[t]++)));
  }

  void click(Timestamp t) {
    if (out_.clicks == 0) out_.first_click = t;
    ++out_.clicks;
    out_.log.append(msg::click, t, json::object(), t);
  }

  /// An error that changed no text (wrong row, empty cell).
  void miss() { register_error(goal_.word_at(text_.text())); }

  void select(const Target& intended, const Target& got, Timestamp t, int round_clicks) {
    const std::size_t word = goal_.word_at(text_.text());
    text_.apply(got);
    ++out_.selections;
    json p = target_json(got);
    p["clicks"] = round_clicks;
    out_.log.append(msg::selection, t, std::move(p));
    out_.log.append(msg::text_update, t, {{"text", text_.text()}});
    if (got.id != intended.id) {
      prefer_undo_ = !goal_.on_track(text_.text());
      register_error(word);
    } else {
      prefer_undo_ = false;
    }
  }

  SimOutcome finish(Timestamp now) {
    out_.final_text = text_.text();
    out_.word_failed = goal_.failed();
    out_.done = now;
    out_.log.append(msg::done, now, {{"text", out_.final_text}});
    return std::move(out_);
  }

 private:
  void register_error(std::size_t word) {
    ++out_.errors;
    if (word >= errors_.size()) errors_.resize(word + 1, 0);
    if (++errors_[word] > user_.max_error_attempts) {
      goal_.fail(word, text_.text());
      prefer_undo_ = false;
    }
  }

  PhraseGoal goal_;
  const UserModel& user_;
  TextState text_;
  bool prefer_undo_ = false;
  std::vector<int> errors_;
  std::uint64_t run_seed_;
  std::unordered_map<std::string, int> visits_;
  SimOutcome out_;
  std::size_t max_selections_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------- Nomon

struct NomonSimConfig {
  int w_c = 3;
  int w_max = 17;
  /// The engine's likelihood; its period is the rotation period.
  ClickTimeDistribution engine_dist = ClickTimeDistribution::uniform(rotation_period(14));
  NomonOptions options{};
  /// Feed each round's click offsets back into the engine's likelihood.
  bool learn = false;
};

/// Completions to display: per letter the best W_c candidates, then the best
/// W_max of those overall.
inline std::vector<std::vector<std::string>> nomon_display(const lm::Prediction& p, int w_c, int w_max) {
  std::vector<const lm::ScoredWord*> pool;
  std::vector<std::size_t> letter_of;
  for (std::size_t c = 0; c < 26; ++c)
    for (std::size_t i = 0; i < std::min<std::size_t>(static_cast<std::size_t>(w_c), p.by_letter[c].size()); ++i) {
      pool.push_back(&p.by_letter[c][i]);
      letter_of.push_back(c);
    }
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lm::better(*pool[a], *pool[b]); });
  if (order.size() > static_cast<std::size_t>(w_max)) order.resize(static_cast<std::size_t>(w_max));
  std::sort(order.begin(), order.end());  // back to per-letter rank order
  std::vector<std::vector<std::string>> out(26);
  for (std::size_t i : order) out[letter_of[i]].push_back(pool[i]->word);
  return out;
}

/// Aim point for a clock: the first noon whose click (noon + offset) is not
/// earlier than `now`.
inline Timestamp nomon_click_time(const NomonEngine& e, std::size_t i, Timestamp now, Duration offset) {
  return e.noon_time(i, now - offset) + offset;
}

struct RoundResult {
  Selection selection;
  Timestamp time = 0;
  int clicks = 0;
};

/// Clicks for clock `i` until the engine commits to something.
inline RoundResult nomon_round(NomonEngine& e, std::size_t i, const UserModel& user, Rng& rng, Timestamp now,
                               detail::Transcriber* tx = nullptr) {
  for (int clicks = 1; clicks <= 100000; ++clicks) {
    const Timestamp t = std::max(now, nomon_click_time(e, i, now, user.draw(rng)));
    if (tx) tx->click(t);
    now = t;
    if (auto sel = e.observe_click(t)) return {*sel, t, clicks};
  }
  throw Error("nomon_round: no selection after 100000 clicks");
}

inline SimOutcome run_nomon_phrase(std::string_view phrase, const lm::Predictor& predictor,
                                   const NomonSimConfig& cfg, const UserModel& user, Rng& rng,
                                   const PhraseInfo& info = {}) {
  if (phrase.empty()) return {};
  detail::Transcriber tx(phrase, user, info, rng);
  const Layout base = build_nomon_layout(cfg.w_c, cfg.w_max);
  NomonEngine engine(cfg.engine_dist, cfg.options);
  Timestamp now = 0;
  while (!tx.finished()) {
    const auto pred = predictor.predict(tx.text());
    const Layout layout = with_nomon_completions(base, nomon_display(*pred, cfg.w_c, cfg.w_max));
    auto targets = layout.live_targets();
    const auto scores = lm::nomon_scores(targets, *pred);
    engine.set_targets(targets, scores, now);
    const Target want = tx.intended(engine.targets());
    Rng noise = tx.round_rng();
    const auto r = nomon_round(engine, engine.index_of(want.id), user, noise, now, &tx);
    now = r.time;
    if (cfg.learn) {
      auto d = engine.distribution();
      for (double off : engine.click_feedback()) d = d.update(off);
      engine.set_distribution(std::move(d));
    }
    tx.select(want, r.selection.target, now, r.clicks);
  }
  return tx.finish(now);
}

// ---------------------------------------------------------------- RCS

struct RcsSimConfig {
  Ordering ordering = Ordering::frequency;
  Placement placement = Placement::top;
  int w_max = 7;
  Duration scan = scan_time(10);
  Duration delay = extra_delay(10);
};

/// Highlights between the current one (r) and the target (r_T) in a cyclic
/// scan of R positions: r_T - r if r <= r_T, else R - (r - r_T).
inline int scans_to_target(int r, int r_target, int count) {
  if (count <= 0 || r < 0 || r >= count || r_target < 0 || r_target >= count)
    throw Error("scans_to_target: position outside the scan");
  return r <= r_target ? r_target - r : count - (r - r_target);
}

/// Click time aimed at the middle of the highlight of scan position `target`
/// (offset by `offset`), taking the first pass whose click is not before `now`.
inline Timestamp rcs_click_time(const RcsEngine& e, int target, Timestamp now, Duration offset = 0) {
  const int count = e.current_count();
  if (target < 0 || target >= count) throw Error("rcs_click_time: unreachable target");
  Timestamp start = e.highlight_start();
  int idx = e.index();
  int cycles = e.cycles();
  for (int steps = 0; steps < 4 * count + 4; ++steps) {
    const Duration dwell = e.dwell(idx);
    const Timestamp aim = start + dwell / 2 + offset;
    if (idx == target && aim >= now) return aim;
    start += dwell;
    if (++idx >= count) {
      idx = 0;
      if (e.mode() == ScanMode::col_scan && ++cycles >= RcsEngine::kMaxColumnCycles) break;
    }
  }
  if (e.mode() == ScanMode::col_scan) return now;  // too late this row; click at once
  throw Error("rcs_click_time: target not reached");
}

/// Ideal-user delay from `now` to the middle of the target's highlight.
inline Duration rcs_t_star(const RcsEngine& e, int target, Timestamp now) { return rcs_click_time(e, target, now) - now; }

inline int scan_position(const RcsEngine& e, int row) {
  const auto& rows = e.scan_rows();
  const auto it = std::find(rows.begin(), rows.end(), row);
  if (it == rows.end()) throw Error("scan_position: row has no live cells");
  return static_cast<int>(it - rows.begin());
}

/// Lets a mistakenly opened column scan run out until row scanning resumes.
inline Timestamp rcs_wait_for_reversion(RcsEngine& e) {
  while (e.mode() == ScanMode::col_scan) e.advance(e.next_advance_at());
  return e.highlight_start();
}

inline SimOutcome run_rcs_phrase(std::string_view phrase, const lm::Predictor& predictor, const RcsSimConfig& cfg,
                                 const UserModel& user, Rng& rng, const PhraseInfo& info = {}) {
  if (phrase.empty()) return {};
  detail::Transcriber tx(phrase, user, info, rng);
  const Layout base = build_rcs_layout(cfg.ordering, cfg.placement, cfg.w_max);
  RcsEngine engine(base, cfg.scan, cfg.delay, 0);
  Timestamp now = 0;
  bool fresh = true;
  while (!tx.finished()) {
    if (fresh) {
      const auto pred = predictor.predict(tx.text());
      engine.set_layout(with_rcs_completions(base, pred->top_words(static_cast<std::size_t>(cfg.w_max))), now);
      fresh = false;
    }
    const Target want = tx.intended(engine.layout().live_targets());
    const Cell* cell = engine.layout().find(want.id);
    Rng noise = tx.round_rng();
    Timestamp t = rcs_click_time(engine, scan_position(engine, cell->row), now, user.draw(noise));
    tx.click(t);
    const RcsClick row = engine.observe_click(t);
    now = t;
    if (row.row != cell->row) {
      tx.miss();
      now = rcs_wait_for_reversion(engine);
      continue;
    }
    t = rcs_click_time(engine, cell->col, now, user.draw(noise));
    tx.click(t);
    const RcsClick hit = engine.observe_click(t);
    now = t;
    fresh = true;
    if (hit.kind == RcsClick::Kind::empty) {
      tx.miss();
      continue;
    }
    tx.select(want, *hit.target, now, 2);
  }
  return tx.finish(now);
}

/// Selects cell (row, col) in a picture layout; returns the selection time,
/// the target hit and the number of highlights (scans) the user sat through
/// before each click, counting the clicked one as half.
struct RcsPick {
  Timestamp time = 0;
  std::optional<Target> target;
  double scans = 0;
  int clicks = 0;
};

inline RcsPick rcs_pick(RcsEngine& e, int row, int col, const UserModel& user, Rng& rng, Timestamp now) {
  RcsPick out;
  const Duration s = e.scan();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Timestamp t = rcs_click_time(e, scan_position(e, row), now, user.draw(rng));
    out.scans += static_cast<double>(t - now) / static_cast<double>(s);
    ++out.clicks;
    const RcsClick r = e.observe_click(t);
    now = t;
    if (r.row != row) {
      const Timestamp back = rcs_wait_for_reversion(e);
      out.scans += static_cast<double>(back - now) / static_cast<double>(s);
      now = back;
      continue;
    }
    t = rcs_click_time(e, col, now, user.draw(rng));
    out.scans += static_cast<double>(t - now) / static_cast<double>(s);
    ++out.clicks;
    const RcsClick hit = e.observe_click(t);
    out.time = t;
    out.target = hit.target;
    return out;
  }
  throw Error("rcs_pick: target never reached");
}

}  // namespace nomon::sim

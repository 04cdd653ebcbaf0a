#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nomon/clickmodel.hpp"
#include "nomon/core.hpp"

namespace nomon {

/// Clock rotation period for speed setting l in [0, 20]: 4 e^(-l/10) seconds,
/// rounded to whole milliseconds.
inline Duration rotation_period(int l) {
  if (l < 0 || l > 20) throw Error("rotation_period: l must lie in [0, 20]");
  return static_cast<Duration>(std::llround(4000.0 * std::exp(-l / 10.0)));
}

namespace nomon_detail {

inline std::size_t reverse_bits(std::size_t v, int bits) {
  std::size_t r = 0;
  for (int b = 0; b < bits; ++b) r |= ((v >> b) & 1U) << (bits - 1 - b);
  return r;
}

}  // namespace nomon_detail

/// Slot visiting order for n equally spaced phases. For n = 2^b this is the
/// bit-reversal permutation; otherwise each bit-reversed fraction of the
/// circle is scaled onto the n slots and repeats are dropped, so early
/// entries stay spread around the whole circle.
inline std::vector<std::size_t> phase_slot_order(std::size_t n) {
  int bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  const std::size_t full = std::size_t{1} << bits;
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<bool> used(n, false);
  for (std::size_t v = 0; v < full; ++v) {
    const std::size_t s = nomon_detail::reverse_bits(v, bits) * n / full;
    if (!used[s]) {
      used[s] = true;
      order.push_back(s);
    }
  }
  return order;
}

/// Phases for targets listed in descending prior order: the k-th target gets
/// slot phase_slot_order(n)[k] * period / n.
inline std::vector<double> assign_phases(std::size_t n, double period) {
  if (n == 0) throw Error("assign_phases: need at least one target");
  const auto order = phase_slot_order(n);
  std::vector<double> phases(n);
  for (std::size_t k = 0; k < n; ++k) phases[k] = static_cast<double>(order[k]) * period / static_cast<double>(n);
  return phases;
}

enum class ThresholdRule { ratio, difference };

struct NomonOptions {
  /// Commit when p(1st) / p(2nd) >= threshold (ratio rule) or
  /// p(1st) - p(2nd) >= threshold (difference rule).
  double threshold = 20.0;
  ThresholdRule rule = ThresholdRule::ratio;
  /// Weight of the uniform component mixed into language-model priors.
  double prior_mix = 0.02;
  /// Fixed prior mass given to each corrective target before mixing.
  double corrective_floor = 0.01;
  /// Right after a phase change the slot-0 hand sits this fraction of a
  /// revolution before noon, giving the user time to find their clock.
  double phase_lead = 0.5;
};

struct Selection {
  std::size_t index = 0;
  Target target;
  Timestamp time = 0;
  int clicks = 0;
};

/// Bayesian clock-selection engine. Every click multiplies each clock's
/// posterior by the click-time likelihood of the click relative to that
/// clock's noon; a target is committed once the leader dominates the
/// runner-up by the configured threshold.
class NomonEngine {
 public:
  explicit NomonEngine(ClickTimeDistribution dist, NomonOptions options = {})
      : dist_(std::move(dist)), options_(options) {}

  double period() const { return dist_.period(); }
  const NomonOptions& options() const { return options_; }
  const ClickTimeDistribution& distribution() const { return dist_; }
  const std::vector<Target>& targets() const { return targets_; }
  std::size_t size() const { return targets_.size(); }
  Timestamp epoch() const { return epoch_; }
  Timestamp last_event() const { return last_event_; }
  int clicks_this_round() const { return static_cast<int>(round_.size()); }
  double phase(std::size_t i) const { return phases_.at(i); }
  const std::vector<double>& log_prior() const { return log_prior_; }
  const std::vector<double>& log_posterior() const { return log_post_; }

  /// Replaces the likelihood; used after feedback learning. Keeps the period.
  void set_distribution(ClickTimeDistribution dist) {
    if (std::abs(dist.period() - dist_.period()) > 1e-9) dist = dist.with_period(dist_.period());
    dist_ = std::move(dist);
  }

  /// Changes rotation speed between selections; the likelihood is re-binned.
  void set_period(double period, Timestamp now) {
    dist_ = dist_.with_period(period);
    reassign(log_post_, now);
  }

  void set_trace(std::ostream* trace) { trace_ = trace; }

  /// Installs a new target set with unnormalized language-model scores and
  /// starts a fresh decision at `now`.
  void set_targets(std::vector<Target> targets, std::span<const double> scores, Timestamp now) {
    if (targets.empty()) throw Error("NomonEngine: empty target set");
    std::swap(targets_, targets);
    try {
      set_priors_from_lm(scores, now);
    } catch (...) {
      std::swap(targets_, targets);  // leave the engine as it was
      throw;
    }
  }

  /// prior = (1 - eps) * lm + eps / n, where lm gives correctives their fixed
  /// floor and normalizes the remaining scores to the leftover mass.
  void set_priors_from_lm(std::span<const double> scores, Timestamp now) {
    const std::size_t n = targets_.size();
    if (scores.size() != n) throw Error("set_priors_from_lm: scores must cover every target");
    double corrective_mass = 0, other = 0;
    std::size_t n_other = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(scores[i] >= 0) || !std::isfinite(scores[i])) throw Error("set_priors_from_lm: scores must be finite and non-negative");
      if (is_corrective(targets_[i].kind)) {
        corrective_mass += options_.corrective_floor;
      } else {
        other += scores[i];
        ++n_other;
      }
    }
    if (corrective_mass >= 1.0) throw Error("set_priors_from_lm: corrective floors exceed total mass");
    const double eps = options_.prior_mix;
    log_prior_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double lm;
      if (is_corrective(targets_[i].kind)) {
        lm = options_.corrective_floor;
      } else if (other > 0) {
        lm = (1.0 - corrective_mass) * (scores[i] / other);
      } else {
        lm = (1.0 - corrective_mass) / static_cast<double>(n_other);
      }
      if (n_other == 0 && !is_corrective(targets_[i].kind)) lm = 0;
      log_prior_[i] = std::log((1.0 - eps) * lm + eps / static_cast<double>(n));
    }
    normalize(log_prior_);
    round_.clear();
    feedback_.reset();
    log_post_ = log_prior_;
    reassign(log_post_, now);
    emit_trace(now, "reset", argmax());
  }

  /// Start of the next noon crossing of clock i at or after `now`.
  double next_noon(std::size_t i, double now) const {
    const double t = period();
    const double ref = noon_reference(i);
    const double k = std::ceil((now - ref) / t - 1e-12);
    return ref + std::max(k, 0.0) * t;
  }

  Timestamp noon_time(std::size_t i, Timestamp now) const {
    return static_cast<Timestamp>(std::ceil(next_noon(i, static_cast<double>(now)) - 1e-9));
  }

  std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < targets_.size(); ++i)
      if (targets_[i].id == id) return i;
    throw Error("NomonEngine: unknown target '" + std::string(id) + "'");
  }

  double probability(std::size_t i) const { return std::exp(log_post_.at(i)); }

  std::vector<double> probabilities() const {
    std::vector<double> p(log_post_.size());
    std::transform(log_post_.begin(), log_post_.end(), p.begin(), [](double l) { return std::exp(l); });
    return p;
  }

  std::optional<Selection> observe_click(Timestamp t) {
    if (targets_.empty()) throw Error("NomonEngine: no targets installed");
    if (t < last_event_) throw Error("NomonEngine: click time precedes the previous event");
    last_event_ = t;
    feedback_.reset();
    const double tc = static_cast<double>(t);
    const double per = period();
    ClickRecord rec{t, std::vector<double>(targets_.size())};
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const double ref = noon_reference(i);
      rec.noon_refs[i] = ref;
      log_post_[i] += dist_.log_density(wrap_offset(tc, ref, per));
    }
    normalize(log_post_);
    round_.push_back(std::move(rec));

    const auto [first, second] = top_two();
    const double p1 = std::exp(log_post_[first]);
    const double p2 = second == first ? 0.0 : std::exp(log_post_[second]);
    emit_trace(t, "click", first);
    bool commit;
    if (second == first) {
      commit = true;
    } else if (options_.rule == ThresholdRule::ratio) {
      commit = log_post_[first] - log_post_[second] >= std::log(options_.threshold);
    } else {
      commit = p1 - p2 >= options_.threshold;
    }
    if (!commit) {
      reassign(log_post_, t);
      return std::nullopt;
    }
    Selection sel{first, targets_[first], t, static_cast<int>(round_.size())};
    feedback_ = Feedback{first, std::move(round_)};
    round_.clear();
    emit_trace(t, "select", first);
    log_post_ = log_prior_;
    reassign(log_post_, t);
    return sel;
  }

  /// Offsets of the just-finished round's clicks relative to the winner's
  /// noon at each click; feed these to ClickTimeDistribution::update.
  std::vector<double> click_feedback() const {
    if (!feedback_) throw Error("click_feedback: no selection pending");
    std::vector<double> out;
    for (const auto& rec : feedback_->clicks)
      out.push_back(wrap_offset(static_cast<double>(rec.time), rec.noon_refs[feedback_->winner], period()));
    return out;
  }

 private:
  struct ClickRecord {
    Timestamp time;
    std::vector<double> noon_refs;
  };
  struct Feedback {
    std::size_t winner;
    std::vector<ClickRecord> clicks;
  };

  double noon_reference(std::size_t i) const {
    return static_cast<double>(epoch_) + options_.phase_lead * period() + phases_[i];
  }

  static void normalize(std::vector<double>& logp) {
    const double m = *std::max_element(logp.begin(), logp.end());
    double s = 0;
    for (double l : logp) s += std::exp(l - m);
    const double lse = m + std::log(s);
    for (auto& l : logp) l -= lse;
  }

  std::pair<std::size_t, std::size_t> top_two() const {
    std::size_t first = 0, second = 0;
    bool have_second = false;
    for (std::size_t i = 1; i < log_post_.size(); ++i) {
      if (ranks_before(i, first)) {
        second = first;
        first = i;
        have_second = true;
      } else if (!have_second || ranks_before(i, second)) {
        second = i;
        have_second = true;
      }
    }
    if (!have_second) second = first;
    return {first, second};
  }

  bool ranks_before(std::size_t a, std::size_t b) const {
    if (log_post_[a] != log_post_[b]) return log_post_[a] > log_post_[b];
    return targets_[a].id < targets_[b].id;
  }

  std::size_t argmax() const { return top_two().first; }

  void reassign(const std::vector<double>& logp, Timestamp now) {
    const std::size_t n = targets_.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (logp[a] != logp[b]) return logp[a] > logp[b];
      return targets_[a].id < targets_[b].id;
    });
    const auto slots = assign_phases(n, period());
    phases_.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) phases_[order[k]] = slots[k];
    epoch_ = now;
    last_event_ = std::max(last_event_, now);
  }

  void emit_trace(Timestamp t, const char* ev, std::size_t leader) const {
    if (!trace_ || targets_.empty()) return;
    const auto [first, second] = top_two();
    const double p1 = std::exp(log_post_[first]);
    const double p2 = second == first ? 0.0 : std::exp(log_post_[second]);
    *trace_ << "t=" << t << " ev=" << ev << " target=" << targets_[leader].id << " post1=" << p1
            << " post2=" << p2 << '\n';
  }

  ClickTimeDistribution dist_;
  NomonOptions options_;
  std::vector<Target> targets_;
  std::vector<double> log_prior_;
  std::vector<double> log_post_;
  std::vector<double> phases_;
  Timestamp epoch_ = 0;
  Timestamp last_event_ = 0;
  std::vector<ClickRecord> round_;
  std::optional<Feedback> feedback_;
  std::ostream* trace_ = nullptr;
};

}  // namespace nomon

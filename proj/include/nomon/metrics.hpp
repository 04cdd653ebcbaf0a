#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nomon/core.hpp"
#include "nomon/log.hpp"

namespace nomon {

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double final_error_rate(std::string_view target, std::string_view output) {
  if (target.empty()) throw Error("final_error_rate: empty target");
  return static_cast<double>(levenshtein(target, output)) / static_cast<double>(target.size());
}

/// Words (5 characters, spaces included) per minute of final output.
inline double entry_rate(std::string_view final_text, Timestamp t_first_click, Timestamp t_done) {
  if (final_text.empty()) return 0.0;
  if (t_done <= t_first_click) throw Error("entry_rate: non-positive time interval");
  const double minutes = static_cast<double>(t_done - t_first_click) / 60000.0;
  return static_cast<double>(final_text.size()) / 5.0 / minutes;
}

/// Selections per minute (picture task).
inline double selection_rate(std::size_t selections, Timestamp t_first_click, Timestamp t_done) {
  if (selections == 0) return 0.0;
  if (t_done <= t_first_click) throw Error("selection_rate: non-positive time interval");
  return static_cast<double>(selections) / (static_cast<double>(t_done - t_first_click) / 60000.0);
}

inline double click_load(std::size_t clicks, std::string_view final_text) {
  if (final_text.empty()) throw Error("click_load: empty output");
  return static_cast<double>(clicks) / static_cast<double>(final_text.size());
}

inline double correction_rate(std::span<const TargetKind> selections) {
  if (selections.empty()) throw Error("correction_rate: no selections");
  const auto n = std::count_if(selections.begin(), selections.end(), is_corrective);
  return static_cast<double>(n) / static_cast<double>(selections.size());
}

struct ReactionStats {
  double srt_mean = 0;
  double dct_mean = 0;
  std::vector<Duration> srt;
  std::vector<Duration> dct;
  std::size_t trials = 0;   // flashes presented
  std::size_t dropped = 0;  // trials without exactly two clicks
};

/// A trial counts only if exactly two clicks fall between its flash and the
/// next one.
inline ReactionStats srt_dct(std::span<const Timestamp> flashes, std::span<const Timestamp> clicks) {
  ReactionStats out;
  out.trials = flashes.size();
  for (std::size_t i = 0; i < flashes.size(); ++i) {
    const Timestamp lo = flashes[i];
    const bool last = i + 1 == flashes.size();
    const Timestamp hi = last ? 0 : flashes[i + 1];
    std::vector<Timestamp> in;
    for (Timestamp c : clicks)
      if (c >= lo && (last || c < hi)) in.push_back(c);
    if (in.size() != 2) {
      ++out.dropped;
      continue;
    }
    std::sort(in.begin(), in.end());
    out.srt.push_back(in[0] - lo);
    out.dct.push_back(in[1] - in[0]);
  }
  if (out.srt.empty()) throw Error("srt_dct: no valid trials");
  auto mean = [](const std::vector<Duration>& v) {
    double s = 0;
    for (auto x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
  };
  out.srt_mean = mean(out.srt);
  out.dct_mean = mean(out.dct);
  return out;
}

/// Percentile bootstrap interval for the mean.
inline std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level = 0.95,
                                              int n_resamples = 10000, std::uint64_t seed = 0) {
  if (samples.size() < 2) throw Error("bootstrap_ci: need at least two samples");
  if (!(level > 0 && level < 1)) throw Error("bootstrap_ci: level must lie in (0, 1)");
  if (n_resamples < 1) throw Error("bootstrap_ci: n_resamples must be positive");
  Rng rng(seed);
  const auto n = samples.size();
  std::vector<double> means(static_cast<std::size_t>(n_resamples));
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += samples[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double alpha = (1.0 - level) / 2.0;
  return {quantile(alpha), quantile(1.0 - alpha)};
}

struct PhraseMetrics {
  std::string phrase_id;
  std::string iv_oov;
  std::string target;
  std::string final_text;
  double wpm = 0;
  double cpc = 0;
  double corr_rate = 0;
  double err_rate = 0;
  std::size_t clicks = 0;
  std::size_t selections = 0;
  Duration duration_ms = 0;
  bool picture = false;
};

/// Splits a log into prompt..done segments and scores each. Text phrases
/// report words/min and clicks/char; picture sequences report
/// selections/min and clicks/selection.
inline std::vector<PhraseMetrics> metrics_from_log(const SessionLog& log) {
  std::vector<PhraseMetrics> out;
  const auto& ms = log.messages();
  std::optional<PhraseMetrics> cur;
  Timestamp first_click = 0;
  bool clicked = false;
  std::vector<TargetKind> kinds;
  for (const auto& m : ms) {
    if (m.kind == msg::phrase_prompt) {
      cur = PhraseMetrics{};
      cur->phrase_id = m.payload.value("phrase_id", std::string{});
      cur->iv_oov = m.payload.value("iv_oov", std::string{});
      cur->target = m.payload.value("phrase", std::string{});
      cur->picture = m.payload.value("task", std::string{"text"}) == "picture";
      clicked = false;
      kinds.clear();
    } else if (!cur) {
      continue;
    } else if (m.kind == msg::click) {
      ++cur->clicks;
      if (!clicked) first_click = m.server_time;
      clicked = true;
    } else if (m.kind == msg::selection) {
      kinds.push_back(target_kind_from_string(m.payload.at("kind").get<std::string>()));
    } else if (m.kind == msg::done) {
      auto& p = *cur;
      p.final_text = m.payload.value("text", std::string{});
      p.selections = kinds.size();
      const Timestamp t0 = clicked ? first_click : m.server_time;
      p.duration_ms = m.server_time - t0;
      if (p.picture) {
        p.wpm = p.duration_ms > 0 ? selection_rate(p.selections, t0, m.server_time) : 0.0;
        p.cpc = p.selections ? static_cast<double>(p.clicks) / static_cast<double>(p.selections) : 0.0;
        std::size_t wrong = 0;
        const auto want = m.payload.value("targets", std::vector<std::string>{});
        const auto got = m.payload.value("selected", std::vector<std::string>{});
        for (std::size_t i = 0; i < std::max(want.size(), got.size()); ++i)
          if (i >= want.size() || i >= got.size() || want[i] != got[i]) ++wrong;
        p.err_rate = want.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(want.size());
      } else {
        p.wpm = p.duration_ms > 0 ? entry_rate(p.final_text, t0, m.server_time) : 0.0;
        p.cpc = p.final_text.empty() ? 0.0 : click_load(p.clicks, p.final_text);
        p.err_rate = p.target.empty() ? 0.0 : final_error_rate(p.target, p.final_text);
      }
      p.corr_rate = kinds.empty() ? 0.0 : correction_rate(kinds);
      out.push_back(std::move(p));
      cur.reset();
    }
  }
  return out;
}

inline std::string format_double(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline constexpr std::string_view kMetricsCsvHeader =
    "session,engine,phrase_id,iv_oov,wpm,cpc,corr_rate,err_rate,clicks,duration_ms";

inline void write_metrics_csv_row(std::ostream& os, std::string_view session, std::string_view engine,
                                  const PhraseMetrics& p) {
  os << session << ',' << engine << ',' << p.phrase_id << ',' << p.iv_oov << ',' << format_double(p.wpm) << ','
     << format_double(p.cpc) << ',' << format_double(p.corr_rate) << ',' << format_double(p.err_rate) << ','
     << p.clicks << ',' << p.duration_ms << '\n';
}

}  // namespace nomon

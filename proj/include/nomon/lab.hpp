#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "nomon/clickmodel.hpp"
#include "nomon/core.hpp"
#include "nomon/layout.hpp"
#include "nomon/lm/predictor.hpp"
#include "nomon/metrics.hpp"
#include "nomon/nomon_engine.hpp"
#include "nomon/rcs_engine.hpp"
#include "nomon/simuser.hpp"

namespace nomon::lab {

namespace fs = std::filesystem;

enum class EngineKind { nomon, rcs };

inline std::string_view to_string(EngineKind e) { return e == EngineKind::nomon ? "nomon" : "rcs"; }

inline EngineKind engine_from_string(std::string_view s) {
  if (s == "nomon") return EngineKind::nomon;
  if (s == "rcs") return EngineKind::rcs;
  throw Error("unknown engine '" + std::string(s) + "' (expected nomon or rcs)");
}

// ---------------------------------------------------------------- phrases

struct Phrase {
  std::string id;
  std::string text;
  bool iv = true;

  std::string_view tag() const { return iv ? "IV" : "OOV"; }
};

/// Parses `IV<TAB>text` / `OOV<TAB>text` lines; blank lines and `#` comments
/// are skipped. Phrase ids are derived from line numbers.
inline std::vector<Phrase> parse_phrases(std::istream& in, std::string_view source = "phrases") {
  std::vector<Phrase> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string tag = tab == std::string::npos ? std::string{} : line.substr(0, tab);
    if (tag != "IV" && tag != "OOV")
      throw Error(std::string(source) + ":" + std::to_string(lineno) + ": expected 'IV<TAB>phrase' or 'OOV<TAB>phrase'");
    Phrase p;
    char id[32];
    std::snprintf(id, sizeof id, "p%03d", lineno);
    p.id = id;
    p.text = line.substr(tab + 1);
    p.iv = tag == "IV";
    if (p.text.empty()) throw Error(std::string(source) + ":" + std::to_string(lineno) + ": empty phrase");
    for (char c : p.text)
      if (c != ' ' && lm::symbol_index(c) < 0)
        throw Error(std::string(source) + ":" + std::to_string(lineno) + ": character outside the alphabet");
    out.push_back(std::move(p));
  }
  return out;
}

inline std::size_t count_oov_words(std::string_view text, const lm::Vocabulary& vocab) {
  std::size_t n = 0;
  for (const auto& w : sim::split_words(text))
    if (!vocab.contains(w)) ++n;
  return n;
}

/// IV phrases must use vocabulary words only; OOV phrases exactly one word
/// outside it.
inline void verify_tags(const std::vector<Phrase>& phrases, const lm::Vocabulary& vocab) {
  for (const auto& p : phrases) {
    const auto n = count_oov_words(p.text, vocab);
    if (p.iv && n != 0)
      throw Error("phrase " + p.id + " is tagged IV but has " + std::to_string(n) + " out-of-vocabulary word(s): " +
                  p.text);
    if (!p.iv && n != 1)
      throw Error("phrase " + p.id + " is tagged OOV but has " + std::to_string(n) +
                  " out-of-vocabulary words (need exactly one): " + p.text);
  }
}

struct MixRatio {
  int iv = 2;
  int oov = 1;
};

inline MixRatio parse_ratio(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw Error("ratio must look like IV:OOV, e.g. 2:1");
  MixRatio r;
  try {
    r.iv = std::stoi(std::string(s.substr(0, colon)));
    r.oov = std::stoi(std::string(s.substr(colon + 1)));
  } catch (const std::exception&) {
    throw Error("ratio must look like IV:OOV, e.g. 2:1");
  }
  if (r.iv < 0 || r.oov < 0 || r.iv + r.oov == 0) throw Error("ratio parts must be non-negative and not both zero");
  return r;
}

/// Draws `count` phrases without replacement, split by the IV:OOV ratio
/// (IV share rounded to nearest), and shuffles the result under `seed`.
inline std::vector<Phrase> sample_phrases(const std::vector<Phrase>& pool, MixRatio ratio, std::size_t count,
                                          std::uint64_t seed) {
  std::vector<Phrase> iv, oov;
  for (const auto& p : pool) (p.iv ? iv : oov).push_back(p);
  const double share = static_cast<double>(ratio.iv) / static_cast<double>(ratio.iv + ratio.oov);
  const auto n_iv = static_cast<std::size_t>(std::llround(share * static_cast<double>(count)));
  const std::size_t n_oov = count - n_iv;
  if (n_iv > iv.size() || n_oov > oov.size())
    throw Error("not enough phrases: need " + std::to_string(n_iv) + " IV + " + std::to_string(n_oov) + " OOV, have " +
                std::to_string(iv.size()) + " + " + std::to_string(oov.size()));
  Rng rng(seed);
  auto draw = [&](std::vector<Phrase>& from, std::size_t k, std::vector<Phrase>& into) {
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(from.size() - i);
      std::swap(from[i], from[j]);
      into.push_back(from[i]);
    }
  };
  std::vector<Phrase> out;
  draw(iv, n_iv, out);
  draw(oov, n_oov, out);
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);
  return out;
}

inline std::vector<Phrase> load_phrases(const fs::path& path, const lm::Vocabulary& vocab, MixRatio ratio,
                                        std::size_t count, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open phrase file " + path.string());
  auto all = parse_phrases(in, path.string());
  verify_tags(all, vocab);
  return sample_phrases(all, ratio, count, seed);
}

// ---------------------------------------------------------------- sweep spec

/// "1,2,3", "1..78" or mixtures such as "1..5,8".
inline std::vector<int> parse_int_list(std::string_view s) {
  std::vector<int> out;
  std::stringstream ss{std::string(s)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    try {
      const auto dots = item.find("..");
      if (dots == std::string::npos) {
        std::size_t used = 0;
        out.push_back(std::stoi(item, &used));
        if (used != item.size()) throw Error("");
      } else {
        const int lo = std::stoi(item.substr(0, dots)), hi = std::stoi(item.substr(dots + 2));
        if (hi < lo) throw Error("");
        for (int v = lo; v <= hi; ++v) out.push_back(v);
      }
    } catch (const std::exception&) {
      throw Error("bad integer list item '" + item + "'");
    }
  }
  if (out.empty()) throw Error("empty integer list");
  return out;
}

inline std::vector<std::string> parse_word_list(std::string_view s) {
  std::vector<std::string> out;
  std::stringstream ss{std::string(s)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw Error("empty list");
  return out;
}

struct SweepSpec {
  EngineKind engine = EngineKind::nomon;
  // Nomon grid
  std::vector<int> w_c{3};
  std::vector<int> speed_l{14};
  // RCS grid
  std::vector<Ordering> orderings{Ordering::frequency};
  std::vector<Placement> placements{Placement::top};
  std::vector<int> speed_j{10};
  std::vector<int> speed_k{10};
  // shared
  std::vector<int> w_max{17};
  fs::path phrases;
  std::size_t phrase_count = 150;
  MixRatio ratio{};
  int repetitions = 1;
  std::uint64_t seed = 1;
  /// "expert" or "ideal".
  std::string user = "expert";
  /// Nomon engine likelihood: "expert", "uniform", "ideal" or a distribution file.
  std::string click_dist = "expert";
  fs::path corpus;
  fs::path lm_prefix;
  int lm_order = 6;
  int bootstrap_resamples = 2000;
  int jobs = 1;

  void validate() const {
    if (repetitions < 1) throw Error("sweep: repetitions must be at least 1");
    if (w_max.empty()) throw Error("sweep: empty W_max grid");
    if (engine == EngineKind::nomon && (w_c.empty() || speed_l.empty())) throw Error("sweep: empty Nomon grid");
    if (engine == EngineKind::rcs &&
        (orderings.empty() || placements.empty() || speed_j.empty() || speed_k.empty()))
      throw Error("sweep: empty RCS grid");
    if (phrase_count == 0) throw Error("sweep: phrase_count must be positive");
    if (user != "expert" && user != "ideal") throw Error("sweep: user must be expert or ideal");
    if (bootstrap_resamples < 1) throw Error("sweep: bootstrap must be positive");
    if (jobs < 1) throw Error("sweep: jobs must be at least 1");
  }
};

/// Reads `key = value` lines (`#` starts a comment). Relative paths resolve
/// against `base_dir`.
inline SweepSpec parse_sweep_spec(std::istream& in, const fs::path& base_dir = {}, std::string_view source = "spec") {
  SweepSpec s;
  std::string line;
  int lineno = 0;
  auto resolve = [&](const std::string& v) {
    fs::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto where = std::string(source) + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + "expected key = value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    try {
      if (key == "engine") s.engine = engine_from_string(value);
      else if (key == "w_c") s.w_c = parse_int_list(value);
      else if (key == "w_max") s.w_max = parse_int_list(value);
      else if (key == "l") s.speed_l = parse_int_list(value);
      else if (key == "j") s.speed_j = parse_int_list(value);
      else if (key == "k") s.speed_k = parse_int_list(value);
      else if (key == "ordering") {
        s.orderings.clear();
        for (const auto& w : parse_word_list(value)) s.orderings.push_back(ordering_from_string(w));
      } else if (key == "placement") {
        s.placements.clear();
        for (const auto& w : parse_word_list(value)) s.placements.push_back(placement_from_string(w));
      } else if (key == "phrases") s.phrases = resolve(value);
      else if (key == "phrase_count") s.phrase_count = static_cast<std::size_t>(std::stoul(value));
      else if (key == "iv_oov_ratio") s.ratio = parse_ratio(value);
      else if (key == "repetitions") s.repetitions = std::stoi(value);
      else if (key == "seed") s.seed = std::stoull(value);
      else if (key == "user") s.user = value;
      else if (key == "click_dist")
        s.click_dist = value == "expert" || value == "uniform" || value == "ideal" ? value : resolve(value).string();
      else if (key == "corpus") s.corpus = resolve(value);
      else if (key == "lm") s.lm_prefix = resolve(value);
      else if (key == "lm_order") s.lm_order = std::stoi(value);
      else if (key == "bootstrap") s.bootstrap_resamples = std::stoi(value);
      else if (key == "jobs") s.jobs = std::stoi(value);
      else throw Error("unknown key '" + key + "'");
    } catch (const Error& e) {
      throw Error(where + e.what());
    } catch (const std::exception&) {
      throw Error(where + "bad value for '" + key + "'");
    }
  }
  s.validate();
  return s;
}

inline SweepSpec load_sweep_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sweep spec " + path.string());
  return parse_sweep_spec(in, path.parent_path(), path.string());
}

// ---------------------------------------------------------------- runs

/// One grid point. Fields not used by the engine stay at their defaults.
struct CellParams {
  EngineKind engine = EngineKind::nomon;
  int w_c = 0;
  int w_max = 0;
  Ordering ordering = Ordering::alphabetical;
  Placement placement = Placement::top;
  int l = 0;
  int j = 0;
  int k = 0;

  bool operator==(const CellParams&) const = default;
};

inline std::vector<CellParams> expand_grid(const SweepSpec& s) {
  std::vector<CellParams> out;
  if (s.engine == EngineKind::nomon) {
    for (int l : s.speed_l)
      for (int wc : s.w_c)
        for (int wm : s.w_max) {
          if (wc < 1 || wc > 3) throw Error("sweep: W_c must lie in [1, 3]");
          if (wm < 0) throw Error("sweep: W_max must be non-negative");
          if (wm > 26 * wc) continue;  // more completions than W_c allows
          out.push_back({EngineKind::nomon, wc, wm, Ordering::alphabetical, Placement::inline_, l, 0, 0});
        }
  } else {
    for (int j : s.speed_j)
      for (int k : s.speed_k)
        for (auto pl : s.placements)
          for (auto o : s.orderings)
            for (int wm : s.w_max) {
              if (wm < 0 || wm > kRcsMaxCompletions) throw Error("sweep: RCS W_max must lie in [0, 18]");
              out.push_back({EngineKind::rcs, 0, wm, o, pl, 0, j, k});
            }
  }
  if (out.empty()) throw Error("sweep: grid has no valid cells");
  return out;
}

/// Run seed: depends on the phrase and repetition only, so every cell sees
/// the same click-noise streams.
inline std::uint64_t run_seed(std::uint64_t seed, std::size_t phrase_index, int repetition) {
  return derive_seed(seed, phrase_index, static_cast<std::uint64_t>(repetition));
}

struct UserSetup {
  std::string user = "expert";
  std::string click_dist = "expert";
};

inline ClickTimeDistribution nomon_engine_distribution(const std::string& source, double period) {
  if (source == "expert") return sim::expert_distribution(period);
  if (source == "uniform") return ClickTimeDistribution::uniform(period);
  if (source == "ideal") return point_mass_distribution(period);
  std::ifstream in(source);
  if (!in) throw Error("cannot open click distribution " + source);
  return read_distribution(in).with_period(period);
}

/// Simulates one phrase in one cell.
inline sim::SimOutcome run_phrase(const CellParams& cell, const Phrase& phrase, const lm::Predictor& predictor,
                                  const UserSetup& setup, std::uint64_t seed) {
  Rng rng(seed);
  const sim::PhraseInfo info{phrase.id, std::string(phrase.tag())};
  const bool ideal = setup.user == "ideal";
  if (cell.engine == EngineKind::nomon) {
    const double T = rotation_period(cell.l);
    sim::NomonSimConfig cfg;
    cfg.w_c = cell.w_c;
    cfg.w_max = cell.w_max;
    cfg.engine_dist = nomon_engine_distribution(ideal && setup.click_dist == "expert" ? "ideal" : setup.click_dist, T);
    sim::UserModel user;
    if (!ideal) user.noise = sim::expert_distribution(T);
    return sim::run_nomon_phrase(phrase.text, predictor, cfg, user, rng, info);
  }
  sim::RcsSimConfig cfg;
  cfg.ordering = cell.ordering;
  cfg.placement = cell.placement;
  cfg.w_max = cell.w_max;
  cfg.scan = scan_time(cell.j);
  cfg.delay = extra_delay(cell.k);
  sim::UserModel user;
  if (!ideal) user.noise = sim::expert_scan_noise();
  return sim::run_rcs_phrase(phrase.text, predictor, cfg, user, rng, info);
}

struct Interval {
  double lo = 0;
  double hi = 0;
};

struct CellResult {
  CellParams params;
  std::size_t runs = 0;
  double wpm = 0;
  Interval wpm_ci;
  double cpc = 0;
  Interval cpc_ci;
  double err_rate = 0;
  double corr_rate = 0;
  /// Runs that threw; they are excluded from the means.
  std::size_t failed_runs = 0;
  /// Runs in which the simulated user abandoned at least one word.
  std::size_t abandoned_runs = 0;
  std::vector<std::string> failures;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<Phrase> phrases;
  std::vector<CellResult> cells;
};

struct RunRecord {
  PhraseMetrics metrics;
  bool failed = false;
  bool abandoned = false;
  std::string error;
};

/// Percentile bootstrap over per-phrase means (repetitions averaged first,
/// since they share a phrase). Degenerate samples give a zero-width interval.
inline Interval phrase_level_ci(const std::vector<double>& per_phrase, int resamples, std::uint64_t seed) {
  if (per_phrase.empty()) return {};
  double mean = 0;
  for (double v : per_phrase) mean += v;
  mean /= static_cast<double>(per_phrase.size());
  if (per_phrase.size() < 2) return {mean, mean};
  auto [lo, hi] = bootstrap_ci(per_phrase, 0.95, resamples, seed);
  return {std::min(lo, mean), std::max(hi, mean)};
}

/// Runs every cell over all phrases x repetitions. Work is spread over
/// `jobs` threads, each with its own predictor cache; results are reduced in
/// a fixed order, so output does not depend on the thread count.
inline SweepResult run_sweep(const SweepSpec& spec, const lm::LanguageModel& model, std::vector<Phrase> phrases) {
  spec.validate();
  if (phrases.empty()) throw Error("sweep: no phrases");
  SweepResult result;
  result.spec = spec;
  result.phrases = std::move(phrases);
  const auto cells = expand_grid(spec);
  const std::size_t P = result.phrases.size();
  const auto R = static_cast<std::size_t>(spec.repetitions);
  const std::size_t per_cell = P * R;
  std::vector<RunRecord> records(cells.size() * per_cell);
  const UserSetup setup{spec.user, spec.click_dist};

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    lm::Predictor predictor(model);
    for (std::size_t w = next++; w < records.size(); w = next++) {
      const std::size_t c = w / per_cell, rest = w % per_cell, p = rest / R;
      const int rep = static_cast<int>(rest % R);
      auto& rec = records[w];
      try {
        const auto out = run_phrase(cells[c], result.phrases[p], predictor, setup, run_seed(spec.seed, p, rep));
        const auto m = metrics_from_log(out.log);
        if (m.size() != 1) throw Error("simulation log has no completed phrase");
        rec.metrics = m.front();
        rec.abandoned = std::find(out.word_failed.begin(), out.word_failed.end(), true) != out.word_failed.end();
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = result.phrases[p].id + ": " + e.what();
      }
    }
  };
  const int jobs = std::max(1, spec.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellResult cr;
    cr.params = cells[c];
    std::vector<double> wpm_p, cpc_p;
    double wpm = 0, cpc = 0, err = 0, corr = 0;
    for (std::size_t p = 0; p < P; ++p) {
      double pw = 0, pc = 0;
      std::size_t ok = 0;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& rec = records[c * per_cell + p * R + r];
        if (rec.failed) {
          ++cr.failed_runs;
          cr.failures.push_back(rec.error);
          continue;
        }
        if (rec.abandoned) ++cr.abandoned_runs;
        ++ok;
        pw += rec.metrics.wpm;
        pc += rec.metrics.cpc;
        wpm += rec.metrics.wpm;
        cpc += rec.metrics.cpc;
        err += rec.metrics.err_rate;
        corr += rec.metrics.corr_rate;
      }
      if (ok) {
        wpm_p.push_back(pw / static_cast<double>(ok));
        cpc_p.push_back(pc / static_cast<double>(ok));
      }
      cr.runs += ok;
    }
    if (cr.runs) {
      const auto n = static_cast<double>(cr.runs);
      cr.wpm = wpm / n;
      cr.cpc = cpc / n;
      cr.err_rate = err / n;
      cr.corr_rate = corr / n;
      cr.wpm_ci = phrase_level_ci(wpm_p, spec.bootstrap_resamples, derive_seed(spec.seed, c, 1));
      cr.cpc_ci = phrase_level_ci(cpc_p, spec.bootstrap_resamples, derive_seed(spec.seed, c, 2));
      cr.wpm_ci = {std::min(cr.wpm_ci.lo, cr.wpm), std::max(cr.wpm_ci.hi, cr.wpm)};
      cr.cpc_ci = {std::min(cr.cpc_ci.lo, cr.cpc), std::max(cr.cpc_ci.hi, cr.cpc)};
    }
    result.cells.push_back(std::move(cr));
  }
  return result;
}

/// Loads the language model and phrase set a sweep spec names, then runs it.
inline lm::LanguageModel load_model(const SweepSpec& spec) {
  if (!spec.lm_prefix.empty()) return lm::LanguageModel::load(spec.lm_prefix);
  if (spec.corpus.empty()) throw Error("sweep: set 'corpus' or 'lm'");
  return lm::LanguageModel::train(lm::read_lines(spec.corpus.string()), spec.lm_order);
}

inline SweepResult run_sweep(const SweepSpec& spec) {
  const auto model = load_model(spec);
  if (spec.phrases.empty()) throw Error("sweep: set 'phrases'");
  auto phrases = load_phrases(spec.phrases, model.vocab, spec.ratio, spec.phrase_count, spec.seed);
  return run_sweep(spec, model, std::move(phrases));
}

// ---------------------------------------------------------------- scaling

struct Fit {
  double a = 0;
  double b = 0;
  double rss = 0;
};

/// Least squares y = a + b x.
inline Fit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fit_line: need at least two points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0) throw Error("fit_line: degenerate abscissae");
  Fit f;
  f.b = (n * sxy - sx * sy) / den;
  f.a = (sy - f.b * sx) / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.a + f.b * x[i]);
    f.rss += r * r;
  }
  return f;
}

struct ScalingPoint {
  int n = 0;
  /// Nomon: mean clicks per selection. RCS: mean scans per selection.
  double mean = 0;
  double errors = 0;  // fraction of wrong selections
  std::size_t trials = 0;
};

struct ScalingResult {
  EngineKind engine = EngineKind::nomon;
  std::vector<ScalingPoint> points;
  Fit log_fit;     // a + b ln n
  Fit linear_fit;  // a + b n
  Fit sqrt_fit;    // a + b sqrt n
};

inline void fit_scaling(ScalingResult& r) {
  std::vector<double> ln, lin, sq, y;
  for (const auto& p : r.points) {
    ln.push_back(std::log(static_cast<double>(p.n)));
    lin.push_back(static_cast<double>(p.n));
    sq.push_back(std::sqrt(static_cast<double>(p.n)));
    y.push_back(p.mean);
  }
  if (r.points.size() >= 2) {
    r.log_fit = fit_line(ln, y);
    r.linear_fit = fit_line(lin, y);
    r.sqrt_fit = fit_line(sq, y);
  }
}

/// Nomon on a uniform-prior picture layout: expert user at speed `l`,
/// `trials` selections of uniformly drawn targets per n.
inline ScalingPoint nomon_scaling_point(int n, int trials, std::uint64_t seed, int l = 14) {
  const double T = rotation_period(l);
  const Layout layout = build_picture_layout(n);
  auto targets = layout.live_targets();
  const std::vector<double> scores(targets.size(), 1.0);
  NomonEngine engine(sim::expert_distribution(T));
  const sim::UserModel user{sim::expert_distribution(T)};
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n), 0));
  ScalingPoint pt{n, 0, 0, static_cast<std::size_t>(trials)};
  if (n == 1) {
    pt.mean = 0;  // a lone option needs no decision
    return pt;
  }
  Timestamp now = 0;
  double clicks = 0, wrong = 0;
  for (int t = 0; t < trials; ++t) {
    engine.set_targets(targets, scores, now);
    const std::size_t want = rng.below(targets.size());
    const auto r = sim::nomon_round(engine, want, user, rng, now);
    now = r.time;
    clicks += r.clicks;
    if (r.selection.target.id != targets[want].id) ++wrong;
  }
  pt.mean = clicks / trials;
  pt.errors = wrong / trials;
  return pt;
}

/// RCS ideal user on an n-target picture grid, enumerating every target
/// from a fresh scan: scans counted to the middle of each clicked highlight.
inline ScalingPoint rcs_scaling_point(int n, int j = 10) {
  const Layout layout = build_picture_layout(n);
  const sim::UserModel ideal;
  Rng unused(0);
  ScalingPoint pt{n, 0, 0, 0};
  double total = 0;
  for (const auto& cell : layout.cells) {
    RcsEngine engine(layout, scan_time(j), extra_delay(10), 0);
    const auto pick = sim::rcs_pick(engine, cell.row, cell.col, ideal, unused, 0);
    total += pick.scans;
    if (!pick.target || pick.target->id != cell.target.id) pt.errors += 1;
    ++pt.trials;
  }
  pt.mean = total / static_cast<double>(pt.trials);
  pt.errors /= static_cast<double>(pt.trials);
  return pt;
}

inline ScalingResult run_scaling_study(const std::vector<int>& n_values, EngineKind engine, int trials = 2000,
                                       std::uint64_t seed = 1) {
  if (n_values.empty()) throw Error("scaling: no n values");
  ScalingResult r;
  r.engine = engine;
  for (int n : n_values) {
    if (n < 1) throw Error("scaling: n must be positive");
    r.points.push_back(engine == EngineKind::nomon ? nomon_scaling_point(n, trials, seed) : rcs_scaling_point(n));
  }
  fit_scaling(r);
  return r;
}

// ---------------------------------------------------------------- emit

inline std::string cell_label(const CellParams& c) {
  if (c.engine == EngineKind::nomon)
    return "w_c=" + std::to_string(c.w_c) + ",w_max=" + std::to_string(c.w_max) + ",l=" + std::to_string(c.l);
  return std::string(to_string(c.placement)) + "," + std::string(nomon::to_string(c.ordering)) +
         ",w_max=" + std::to_string(c.w_max) + ",j=" + std::to_string(c.j) + ",k=" + std::to_string(c.k);
}

inline constexpr std::string_view kSweepCsvHeader =
    "engine,w_c,w_max,ordering,placement,l,j,k,metric,mean,ci_lo,ci_hi,runs,failed_runs,abandoned_runs";

/// One row per (cell, metric).
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  if (r.cells.empty()) throw Error("emit: empty sweep result");
  os << kSweepCsvHeader << '\n';
  for (const auto& c : r.cells) {
    const auto& p = c.params;
    const bool rcs = p.engine == EngineKind::rcs;
    const std::string prefix = std::string(to_string(p.engine)) + ',' + (rcs ? "" : std::to_string(p.w_c)) + ',' +
                               std::to_string(p.w_max) + ',' + (rcs ? std::string(nomon::to_string(p.ordering)) : "") +
                               ',' + (rcs ? std::string(nomon::to_string(p.placement)) : "") + ',' +
                               (rcs ? "" : std::to_string(p.l)) + ',' + (rcs ? std::to_string(p.j) : "") + ',' +
                               (rcs ? std::to_string(p.k) : "");
    auto row = [&](std::string_view metric, double mean, std::optional<Interval> ci) {
      os << prefix << ',' << metric << ',' << format_double(mean) << ',' << (ci ? format_double(ci->lo) : "") << ','
         << (ci ? format_double(ci->hi) : "") << ',' << c.runs << ',' << c.failed_runs << ',' << c.abandoned_runs
         << '\n';
    };
    row("wpm", c.wpm, c.wpm_ci);
    row("cpc", c.cpc, c.cpc_ci);
    row("err_rate", c.err_rate, std::nullopt);
    row("corr_rate", c.corr_rate, std::nullopt);
  }
}

/// Gnuplot-style series: one block per curve (W_c for Nomon, placement x
/// ordering for RCS), columns `w_max wpm ci_lo ci_hi cpc`.
inline void write_sweep_dat(std::ostream& os, const SweepResult& r) {
  if (r.cells.empty()) throw Error("emit: empty sweep result");
  std::map<std::string, std::vector<const CellResult*>> curves;
  for (const auto& c : r.cells) {
    const auto& p = c.params;
    std::string key = p.engine == EngineKind::nomon
                          ? "w_c=" + std::to_string(p.w_c) + " l=" + std::to_string(p.l)
                          : std::string(to_string(p.placement)) + "/" + std::string(nomon::to_string(p.ordering)) +
                                " j=" + std::to_string(p.j) + " k=" + std::to_string(p.k);
    curves[key].push_back(&c);
  }
  bool first = true;
  for (const auto& [key, cs] : curves) {
    if (!first) os << "\n\n";
    first = false;
    os << "# " << key << "\n# w_max wpm ci_lo ci_hi cpc\n";
    for (const auto* c : cs)
      os << c->params.w_max << ' ' << format_double(c->wpm) << ' ' << format_double(c->wpm_ci.lo) << ' '
         << format_double(c->wpm_ci.hi) << ' ' << format_double(c->cpc) << '\n';
  }
}

inline constexpr std::string_view kScalingCsvHeader = "engine,n,mean,errors,trials";

inline void write_scaling_csv(std::ostream& os, const ScalingResult& r) {
  if (r.points.empty()) throw Error("emit: empty scaling result");
  os << kScalingCsvHeader << '\n';
  for (const auto& p : r.points)
    os << to_string(r.engine) << ',' << p.n << ',' << format_double(p.mean) << ',' << format_double(p.errors) << ','
       << p.trials << '\n';
  auto fit = [&](std::string_view name, const Fit& f) {
    os << "# fit " << name << ": a=" << format_double(f.a) << " b=" << format_double(f.b)
       << " rss=" << format_double(f.rss, 9) << '\n';
  };
  fit("log", r.log_fit);
  fit("linear", r.linear_fit);
  fit("sqrt", r.sqrt_fit);
}

inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ostringstream buf;
  body(buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << buf.str();
  if (!out) throw Error("write failed for " + path.string());
}

/// Writes sweep.csv (and sweep.dat when `with_dat`) into `dir`.
inline std::vector<fs::path> emit(const SweepResult& r, const fs::path& dir, bool with_dat = true) {
  if (r.cells.empty()) throw Error("emit: empty sweep result");
  std::vector<fs::path> written{dir / "sweep.csv"};
  write_file(written[0], [&](std::ostream& os) { write_sweep_csv(os, r); });
  if (with_dat) {
    written.push_back(dir / "sweep.dat");
    write_file(written[1], [&](std::ostream& os) { write_sweep_dat(os, r); });
  }
  return written;
}

}  // namespace nomon::lab

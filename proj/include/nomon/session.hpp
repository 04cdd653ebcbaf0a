#pragma once

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nomon/clickmodel.hpp"
#include "nomon/core.hpp"
#include "nomon/lab.hpp"
#include "nomon/layout.hpp"
#include "nomon/lm/predictor.hpp"
#include "nomon/log.hpp"
#include "nomon/metrics.hpp"
#include "nomon/nomon_engine.hpp"
#include "nomon/rcs_engine.hpp"
#include "nomon/simuser.hpp"
#include "nomon/text_state.hpp"

namespace nomon::session {

namespace fs = std::filesystem;
using lab::EngineKind;

enum class Task { text, picture, reaction, calibration };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::text: return "text";
    case Task::picture: return "picture";
    case Task::reaction: return "reaction";
    case Task::calibration: return "calibration";
  }
  return "text";
}

inline Task task_from_string(std::string_view s) {
  if (s == "text") return Task::text;
  if (s == "picture") return Task::picture;
  if (s == "reaction") return Task::reaction;
  if (s == "calibration") return Task::calibration;
  throw Error("unknown task '" + std::string(s) + "'");
}

/// Sixty picture targets.
inline const std::vector<std::string>& emoji_labels() {
  static const std::vector<std::string> labels = {
      "😀", "😂", "😍", "😎", "😭", "😡", "👍", "👎", "👏", "🙏", "💪", "👀", "❤️", "💔", "⭐", "🔥", "🌈", "☀️", "🌙", "⚡",
      "❄️", "🌊", "🌲", "🌻", "🍎", "🍌", "🍕", "🍔", "🍰", "☕", "🍺", "🎂", "🎁", "🎈", "🎉", "🎵", "⚽", "🏀", "🚗", "🚲",
      "✈️", "🚀", "🏠", "⏰", "📱", "💻", "📷", "📚", "✏️", "🔑", "💡", "💰", "🐶", "🐱", "🐭", "🐰", "🐻", "🐼", "🐸", "🐢"};
  return labels;
}

inline constexpr int kPictureTargets = 60;

struct SessionConfig {
  EngineKind engine = EngineKind::nomon;
  Task task = Task::text;
  /// Speed indices; new users start at the slowest settings.
  int l = 0;
  int j = 0;
  int k = 0;
  std::string user_id = "anonymous";
  std::uint64_t seed = 1;
  // Nomon text layout
  int w_c = 3;
  int w_max = 17;
  // RCS text layout
  Ordering ordering = Ordering::frequency;
  Placement placement = Placement::top;
  int rcs_w_max = 7;
  std::vector<lab::Phrase> phrases;
  int sequences = 1;
  int sequence_length = 5;
  int calibration_prompts = 20;
  int flashes = 30;
  Duration flash_min = 2000;
  Duration flash_max = 6000;
  /// Feed Nomon click offsets back into the user's click-time distribution.
  bool learn = true;
  /// Per-user click-time distributions live here as <user_id>.dist; empty
  /// disables persistence.
  fs::path profile_dir;

  void validate() const {
    if (engine == EngineKind::rcs && (task == Task::calibration))
      throw Error("session: calibration applies to Nomon only");
    rotation_period(l);
    scan_time(j);
    extra_delay(k);
    if (task == Task::text) {
      if (phrases.empty()) throw Error("session: text task needs at least one phrase");
      if (engine == EngineKind::nomon) build_nomon_layout(w_c, w_max);
      else build_rcs_layout(ordering, placement, rcs_w_max);
    }
    if (task == Task::picture && (sequences < 1 || sequence_length < 1 || sequence_length > kPictureTargets))
      throw Error("session: bad picture sequence settings");
    if (task == Task::calibration && calibration_prompts < 1) throw Error("session: calibration needs prompts");
    if (task == Task::reaction && (flashes < 1 || flash_min < 0 || flash_max < flash_min))
      throw Error("session: bad flash settings");
    if (user_id.empty() || user_id.find_first_of("/\\.") != std::string::npos)
      throw Error("session: user id must be non-empty and free of path characters");
  }
};

inline json config_json(const SessionConfig& c) {
  json phrases = json::array();
  for (const auto& p : c.phrases) phrases.push_back({{"id", p.id}, {"text", p.text}, {"iv_oov", p.tag()}});
  return {{"engine", lab::to_string(c.engine)},
          {"task", to_string(c.task)},
          {"l", c.l},
          {"j", c.j},
          {"k", c.k},
          {"user_id", c.user_id},
          {"seed", c.seed},
          {"w_c", c.w_c},
          {"w_max", c.w_max},
          {"ordering", nomon::to_string(c.ordering)},
          {"placement", nomon::to_string(c.placement)},
          {"rcs_w_max", c.rcs_w_max},
          {"phrases", phrases},
          {"sequences", c.sequences},
          {"sequence_length", c.sequence_length},
          {"calibration_prompts", c.calibration_prompts},
          {"flashes", c.flashes},
          {"flash_min", c.flash_min},
          {"flash_max", c.flash_max},
          {"learn", c.learn}};
}

/// Overrides the fields present in `j` (a config payload or hello payload).
inline void apply_config(SessionConfig& c, const json& j) {
  if (!j.is_object()) return;
  if (j.contains("engine")) c.engine = lab::engine_from_string(j["engine"].get<std::string>());
  if (j.contains("task")) c.task = task_from_string(j["task"].get<std::string>());
  if (j.contains("l")) c.l = j["l"].get<int>();
  if (j.contains("j")) c.j = j["j"].get<int>();
  if (j.contains("k")) c.k = j["k"].get<int>();
  if (j.contains("user_id")) c.user_id = j["user_id"].get<std::string>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("w_c")) c.w_c = j["w_c"].get<int>();
  if (j.contains("w_max")) c.w_max = j["w_max"].get<int>();
  if (j.contains("ordering")) c.ordering = ordering_from_string(j["ordering"].get<std::string>());
  if (j.contains("placement")) c.placement = placement_from_string(j["placement"].get<std::string>());
  if (j.contains("rcs_w_max")) c.rcs_w_max = j["rcs_w_max"].get<int>();
  if (j.contains("phrases")) {
    c.phrases.clear();
    for (const auto& p : j["phrases"])
      c.phrases.push_back({p.at("id").get<std::string>(), p.at("text").get<std::string>(),
                           p.value("iv_oov", std::string{"IV"}) == "IV"});
  }
  if (j.contains("sequences")) c.sequences = j["sequences"].get<int>();
  if (j.contains("sequence_length")) c.sequence_length = j["sequence_length"].get<int>();
  if (j.contains("calibration_prompts")) c.calibration_prompts = j["calibration_prompts"].get<int>();
  if (j.contains("flashes")) c.flashes = j["flashes"].get<int>();
  if (j.contains("flash_min")) c.flash_min = j["flash_min"].get<Duration>();
  if (j.contains("flash_max")) c.flash_max = j["flash_max"].get<Duration>();
  if (j.contains("learn")) c.learn = j["learn"].get<bool>();
}

inline fs::path profile_path(const fs::path& dir, std::string_view user) { return dir / (std::string(user) + ".dist"); }

inline std::optional<ClickTimeDistribution> load_profile(const fs::path& dir, std::string_view user) {
  if (dir.empty()) return std::nullopt;
  std::ifstream in(profile_path(dir, user));
  if (!in) return std::nullopt;
  return read_distribution(in);
}

inline void save_profile(const fs::path& dir, std::string_view user, const ClickTimeDistribution& d) {
  if (dir.empty()) return;
  lab::write_file(profile_path(dir, user), [&](std::ostream& os) { write_distribution(os, d); });
}

inline std::string distribution_text(const ClickTimeDistribution& d) {
  std::ostringstream os;
  write_distribution(os, d);
  return os.str();
}

/// Translates client clocks to the server clock: offset = median of the
/// last 9 (server receive - client send) samples (lower median when even).
class ClockSync {
 public:
  static constexpr std::size_t kWindow = 9;

  void observe(Timestamp client_sent, Timestamp server_recv) {
    samples_.push_back(server_recv - client_sent);
    if (samples_.size() > kWindow) samples_.pop_front();
  }
  bool ready() const { return !samples_.empty(); }
  Duration offset() const {
    if (samples_.empty()) return 0;
    std::vector<Duration> v(samples_.begin(), samples_.end());
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
  }
  Timestamp to_server(Timestamp client) const { return client + offset(); }

 private:
  std::deque<Duration> samples_;
};

/// One live session: a single engine fed by one client's serialized
/// messages. Every inbound and outbound message is appended to the log; the
/// returned vector holds the outbound broadcasts.
class Session {
 public:
  Session(SessionConfig config, const lm::LanguageModel* model,
          std::optional<ClickTimeDistribution> initial_distribution = std::nullopt)
      : cfg_(std::move(config)), model_(model), rng_(cfg_.seed) {
    cfg_.validate();
    if (cfg_.task == Task::text && !model_) throw Error("session: text task needs a language model");
    if (model_) predictor_.emplace(*model_);
    const double T = static_cast<double>(rotation_period(cfg_.l));
    if (initial_distribution) dist_ = initial_distribution->with_period(T);
    else if (auto stored = load_profile(cfg_.profile_dir, cfg_.user_id)) dist_ = stored->with_period(T);
    else dist_ = default_prior_distribution(T);
  }

  const SessionConfig& config() const { return cfg_; }
  const SessionLog& log() const { return log_; }
  bool opened() const { return opened_; }
  bool finished() const { return finished_; }
  const std::string& text() const { return text_.text(); }
  const ClickTimeDistribution& distribution() const { return dist_; }
  const std::vector<PhraseMetrics>& live_metrics() const { return metrics_; }
  const std::optional<ReactionStats>& reaction_stats() const { return reaction_; }
  std::size_t calibration_count() const { return calib_offsets_.size(); }
  Duration clock_offset() const { return sync_.offset(); }
  int speed(char param) const { return param == 'l' ? cfg_.l : param == 'j' ? cfg_.j : cfg_.k; }

  /// Parses and handles one raw client message.
  std::vector<WireMessage> handle_text(std::string_view raw, Timestamp server_recv) {
    WireMessage m;
    try {
      m = json::parse(raw).get<WireMessage>();
    } catch (const std::exception& e) {
      return {emit_error(server_recv, "bad_message", e.what())};
    }
    return handle(m, server_recv);
  }

  std::vector<WireMessage> handle(const WireMessage& in, Timestamp server_recv) {
    now_ = std::max(now_, server_recv);
    out_.clear();
    if (in.seq != 0) {
      if (in.seq <= last_client_seq_) {
        emit_error(now_, "sequence", "client sequence number " + std::to_string(in.seq) + " is not increasing");
        return take();
      }
      last_client_seq_ = in.seq;
    }
    if (in.client_time) {
      if (last_client_time_ && *in.client_time < *last_client_time_) {
        emit_error(now_, "out_of_order", "client timestamp " + std::to_string(*in.client_time) +
                                             " precedes " + std::to_string(*last_client_time_));
        return take();
      }
    }
    const bool client_kind = in.kind == msg::hello || in.kind == msg::click || in.kind == msg::settings_change ||
                             in.kind == msg::done;
    if (!client_kind) {
      emit_error(now_, "unexpected_kind", "clients may not send '" + in.kind + "'");
      return take();
    }
    if (!opened_ && in.kind != msg::hello) {
      emit_error(now_, "not_open", "send hello first");
      return take();
    }
    if (in.client_time) {
      last_client_time_ = in.client_time;
      sync_.observe(*in.client_time, now_);
    }
    try {
      if (in.kind == msg::hello) on_hello(in);
      else if (in.kind == msg::click) on_click(in);
      else if (in.kind == msg::settings_change) on_settings(in);
      else on_done(in);
    } catch (const std::exception& e) {
      emit_error(now_, "internal", e.what());
    }
    return take();
  }

  /// Time-driven output: RCS highlight moves and reaction-task flashes.
  std::vector<WireMessage> tick(Timestamp now) {
    now_ = std::max(now_, now);
    out_.clear();
    if (!opened_ || finished_) return take();
    if (cfg_.task == Task::reaction) {
      if (flashes_shown_ < cfg_.flashes && next_flash_ && now_ >= *next_flash_) {
        flash_times_.push_back(now_);
        ++flashes_shown_;
        emit(msg::flash, now_, {{"index", flashes_shown_}, {"total", cfg_.flashes}});
        next_flash_ = flashes_shown_ < cfg_.flashes ? std::optional<Timestamp>(now_ + draw_interval()) : std::nullopt;
        if (!next_flash_) reaction_end_ = now_ + cfg_.flash_max;
      } else if (reaction_end_ && now_ >= *reaction_end_) {
        finish_reaction(false);
      }
    } else if (rcs_) {
      const RcsEngine view = rcs_view(now_);
      const auto key = std::make_tuple(static_cast<int>(view.mode()), view.index(), view.highlighted_row(),
                                       view.highlight_start());
      if (key != last_rcs_key_) emit(msg::state, now_, state_json());
    }
    return take();
  }

  /// Next time tick() has something to do, if any.
  std::optional<Timestamp> next_deadline() const {
    if (!opened_ || finished_) return std::nullopt;
    if (cfg_.task == Task::reaction) return next_flash_ ? next_flash_ : reaction_end_;
    if (rcs_) return rcs_view(now_).next_advance_at();
    return std::nullopt;
  }

  /// Client went away: the reaction task reports partial statistics.
  std::vector<WireMessage> disconnect(Timestamp now) {
    now_ = std::max(now_, now);
    out_.clear();
    if (opened_ && !finished_) {
      if (cfg_.task == Task::reaction) finish_reaction(true);
      else emit(msg::notice, now_, {{"event", "disconnected"}});
      finished_ = true;
    }
    return take();
  }

  json state_json() {
    json s{{"task", to_string(cfg_.task)}, {"time", now_}, {"text", text_.text()},
           {"settings", {{"l", cfg_.l}, {"j", cfg_.j}, {"k", cfg_.k}}}};
    if (cfg_.task == Task::reaction) {
      s["flashes_shown"] = flashes_shown_;
      return s;
    }
    if (cfg_.task == Task::calibration) {
      s["engine"] = "nomon";
      s["period"] = calib_period();
      s["noon"] = calib_noon(now_);
      s["prompt"] = calib_offsets_.size();
      return s;
    }
    if (cfg_.task == Task::picture) {
      s["targets"] = sequence_;
      s["current_target"] = picked_.size();
    }
    json cells = json::array();
    if (nomon_) {
      s["engine"] = "nomon";
      s["period"] = nomon_->period();
      for (const auto& c : layout_.cells) {
        json cell{{"row", c.row}, {"col", c.col}, {"slot", c.slot}, {"id", c.target.id},
                  {"kind", std::string(nomon::to_string(c.target.kind))}, {"label", c.target.label}};
        if (auto i = live_index(c.target.id)) cell["noon"] = nomon_->noon_time(*i, now_);
        cells.push_back(std::move(cell));
      }
    } else if (rcs_) {
      const RcsEngine view = rcs_view(now_);
      last_rcs_key_ = std::make_tuple(static_cast<int>(view.mode()), view.index(), view.highlighted_row(),
                                      view.highlight_start());
      s["engine"] = "rcs";
      s["mode"] = std::string(nomon::to_string(view.mode()));
      s["row"] = view.highlighted_row();
      s["index"] = view.index();
      s["highlight_start"] = view.highlight_start();
      s["next_advance_at"] = view.next_advance_at();
      s["scan"] = view.scan();
      s["delay"] = view.delay();
      for (const auto& c : view.layout().cells)
        cells.push_back({{"row", c.row}, {"col", c.col}, {"id", c.target.id},
                         {"kind", std::string(nomon::to_string(c.target.kind))}, {"label", c.target.label}});
    }
    s["cells"] = std::move(cells);
    return s;
  }

 private:
  // ------------------------------------------------------------ plumbing

  const WireMessage& emit(std::string_view kind, Timestamp t, json payload = json::object(),
                          std::optional<Timestamp> client_time = std::nullopt) {
    const auto& m = log_.append(kind, std::max(t, log_.empty() ? t : log_.messages().back().server_time),
                                std::move(payload), client_time);
    out_.push_back(m);
    return m;
  }

  WireMessage emit_error(Timestamp t, std::string_view code, std::string_view detail) {
    now_ = std::max(now_, t);
    return emit(msg::error, now_, {{"code", code}, {"detail", detail}});
  }

  /// Every accepted client message is logged once, tagged source=client;
  /// replay feeds exactly these records. They are not echoed back.
  void record_inbound(const WireMessage& in, json extra = json::object()) {
    json payload = in.payload.is_object() ? in.payload : json::object();
    for (auto& [k, v] : extra.items()) payload[k] = v;
    payload["source"] = "client";
    emit(in.kind, now_, std::move(payload), in.client_time);
    out_.pop_back();
  }

  std::vector<WireMessage> take() { return std::exchange(out_, {}); }

  /// Client time translated to the engine clock, kept within
  /// [previous engine event, now].
  Timestamp engine_time(const WireMessage& in) {
    Timestamp t = in.client_time ? sync_.to_server(*in.client_time) : now_;
    t = std::clamp(t, last_engine_time_, now_);
    last_engine_time_ = t;
    return t;
  }

  bool phrase_untouched() const { return !phrase_clicked_; }

  // ------------------------------------------------------------ handlers

  void on_hello(const WireMessage& in) {
    record_inbound(in);
    if (opened_) {
      emit(msg::config, now_, config_json(cfg_));
      if (!finished_) emit(msg::state, now_, state_json());
      return;
    }
    opened_ = true;
    json cfg = config_json(cfg_);
    cfg["initial_distribution"] = distribution_text(dist_);
    emit(msg::config, now_, std::move(cfg));
    switch (cfg_.task) {
      case Task::text: start_phrase(); break;
      case Task::picture: start_sequence(); break;
      case Task::calibration: calib_epoch_ = now_; prompt_calibration(); break;
      case Task::reaction: next_flash_ = now_ + draw_interval(); emit(msg::state, now_, state_json()); break;
    }
  }

  void on_click(const WireMessage& in) {
    if (finished_ || (cfg_.task == Task::text && !phrase_active_) || (cfg_.task == Task::picture && !phrase_active_)) {
      record_inbound(in, {{"ignored", true}});
      emit(msg::notice, now_, {{"event", "click_ignored"}, {"reason", "no active prompt"}});
      return;
    }
    const Timestamp t = engine_time(in);
    record_inbound(in, {{"engine_time", t}});
    if (!phrase_clicked_) phrase_first_click_ = log_.messages().back().server_time;
    phrase_clicked_ = true;
    ++phrase_clicks_;
    round_clicks_ += 1;
    switch (cfg_.task) {
      case Task::reaction: click_times_.push_back(t); break;
      case Task::calibration: calibration_click(t); break;
      default:
        if (nomon_) nomon_click(t);
        else rcs_click(t);
    }
  }

  void on_settings(const WireMessage& in) {
    record_inbound(in);
    const std::string param = in.payload.value("param", std::string{});
    const bool valid_param = cfg_.task != Task::reaction &&
                             ((cfg_.engine == EngineKind::nomon && param == "l") ||
                              (cfg_.engine == EngineKind::rcs && (param == "j" || param == "k")));
    if (!valid_param) {
      emit_error(now_, "bad_setting", "parameter '" + param + "' cannot be changed in this session");
      return;
    }
    if (!phrase_untouched()) {
      emit_error(now_, "mid_phrase", "speed changes are allowed only between phrases");
      return;
    }
    int& slot = param == "l" ? cfg_.l : param == "j" ? cfg_.j : cfg_.k;
    const int previous = slot;
    int value = previous;
    if (in.payload.contains("value")) value = in.payload["value"].get<int>();
    else if (in.payload.contains("delta")) value = previous + in.payload["delta"].get<int>();
    const int hi = param == "k" ? 10 : 20;
    if (std::abs(value - previous) != 1 || value < 0 || value > hi) {
      emit_error(now_, "bad_step",
                 "settings move by exactly 1 within [0, " + std::to_string(hi) + "]; got " + std::to_string(value));
      return;
    }
    slot = value;
    emit(msg::settings_change, now_, {{"param", param}, {"value", value}, {"previous", previous}});
    if (param == "l") {
      const double T = static_cast<double>(rotation_period(cfg_.l));
      dist_ = dist_.with_period(T);
      if (nomon_) {
        nomon_->set_distribution(dist_);
        nomon_->set_period(T, now_);
        last_engine_time_ = now_;
      }
    } else if (rcs_) {
      rcs_->set_timing(scan_time(cfg_.j), extra_delay(cfg_.k));
      rcs_->set_layout(rcs_->layout(), std::max(now_, last_engine_time_));
      last_engine_time_ = std::max(now_, last_engine_time_);
    }
    if (cfg_.task != Task::calibration) emit(msg::state, now_, state_json());
  }

  void on_done(const WireMessage& in) {
    if (finished_) {
      record_inbound(in, {{"ignored", true}});
      emit(msg::notice, now_, {{"event", "finished"}});
      return;
    }
    switch (cfg_.task) {
      case Task::text: {
        if (!phrase_active_) {
          record_inbound(in, {{"ignored", true}});
          emit(msg::notice, now_, {{"event", "no_active_phrase"}});
          return;
        }
        auto m = phrase_metrics(now_);
        record_inbound(in, {{"text", text_.text()}, {"metrics", metrics_json(m)}});
        metrics_.push_back(std::move(m));
        if (cfg_.learn) save_profile(cfg_.profile_dir, cfg_.user_id, dist_);
        phrase_active_ = false;
        if (++phrase_index_ < cfg_.phrases.size()) start_phrase();
        else finish();
        break;
      }
      case Task::calibration:
        record_inbound(in, {{"task", "calibration"}, {"abandoned", true}, {"prompts", calib_offsets_.size()}});
        dist_ = default_prior_distribution(calib_period());
        finish();
        break;
      case Task::reaction:
        record_inbound(in, {{"ignored", true}});
        finish_reaction(true);
        break;
      case Task::picture:
        record_inbound(in, {{"ignored", true}});
        emit(msg::notice, now_, {{"event", "picture_sequences_end_automatically"}}); break;
    }
  }

  // ------------------------------------------------------------ text and picture

  void reset_phrase_counters() {
    phrase_active_ = true;
    phrase_clicked_ = false;
    phrase_clicks_ = 0;
    round_clicks_ = 0;
    phrase_kinds_.clear();
  }

  void start_phrase() {
    const auto& p = cfg_.phrases[phrase_index_];
    last_engine_time_ = std::max(last_engine_time_, now_);
    text_ = TextState{};
    reset_phrase_counters();
    target_ = p.text + " ";
    phrase_info_ = p;
    emit(msg::phrase_prompt, now_,
         {{"phrase", target_}, {"phrase_id", p.id}, {"iv_oov", p.tag()}, {"task", "text"},
          {"index", phrase_index_}, {"total", cfg_.phrases.size()}});
    install_text_targets(now_);
    emit(msg::state, now_, state_json());
  }

  void install_text_targets(Timestamp t) {
    const auto pred = predictor_->predict(text_.text());
    if (cfg_.engine == EngineKind::nomon) {
      layout_ = with_nomon_completions(build_nomon_layout(cfg_.w_c, cfg_.w_max),
                                       sim::nomon_display(*pred, cfg_.w_c, cfg_.w_max));
      auto targets = layout_.live_targets();
      const auto scores = lm::nomon_scores(targets, *pred);
      if (!nomon_) nomon_.emplace(dist_);
      nomon_->set_targets(std::move(targets), scores, t);
    } else {
      layout_ = with_rcs_completions(build_rcs_layout(cfg_.ordering, cfg_.placement, cfg_.rcs_w_max),
                                     pred->top_words(static_cast<std::size_t>(cfg_.rcs_w_max)));
      if (!rcs_) rcs_.emplace(layout_, scan_time(cfg_.j), extra_delay(cfg_.k), t);
      else rcs_->set_layout(layout_, t);
    }
  }

  void start_sequence() {
    last_engine_time_ = std::max(last_engine_time_, now_);
    std::vector<int> pool(kPictureTargets);
    for (int i = 0; i < kPictureTargets; ++i) pool[static_cast<std::size_t>(i)] = i;
    sequence_.clear();
    picked_.clear();
    for (int i = 0; i < cfg_.sequence_length; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng_.below(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      sequence_.push_back("p" + std::to_string(pool[static_cast<std::size_t>(i)]));
    }
    reset_phrase_counters();
    text_ = TextState{};
    target_.clear();
    phrase_info_ = lab::Phrase{"seq" + std::to_string(sequence_index_ + 1), "", true};
    emit(msg::phrase_prompt, now_,
         {{"task", "picture"}, {"phrase_id", phrase_info_.id}, {"targets", sequence_},
          {"index", sequence_index_}, {"total", cfg_.sequences}});
    layout_ = build_picture_layout(kPictureTargets);
    for (auto& c : layout_.cells) c.target.label = emoji_labels()[static_cast<std::size_t>(std::stoi(c.target.id.substr(1)))];
    if (cfg_.engine == EngineKind::nomon) {
      auto targets = layout_.live_targets();
      const std::vector<double> scores(targets.size(), 1.0);
      if (!nomon_) nomon_.emplace(dist_);
      nomon_->set_targets(std::move(targets), scores, now_);
    } else {
      if (!rcs_) rcs_.emplace(layout_, scan_time(cfg_.j), extra_delay(cfg_.k), now_);
      else rcs_->set_layout(layout_, now_);
    }
    emit(msg::state, now_, state_json());
  }

  void nomon_click(Timestamp t) {
    const auto sel = nomon_->observe_click(t);
    if (!sel) {
      emit(msg::state, now_, state_json());
      return;
    }
    if (cfg_.learn) {
      for (double off : nomon_->click_feedback()) dist_ = dist_.update(off);
      nomon_->set_distribution(dist_);
    }
    apply_selection(sel->target, t);
  }

  void rcs_click(Timestamp t) {
    const RcsClick r = rcs_->observe_click(t);
    if (r.kind == RcsClick::Kind::row_selected) {
      emit(msg::state, now_, state_json());
      return;
    }
    if (r.kind == RcsClick::Kind::empty) {
      round_clicks_ = 0;
      emit(msg::notice, now_, {{"event", "empty_cell"}, {"row", r.row}, {"col", r.col}});
      emit(msg::state, now_, state_json());
      return;
    }
    apply_selection(*r.target, t);
  }

  void apply_selection(const Target& target, Timestamp t) {
    json p = target_json(target);
    p["clicks"] = round_clicks_;
    p["engine_time"] = t;
    round_clicks_ = 0;
    phrase_kinds_.push_back(target.kind);
    emit(msg::selection, now_, std::move(p));
    if (cfg_.task == Task::picture) {
      picked_.push_back(target.id);
      if (picked_.size() >= sequence_.size()) {
        auto m = phrase_metrics(now_);
        emit(msg::done, now_,
             {{"task", "picture"}, {"targets", sequence_}, {"selected", picked_}, {"metrics", metrics_json(m)}});
        metrics_.push_back(std::move(m));
        if (cfg_.learn && nomon_) save_profile(cfg_.profile_dir, cfg_.user_id, dist_);
        phrase_active_ = false;
        if (++sequence_index_ < cfg_.sequences) start_sequence();
        else finish();
        return;
      }
      if (nomon_) {
        auto targets = layout_.live_targets();
        const std::vector<double> scores(targets.size(), 1.0);
        nomon_->set_targets(std::move(targets), scores, t);
      }
      emit(msg::state, now_, state_json());
      return;
    }
    text_.apply(target);
    emit(msg::text_update, now_, {{"text", text_.text()}});
    install_text_targets(t);
    emit(msg::state, now_, state_json());
  }

  /// Mirrors metrics_from_log using counters kept while the phrase ran.
  PhraseMetrics phrase_metrics(Timestamp done_time) const {
    PhraseMetrics p;
    p.phrase_id = phrase_info_.id;
    p.picture = cfg_.task == Task::picture;
    p.iv_oov = p.picture ? std::string{} : std::string(phrase_info_.tag());
    p.target = target_;
    p.final_text = p.picture ? std::string{} : text_.text();
    p.clicks = phrase_clicks_;
    p.selections = phrase_kinds_.size();
    const Timestamp t0 = phrase_clicked_ ? phrase_first_click_ : done_time;
    p.duration_ms = done_time - t0;
    if (p.picture) {
      p.wpm = p.duration_ms > 0 ? selection_rate(p.selections, t0, done_time) : 0.0;
      p.cpc = p.selections ? static_cast<double>(p.clicks) / static_cast<double>(p.selections) : 0.0;
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < std::max(sequence_.size(), picked_.size()); ++i)
        if (i >= sequence_.size() || i >= picked_.size() || sequence_[i] != picked_[i]) ++wrong;
      p.err_rate = sequence_.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(sequence_.size());
    } else {
      p.wpm = p.duration_ms > 0 ? entry_rate(p.final_text, t0, done_time) : 0.0;
      p.cpc = p.final_text.empty() ? 0.0 : click_load(p.clicks, p.final_text);
      p.err_rate = p.target.empty() ? 0.0 : final_error_rate(p.target, p.final_text);
    }
    p.corr_rate = phrase_kinds_.empty() ? 0.0 : correction_rate(phrase_kinds_);
    return p;
  }

  static json metrics_json(const PhraseMetrics& m) {
    return {{"wpm", m.wpm}, {"cpc", m.cpc}, {"corr_rate", m.corr_rate}, {"err_rate", m.err_rate},
            {"clicks", m.clicks}, {"selections", m.selections}, {"duration_ms", m.duration_ms}};
  }

  std::optional<std::size_t> live_index(std::string_view id) const {
    const auto& ts = nomon_->targets();
    for (std::size_t i = 0; i < ts.size(); ++i)
      if (ts[i].id == id) return i;
    return std::nullopt;
  }

  /// The engine only moves on clicks; what the user sees now is a copy
  /// advanced to the present.
  RcsEngine rcs_view(Timestamp now) const {
    RcsEngine view = *rcs_;
    if (now >= view.highlight_start()) view.advance_to(now);
    return view;
  }

  // ------------------------------------------------------------ calibration

  double calib_period() const { return static_cast<double>(rotation_period(cfg_.l)); }

  /// The calibration clock passes noon at calib_epoch_ + T/2 + m T.
  Timestamp calib_noon(Timestamp now) const {
    const double T = calib_period();
    const double first = static_cast<double>(calib_epoch_) + T / 2;
    const double m = std::max(0.0, std::ceil((static_cast<double>(now) - first) / T));
    return static_cast<Timestamp>(std::llround(first + m * T));
  }

  void prompt_calibration() {
    emit(msg::calib_prompt, now_,
         {{"index", calib_offsets_.size()}, {"total", cfg_.calibration_prompts}, {"period", calib_period()},
          {"noon", calib_noon(now_)}, {"target", "calibration"}});
  }

  void calibration_click(Timestamp t) {
    const double T = calib_period();
    const double noon = static_cast<double>(calib_epoch_) + T / 2;
    calib_offsets_.push_back(wrap_offset(static_cast<double>(t), noon, T));
    if (static_cast<int>(calib_offsets_.size()) < cfg_.calibration_prompts) {
      prompt_calibration();
      return;
    }
    dist_ = init_from_calibration(calib_offsets_, T);
    save_profile(cfg_.profile_dir, cfg_.user_id, dist_);
    emit(msg::done, now_,
         {{"task", "calibration"}, {"abandoned", false}, {"prompts", calib_offsets_.size()}, {"mode", dist_.mode()},
          {"distribution", distribution_text(dist_)}});
    finish();
  }

  // ------------------------------------------------------------ reaction

  Duration draw_interval() {
    return cfg_.flash_min + static_cast<Duration>(rng_.below(static_cast<std::uint64_t>(cfg_.flash_max - cfg_.flash_min + 1)));
  }

  void finish_reaction(bool partial) {
    json payload{{"task", "reaction"}, {"partial", partial}, {"flashes", flash_times_.size()}};
    try {
      reaction_ = srt_dct(flash_times_, click_times_);
      payload["srt_mean"] = reaction_->srt_mean;
      payload["dct_mean"] = reaction_->dct_mean;
      payload["srt"] = reaction_->srt;
      payload["dct"] = reaction_->dct;
      payload["trials"] = reaction_->trials;
      payload["dropped"] = reaction_->dropped;
    } catch (const Error& e) {
      payload["trials"] = flash_times_.size();
      payload["error"] = e.what();
    }
    emit(msg::done, now_, std::move(payload));
    finish();
  }

  void finish() {
    finished_ = true;
    emit(msg::notice, now_, {{"event", "finished"}});
  }

  SessionConfig cfg_;
  const lm::LanguageModel* model_;
  std::optional<lm::Predictor> predictor_;
  Rng rng_;
  ClickTimeDistribution dist_ = ClickTimeDistribution::uniform(1000);
  SessionLog log_;
  std::vector<WireMessage> out_;
  ClockSync sync_;
  Timestamp now_ = 0;
  Timestamp last_engine_time_ = 0;
  std::int64_t last_client_seq_ = 0;
  std::optional<Timestamp> last_client_time_;
  bool opened_ = false;
  bool finished_ = false;

  std::optional<NomonEngine> nomon_;
  std::optional<RcsEngine> rcs_;
  std::tuple<int, int, int, Timestamp> last_rcs_key_{-1, -1, -1, -1};
  Layout layout_;
  TextState text_;

  // current prompt
  std::size_t phrase_index_ = 0;
  lab::Phrase phrase_info_;
  std::string target_;
  bool phrase_active_ = false;
  bool phrase_clicked_ = false;
  Timestamp phrase_first_click_ = 0;
  std::size_t phrase_clicks_ = 0;
  int round_clicks_ = 0;
  std::vector<TargetKind> phrase_kinds_;
  std::vector<PhraseMetrics> metrics_;

  // picture
  int sequence_index_ = 0;
  std::vector<std::string> sequence_;
  std::vector<std::string> picked_;

  // calibration
  Timestamp calib_epoch_ = 0;
  std::vector<double> calib_offsets_;

  // reaction
  int flashes_shown_ = 0;
  std::optional<Timestamp> next_flash_;
  std::optional<Timestamp> reaction_end_;
  std::vector<Timestamp> flash_times_;
  std::vector<Timestamp> click_times_;
  std::optional<ReactionStats> reaction_;
};

/// Rebuilds a session from its log's config message and feeds it the logged
/// client messages at their receive times. Profiles are neither read nor
/// written.
struct ReplayResult {
  std::vector<std::string> selections;
  std::string final_text;
  std::vector<std::string> texts;
  SessionLog log;
};

inline SessionConfig config_from_log(const SessionLog& log) {
  for (const auto& m : log.messages())
    if (m.kind == msg::config) {
      SessionConfig c;
      apply_config(c, m.payload);
      return c;
    }
  throw Error("replay: log has no config message");
}

inline ReplayResult replay(const SessionLog& log, const lm::LanguageModel* model) {
  SessionConfig cfg = config_from_log(log);
  cfg.profile_dir.clear();
  std::optional<ClickTimeDistribution> initial;
  for (const auto& m : log.messages())
    if (m.kind == msg::config && m.payload.contains("initial_distribution")) {
      std::istringstream in(m.payload["initial_distribution"].get<std::string>());
      initial = read_distribution(in);
      break;
    }
  Session s(cfg, model, initial);
  ReplayResult r;
  for (const auto& m : log.messages()) {
    if (m.payload.value("source", std::string{}) != "client") continue;
    WireMessage in;
    in.kind = m.kind;
    in.client_time = m.client_time;
    in.payload = m.payload;
    in.payload.erase("source");
    s.tick(m.server_time);
    s.handle(in, m.server_time);
  }
  for (const auto& m : s.log().messages()) {
    if (m.kind == msg::selection) r.selections.push_back(m.payload.at("id").get<std::string>());
    if (m.kind == msg::done && m.payload.contains("text")) r.texts.push_back(m.payload["text"].get<std::string>());
  }
  r.final_text = s.text();
  r.log = s.log();
  return r;
}

}  // namespace nomon::session

#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nomon/core.hpp"

namespace nomon {

using json = nlohmann::json;

/// Message kinds on the wire and in session logs.
namespace msg {
inline constexpr std::string_view hello = "hello";
inline constexpr std::string_view config = "config";
inline constexpr std::string_view state = "state";
inline constexpr std::string_view click = "click";
inline constexpr std::string_view selection = "selection";
inline constexpr std::string_view text_update = "text_update";
inline constexpr std::string_view phrase_prompt = "phrase_prompt";
inline constexpr std::string_view calib_prompt = "calib_prompt";
inline constexpr std::string_view flash = "flash";
inline constexpr std::string_view settings_change = "settings_change";
inline constexpr std::string_view done = "done";
inline constexpr std::string_view notice = "notice";
inline constexpr std::string_view error = "error";

inline bool is_known(std::string_view k) {
  for (auto s : {hello, config, state, click, selection, text_update, phrase_prompt, calib_prompt, flash,
                 settings_change, done, notice, error})
    if (s == k) return true;
  return false;
}
}  // namespace msg

struct WireMessage {
  std::int64_t seq = 0;
  std::string kind;
  /// Client clock at the physical event (clicks) or at send time.
  std::optional<Timestamp> client_time;
  /// Engine clock when the server handled the message.
  Timestamp server_time = 0;
  json payload = json::object();

  bool operator==(const WireMessage&) const = default;
};

inline void to_json(json& j, const WireMessage& m) {
  j = json{{"seq", m.seq}, {"kind", m.kind}, {"server_time", m.server_time}, {"payload", m.payload}};
  if (m.client_time) j["client_time"] = *m.client_time;
}

inline void from_json(const json& j, WireMessage& m) {
  if (!j.is_object()) throw Error("message: expected a JSON object");
  m.kind = j.at("kind").get<std::string>();
  if (!msg::is_known(m.kind)) throw Error("message: unknown kind '" + m.kind + "'");
  m.seq = j.value("seq", std::int64_t{0});
  m.server_time = j.value("server_time", Timestamp{0});
  m.client_time.reset();
  if (j.contains("client_time") && !j["client_time"].is_null()) m.client_time = j["client_time"].get<Timestamp>();
  m.payload = j.value("payload", json::object());
}

inline json target_json(const Target& t) {
  return {{"id", t.id}, {"kind", std::string(to_string(t.kind))}, {"label", t.label}};
}

inline Target target_from_json(const json& j) {
  return {j.at("id").get<std::string>(), target_kind_from_string(j.at("kind").get<std::string>()),
          j.value("label", std::string{})};
}

/// Ordered message stream. Appending assigns strictly increasing sequence
/// numbers and rejects time going backwards.
class SessionLog {
 public:
  const std::vector<WireMessage>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }

  const WireMessage& append(std::string_view kind, Timestamp server_time, json payload = json::object(),
                            std::optional<Timestamp> client_time = std::nullopt) {
    if (!messages_.empty() && server_time < messages_.back().server_time)
      throw Error("SessionLog: server_time went backwards");
    WireMessage m;
    m.seq = next_seq_++;
    m.kind = std::string(kind);
    m.server_time = server_time;
    m.client_time = client_time;
    m.payload = std::move(payload);
    messages_.push_back(std::move(m));
    return messages_.back();
  }

  /// Appends an already-numbered message (e.g. when reading a file).
  void push(WireMessage m) {
    if (!messages_.empty() && m.seq <= messages_.back().seq)
      throw Error("SessionLog: sequence numbers must strictly increase");
    next_seq_ = m.seq + 1;
    messages_.push_back(std::move(m));
  }

  void write_jsonl(std::ostream& os) const {
    for (const auto& m : messages_) os << json(m).dump() << '\n';
  }

  static SessionLog read_jsonl(std::istream& is) {
    SessionLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        log.push(json::parse(line).get<WireMessage>());
      } catch (const json::exception& e) {
        throw Error("session log line " + std::to_string(lineno) + ": " + e.what());
      } catch (const Error& e) {
        throw Error("session log line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return log;
  }

 private:
  std::vector<WireMessage> messages_;
  std::int64_t next_seq_ = 1;
};

}  // namespace nomon

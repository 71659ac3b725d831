#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pintent/common.hpp"
#include "pintent/event.hpp"

namespace pintent {

/// An idle-bounded run of one client's events. Immutable once built.
class Session {
 public:
  Session() = default;

  /// Validates the invariants: non-empty, non-decreasing timestamps, one
  /// client_token. The session belongs to the first customer_id seen in any
  /// event (late login assigns the whole session).
  static Session from_events(std::vector<RawEvent> events) {
    if (events.empty()) throw Error(Errc::MalformedLine, "session without events");
    Session s;
    s.events_ = std::move(events);
    const auto& first = s.events_.front();
    s.client_token_ = first.client_token;
    s.device_ = first.device;
    s.channel_ = first.channel;
    for (std::size_t i = 0; i < s.events_.size(); ++i) {
      const auto& ev = s.events_[i];
      if (ev.client_token != s.client_token_) {
        throw Error(Errc::MalformedLine, "session mixes client tokens");
      }
      if (i && ev.timestamp_ms < s.events_[i - 1].timestamp_ms) {
        throw Error(Errc::UnsortedInput, "session timestamps decrease for " + s.client_token_);
      }
      if (!s.customer_id_ && ev.customer_id) s.customer_id_ = ev.customer_id;
      if (ev.action == Action::Purchase) s.purchase_ = true;
      if (ev.action == Action::PageView) s.page_views_.push_back(i);
    }
    s.id_ = s.client_token_ + ":" + std::to_string(first.timestamp_ms);
    return s;
  }

  const std::string& id() const { return id_; }
  const std::string& client_token() const { return client_token_; }
  const std::optional<std::string>& customer_id() const { return customer_id_; }
  bool identified() const { return customer_id_.has_value(); }
  Device device() const { return device_; }
  Channel channel() const { return channel_; }
  TimestampMs start_ms() const { return events_.front().timestamp_ms; }
  TimestampMs end_ms() const { return events_.back().timestamp_ms; }
  bool purchase() const { return purchase_; }
  const std::vector<RawEvent>& events() const { return events_; }
  /// Indices into events() of the PageView actions, in order.
  std::span<const std::size_t> page_views() const { return page_views_; }
  /// Session length: number of actions.
  std::size_t length() const { return events_.size(); }
  std::size_t page_count() const { return page_views_.size(); }

 private:
  std::string id_;
  std::string client_token_;
  std::optional<std::string> customer_id_;
  Device device_ = Device::PC;
  Channel channel_ = Channel::Direct;
  std::vector<RawEvent> events_;
  std::vector<std::size_t> page_views_;
  bool purchase_ = false;
};

// ---------------------------------------------------------------------------
// Dwell times
// ---------------------------------------------------------------------------

/// Seconds from each page view to the next action. The session's final
/// action has no successor and therefore no dwell.
inline std::vector<double> dwell_times(const Session& s) {
  std::vector<double> out;
  const auto& ev = s.events();
  for (std::size_t p : s.page_views()) {
    if (p + 1 < ev.size()) {
      out.push_back(static_cast<double>(ev[p + 1].timestamp_ms - ev[p].timestamp_ms) / 1000.0);
    }
  }
  return out;
}

struct DwellStats {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;

  bool operator==(const DwellStats&) const = default;
};

/// Mean and population standard deviation; (0, 0, 0) for an empty sample.
inline DwellStats summarize_dwell(std::span<const double> values) {
  DwellStats st;
  st.count = values.size();
  if (values.empty()) return st;
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - st.mean) * (v - st.mean);
  st.std = std::sqrt(ss / static_cast<double>(values.size()));
  return st;
}

/// Expanding-window dwell statistics over the first `step` page views that
/// have a defined dwell.
inline DwellStats dwell_stats_at_step(const Session& s, std::size_t step) {
  if (step > s.page_count()) {
    throw Error(Errc::StepOutOfRange, "step " + std::to_string(step) + " exceeds " +
                                          std::to_string(s.page_count()) + " page views");
  }
  std::vector<double> window;
  window.reserve(step);
  const auto& ev = s.events();
  for (std::size_t k = 0; k < step; ++k) {
    const auto p = s.page_views()[k];
    if (p + 1 < ev.size()) {
      window.push_back(static_cast<double>(ev[p + 1].timestamp_ms - ev[p].timestamp_ms) / 1000.0);
    }
  }
  return summarize_dwell(window);
}

// ---------------------------------------------------------------------------
// Customer journeys
// ---------------------------------------------------------------------------

/// The per-session facts a customer's history is made of.
struct JourneyEntry {
  std::string session_id;
  Device device = Device::PC;
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;
  bool purchase = false;

  bool operator==(const JourneyEntry&) const = default;
};

inline JourneyEntry journey_entry(const Session& s) {
  return {s.id(), s.device(), s.start_ms(), s.end_ms(), s.purchase()};
}

struct Journey {
  std::string customer_id;
  std::vector<JourneyEntry> sessions;    // ordered by start time
  std::vector<std::int64_t> gaps_ms;     // start of i+1 minus end of i

  static Journey build(std::string customer_id, std::vector<JourneyEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.start_ms, a.session_id) < std::tie(b.start_ms, b.session_id);
    });
    Journey j{std::move(customer_id), std::move(entries), {}};
    for (std::size_t i = 1; i < j.sessions.size(); ++i) {
      j.gaps_ms.push_back(j.sessions[i].start_ms - j.sessions[i - 1].end_ms);
    }
    return j;
  }
};

/// Group identified sessions by customer.
inline std::map<std::string, Journey> build_journeys(std::span<const Session> sessions) {
  std::map<std::string, std::vector<JourneyEntry>> grouped;
  for (const auto& s : sessions) {
    if (s.customer_id()) grouped[*s.customer_id()].push_back(journey_entry(s));
  }
  std::map<std::string, Journey> out;
  for (auto& [id, entries] : grouped) out.emplace(id, Journey::build(id, std::move(entries)));
  return out;
}

struct DeviceSwitches {
  std::vector<std::pair<Device, Device>> pairs;
  std::size_t switches = 0;
  double switch_probability = 0.0;
};

inline DeviceSwitches device_switches_of(std::span<const Device> devices) {
  DeviceSwitches out;
  for (std::size_t i = 1; i < devices.size(); ++i) {
    out.pairs.emplace_back(devices[i - 1], devices[i]);
    if (devices[i - 1] != devices[i]) ++out.switches;
  }
  if (devices.size() > 1) {
    out.switch_probability =
        static_cast<double>(out.switches) / static_cast<double>(devices.size() - 1);
  }
  return out;
}

inline DeviceSwitches device_switches(const Journey& j) {
  std::vector<Device> devices;
  devices.reserve(j.sessions.size());
  for (const auto& e : j.sessions) devices.push_back(e.device);
  return device_switches_of(devices);
}

struct HistorySummary {
  std::size_t orders = 0;
  double days_since_last_purchase = -1.0;  // -1: no earlier purchase
  std::size_t sessions = 0;
  std::size_t devices = 0;
  std::vector<Device> device_sequence;
  double switch_probability = 0.0;
};

/// Customer history as visible at `at`: only sessions that ended strictly
/// before it contribute.
inline HistorySummary history_snapshot(const Journey& j, TimestampMs at) {
  HistorySummary h;
  std::set<Device> distinct;
  std::optional<TimestampMs> last_purchase_end;
  for (const auto& e : j.sessions) {
    if (e.end_ms >= at) continue;
    ++h.sessions;
    h.device_sequence.push_back(e.device);
    distinct.insert(e.device);
    if (e.purchase) {
      ++h.orders;
      if (!last_purchase_end || e.end_ms > *last_purchase_end) last_purchase_end = e.end_ms;
    }
  }
  h.devices = distinct.size();
  if (last_purchase_end) {
    h.days_since_last_purchase = static_cast<double>(at - *last_purchase_end) / kDayMs;
  }
  h.switch_probability = device_switches_of(h.device_sequence).switch_probability;
  return h;
}

// ---------------------------------------------------------------------------
// JSON-lines session files
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Session& s) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : s.events()) {
    nlohmann::json e = {{"t", ev.timestamp_ms},
                        {"device", to_string(ev.device)},
                        {"channel", to_string(ev.channel)},
                        {"action", to_string(ev.action)},
                        {"page_type", to_string(ev.page_type)},
                        {"country", ev.country}};
    e["customer_id"] = ev.customer_id ? nlohmann::json(*ev.customer_id) : nlohmann::json();
    e["query"] = ev.query_text ? nlohmann::json(*ev.query_text) : nlohmann::json();
    e["price"] = ev.price_cents ? nlohmann::json(*ev.price_cents) : nlohmann::json();
    events.push_back(std::move(e));
  }
  nlohmann::json j = {{"session_id", s.id()},
                      {"client_token", s.client_token()},
                      {"device", to_string(s.device())},
                      {"channel", to_string(s.channel())},
                      {"start_ms", s.start_ms()},
                      {"purchase", s.purchase()},
                      {"events", std::move(events)}};
  j["customer_id"] = s.customer_id() ? nlohmann::json(*s.customer_id()) : nlohmann::json();
  return j;
}

inline Session session_from_json(const nlohmann::json& j, std::size_t line_no = 0) {
  const std::optional<std::size_t> where =
      line_no ? std::optional<std::size_t>(line_no) : std::nullopt;
  try {
    const auto token = j.at("client_token").get<std::string>();
    std::vector<RawEvent> events;
    for (const auto& e : j.at("events")) {
      RawEvent ev;
      ev.timestamp_ms = e.at("t").get<std::int64_t>();
      ev.client_token = token;
      if (!e.at("customer_id").is_null()) ev.customer_id = e.at("customer_id").get<std::string>();
      ev.device = parse_enum_or_throw<Device>(e.at("device").get<std::string>(), where);
      ev.channel = parse_enum_or_throw<Channel>(e.at("channel").get<std::string>(), where);
      ev.action = parse_enum_or_throw<Action>(e.at("action").get<std::string>(), where);
      ev.page_type = parse_enum_or_throw<PageType>(e.at("page_type").get<std::string>(), where);
      if (!e.at("query").is_null()) ev.query_text = e.at("query").get<std::string>();
      if (!e.at("price").is_null()) ev.price_cents = e.at("price").get<std::int64_t>();
      ev.country = e.at("country").get<std::string>();
      events.push_back(std::move(ev));
    }
    auto s = Session::from_events(std::move(events));
    if (s.purchase() != j.at("purchase").get<bool>()) {
      throw Error(Errc::MalformedLine, "purchase flag disagrees with events", where);
    }
    return s;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::MalformedLine, ex.what(), where);
  } catch (const Error& ex) {
    if (ex.line()) throw;
    throw Error(ex.code(), ex.detail(), where);
  }
}

inline void write_sessions_jsonl(std::ostream& os, std::span<const Session> sessions) {
  for (const auto& s : sessions) os << to_json(s).dump() << '\n';
}

inline std::vector<Session> read_sessions_jsonl(std::istream& is) {
  std::vector<Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::MalformedLine, ex.what(), line_no);
    }
    out.push_back(session_from_json(j, line_no));
  }
  return out;
}

}  // namespace pintent

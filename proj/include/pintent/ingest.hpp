#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <zlib.h>

#include "pintent/common.hpp"
#include "pintent/event.hpp"
#include "pintent/session.hpp"

namespace pintent {

struct BotFilterConfig {
  std::set<std::string> allowed_countries;
  std::set<Device> allowed_devices;
  std::size_t min_session_events = 2;
  std::size_t max_session_events = 2000;

  /// European storefront countries and every known device type.
  static BotFilterConfig defaults() {
    BotFilterConfig c;
    c.allowed_countries = {"AT", "BE", "CH", "DE", "DK", "ES", "FR", "GB", "IE",
                           "IT", "LU", "NL", "NO", "PL", "PT", "SE"};
    for (auto d : all_values<Device>()) c.allowed_devices.insert(d);
    return c;
  }

  void validate() const {
    if (min_session_events < 1) {
      throw Error(Errc::InvalidConfig, "min_session_events must be >= 1");
    }
    if (max_session_events <= min_session_events) {
      throw Error(Errc::InvalidConfig, "max_session_events must exceed min_session_events");
    }
  }
};

struct FilterResult {
  std::vector<RawEvent> events;
  std::size_t dropped = 0;
};

/// Keep events from allowed countries on allowed devices, in input order.
inline FilterResult filter_events(std::span<const RawEvent> events, const BotFilterConfig& cfg) {
  FilterResult out;
  out.events.reserve(events.size());
  for (const auto& ev : events) {
    if (cfg.allowed_countries.count(ev.country) && cfg.allowed_devices.count(ev.device)) {
      out.events.push_back(ev);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

inline constexpr std::int64_t kDefaultIdleGapMs = 30 * kMinuteMs;

struct SessionizeOptions {
  std::int64_t idle_gap_ms = kDefaultIdleGapMs;
  std::size_t min_session_events = 2;
  std::size_t max_session_events = 2000;

  static SessionizeOptions from(const BotFilterConfig& cfg) {
    return {kDefaultIdleGapMs, cfg.min_session_events, cfg.max_session_events};
  }
};

struct SessionizeResult {
  std::vector<Session> sessions;  // ordered by (client_token, start)
  std::size_t dropped_sessions = 0;
};

/// Split each client's event stream at idle gaps strictly longer than the
/// threshold. A gap of exactly the threshold stays in the session. Events of
/// different clients may interleave; each client's own timestamps must not
/// decrease.
inline SessionizeResult sessionize(std::span<const RawEvent> events,
                                   const SessionizeOptions& opt = {}) {
  std::unordered_map<std::string, std::size_t> slot_of;
  std::vector<std::vector<std::vector<RawEvent>>> runs;  // per client, list of runs
  for (const auto& ev : events) {
    auto [it, inserted] = slot_of.try_emplace(ev.client_token, runs.size());
    if (inserted) runs.emplace_back();
    auto& client_runs = runs[it->second];
    if (!client_runs.empty()) {
      const auto& prev = client_runs.back().back();
      if (ev.timestamp_ms < prev.timestamp_ms) {
        throw Error(Errc::UnsortedInput, "timestamps decrease for client '" + ev.client_token +
                                             "' at " + std::to_string(ev.timestamp_ms));
      }
      if (ev.timestamp_ms - prev.timestamp_ms <= opt.idle_gap_ms) {
        client_runs.back().push_back(ev);
        continue;
      }
    }
    client_runs.emplace_back().push_back(ev);
  }

  SessionizeResult out;
  for (auto& client_runs : runs) {
    for (auto& run : client_runs) {
      if (run.size() < opt.min_session_events || run.size() > opt.max_session_events) {
        ++out.dropped_sessions;
        continue;
      }
      out.sessions.push_back(Session::from_events(std::move(run)));
    }
  }
  std::sort(out.sessions.begin(), out.sessions.end(), [](const Session& a, const Session& b) {
    if (a.client_token() != b.client_token()) return a.client_token() < b.client_token();
    return a.start_ms() < b.start_ms();
  });
  return out;
}

/// Stable sort by (client_token, timestamp); puts an arbitrary log into
/// sessionize's expected order.
inline void sort_events(std::vector<RawEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
    return std::tie(a.client_token, a.timestamp_ms) < std::tie(b.client_token, b.timestamp_ms);
  });
}

struct IdentitySplit {
  std::vector<Session> anonymous;
  std::vector<Session> identified;
};

inline IdentitySplit split_by_identity(std::span<const Session> sessions) {
  IdentitySplit out;
  for (const auto& s : sessions) {
    (s.identified() ? out.identified : out.anonymous).push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log files
// ---------------------------------------------------------------------------

/// Line reader over plain or gzip-compressed text (chosen by ".gz" suffix).
class LineReader {
 public:
  explicit LineReader(const std::string& path) : gz_(path.ends_with(".gz")) {
    if (gz_) {
      gz_file_ = gzopen(path.c_str(), "rb");
      if (!gz_file_) throw Error(Errc::Io, "cannot open " + path);
    } else {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error(Errc::Io, "cannot open " + path);
    }
  }
  ~LineReader() {
    if (gz_file_) gzclose(gz_file_);
  }
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  bool next(std::string& line) {
    if (!gz_) return static_cast<bool>(std::getline(file_, line));
    line.clear();
    char buf[4096];
    while (gzgets(gz_file_, buf, sizeof buf)) {
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        return true;
      }
    }
    return !line.empty();
  }

 private:
  bool gz_;
  gzFile gz_file_ = nullptr;
  std::ifstream file_;
};

struct LogReadResult {
  std::vector<RawEvent> events;
  std::size_t malformed = 0;  // only non-zero with skip_malformed
};

/// Read a TSV event log. A header line (non-numeric first field) defines the
/// column order; otherwise the standard order applies.
inline LogReadResult read_event_log(const std::string& path, bool skip_malformed = false) {
  LineReader reader(path);
  LogReadResult out;
  EventSchema schema;
  std::string line;
  std::size_t line_no = 0;
  while (reader.next(line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && looks_like_header(line)) {
      schema = EventSchema::from_header(line, line_no);
      continue;
    }
    try {
      out.events.push_back(parse_event_line(line, schema, line_no));
    } catch (const Error&) {
      if (!skip_malformed) throw;
      ++out.malformed;
    }
  }
  return out;
}

}  // namespace pintent

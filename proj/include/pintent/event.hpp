#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pintent/common.hpp"

namespace pintent {

/// One timestamped user action as it appears in the raw log.
struct RawEvent {
  TimestampMs timestamp_ms = 0;
  std::string client_token;
  std::optional<std::string> customer_id;  // absent => anonymous at this instant
  Device device = Device::PC;
  Channel channel = Channel::Direct;
  Action action = Action::PageView;
  PageType page_type = PageType::Home;
  std::optional<std::string> query_text;
  std::optional<std::int64_t> price_cents;
  std::string country;

  bool operator==(const RawEvent&) const = default;
};

enum class EventField : std::size_t {
  Timestamp,
  ClientToken,
  CustomerId,
  Device,
  Channel,
  Action,
  PageType,
  QueryText,
  PriceCents,
  Country,
};

inline constexpr std::size_t kEventFieldCount = 10;

inline constexpr std::array<std::string_view, kEventFieldCount> kEventFieldNames = {
    "timestamp_ms", "client_token", "customer_id", "device",      "channel",
    "action",       "page_type",    "query_text",  "price_cents", "country"};

/// Column order of a TSV event log. `position[f]` is the column holding field f.
struct EventSchema {
  std::array<std::size_t, kEventFieldCount> position{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t columns = kEventFieldCount;

  static EventSchema standard() { return {}; }

  /// Build a schema from a header line naming the columns (any order).
  static EventSchema from_header(std::string_view header, std::size_t line_no = 1);

  std::size_t at(EventField f) const { return position[static_cast<std::size_t>(f)]; }
};

namespace detail {

inline void split_tabs(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

inline EventSchema EventSchema::from_header(std::string_view header, std::size_t line_no) {
  std::vector<std::string_view> cols;
  detail::split_tabs(detail::strip_cr(header), cols);
  EventSchema schema;
  schema.columns = cols.size();
  std::array<bool, kEventFieldCount> seen{};
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t f = 0; f < kEventFieldCount; ++f) {
      if (iequals(cols[c], kEventFieldNames[f])) {
        schema.position[f] = c;
        seen[f] = true;
      }
    }
  }
  for (std::size_t f = 0; f < kEventFieldCount; ++f) {
    if (!seen[f]) {
      throw Error(Errc::MalformedLine,
                  "header lacks column '" + std::string(kEventFieldNames[f]) + "'", line_no);
    }
  }
  return schema;
}

/// A header is recognised by a non-numeric first field.
inline bool looks_like_header(std::string_view line) {
  const auto tab = line.find('\t');
  const auto first = line.substr(0, tab);
  return !detail::parse_int<std::int64_t>(first).has_value();
}

/// Decode one TSV record. Throws Error(MalformedLine|BadTimestamp|UnknownEnum)
/// carrying `line_no`.
inline RawEvent parse_event_line(std::string_view line, const EventSchema& schema = {},
                                 std::size_t line_no = 0) {
  thread_local std::vector<std::string_view> cols;
  detail::split_tabs(detail::strip_cr(line), cols);
  const std::optional<std::size_t> where =
      line_no ? std::optional<std::size_t>(line_no) : std::nullopt;
  if (cols.size() != schema.columns) {
    throw Error(Errc::MalformedLine,
                "expected " + std::to_string(schema.columns) + " columns, got " +
                    std::to_string(cols.size()),
                where);
  }
  auto col = [&](EventField f) { return cols[schema.at(f)]; };

  RawEvent ev;
  const auto ts = detail::parse_int<std::int64_t>(col(EventField::Timestamp));
  if (!ts || *ts < 0) {
    throw Error(Errc::BadTimestamp, "'" + std::string(col(EventField::Timestamp)) + "'", where);
  }
  ev.timestamp_ms = *ts;

  ev.client_token = std::string(col(EventField::ClientToken));
  if (ev.client_token.empty()) throw Error(Errc::MalformedLine, "empty client_token", where);
  if (auto c = col(EventField::CustomerId); !c.empty()) ev.customer_id = std::string(c);

  ev.device = parse_enum_or_throw<Device>(col(EventField::Device), where);
  ev.channel = parse_enum_or_throw<Channel>(col(EventField::Channel), where);
  ev.action = parse_enum_or_throw<Action>(col(EventField::Action), where);
  ev.page_type = parse_enum_or_throw<PageType>(col(EventField::PageType), where);

  if (auto q = col(EventField::QueryText); !q.empty()) ev.query_text = std::string(q);
  if (auto p = col(EventField::PriceCents); !p.empty()) {
    const auto price = detail::parse_int<std::int64_t>(p);
    if (!price || *price < 0) {
      throw Error(Errc::MalformedLine, "price_cents '" + std::string(p) + "'", where);
    }
    ev.price_cents = *price;
  }

  const auto country = col(EventField::Country);
  if (country.size() != 2 || !std::isalpha(static_cast<unsigned char>(country[0])) ||
      !std::isalpha(static_cast<unsigned char>(country[1]))) {
    throw Error(Errc::MalformedLine, "country '" + std::string(country) + "'", where);
  }
  ev.country = {static_cast<char>(std::toupper(static_cast<unsigned char>(country[0]))),
                static_cast<char>(std::toupper(static_cast<unsigned char>(country[1])))};

  if (ev.action == Action::Query && !ev.query_text) {
    throw Error(Errc::MalformedLine, "Query action without query_text", where);
  }
  if (ev.action == Action::PageView && ev.page_type == PageType::Product && !ev.price_cents) {
    throw Error(Errc::MalformedLine, "product page view without price_cents", where);
  }
  return ev;
}

inline std::string tsv_header() {
  std::string out;
  for (std::size_t f = 0; f < kEventFieldCount; ++f) {
    if (f) out += '\t';
    out += kEventFieldNames[f];
  }
  return out;
}

/// Encode in the standard column order (no trailing newline).
inline std::string format_event_line(const RawEvent& ev) {
  auto clean = [](const std::string& s) {
    std::string out = s;
    for (char& c : out) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return out;
  };
  std::string out;
  out.reserve(96);
  out += std::to_string(ev.timestamp_ms);
  out += '\t';
  out += clean(ev.client_token);
  out += '\t';
  if (ev.customer_id) out += clean(*ev.customer_id);
  out += '\t';
  out += to_string(ev.device);
  out += '\t';
  out += to_string(ev.channel);
  out += '\t';
  out += to_string(ev.action);
  out += '\t';
  out += to_string(ev.page_type);
  out += '\t';
  if (ev.query_text) out += clean(*ev.query_text);
  out += '\t';
  if (ev.price_cents) out += std::to_string(*ev.price_cents);
  out += '\t';
  out += ev.country;
  return out;
}

}  // namespace pintent

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pintent {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  MalformedLine,
  BadTimestamp,
  UnknownEnum,
  UnsortedInput,
  StepOutOfRange,
  UnknownSymbol,
  AlphabetMismatch,
  DegenerateStd,
  MissingJourney,
  ShortSession,
  SingleClassTraining,
  NonFiniteInput,
  DimensionMismatch,
  LengthMismatch,
  TooFewSessions,
  InvalidConfig,
  VersionMismatch,
  Io,
};

inline constexpr std::string_view errc_name(Errc c) {
  constexpr std::array<std::string_view, 18> names = {
      "MalformedLine",  "BadTimestamp",        "UnknownEnum",
      "UnsortedInput",  "StepOutOfRange",      "UnknownSymbol",
      "AlphabetMismatch", "DegenerateStd",     "MissingJourney",
      "ShortSession",   "SingleClassTraining", "NonFiniteInput",
      "DimensionMismatch", "LengthMismatch",   "TooFewSessions",
      "InvalidConfig",  "VersionMismatch",     "Io"};
  return names[static_cast<std::size_t>(c)];
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::optional<std::size_t> line = {})
      : std::runtime_error(format(code, what, line)), code_(code), line_(line), detail_(what) {}

  Errc code() const noexcept { return code_; }
  /// 1-based input line, when the error came from a parser.
  std::optional<std::size_t> line() const noexcept { return line_; }
  /// The message without the code/line prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(Errc code, const std::string& what,
                            std::optional<std::size_t> line) {
    std::string out(errc_name(code));
    if (line) out += " at line " + std::to_string(*line);
    out += ": ";
    out += what;
    return out;
  }

  Errc code_;
  std::optional<std::size_t> line_;
  std::string detail_;
};

// ---------------------------------------------------------------------------
// Closed categorical alphabets
// ---------------------------------------------------------------------------

enum class Device : std::uint8_t { PC, Smartphone, Tablet, GameConsole, TV };
enum class Channel : std::uint8_t { Direct, Paid, Organic, Other };
enum class Action : std::uint8_t { PageView, Query, AddToBasket, RemoveFromBasket, Purchase };
enum class PageType : std::uint8_t { Home, Search, Product, Category, Basket, Checkout, Account, Other };

template <class E>
struct EnumTraits;

template <>
struct EnumTraits<Device> {
  static constexpr std::string_view kind = "device";
  static constexpr std::array<std::string_view, 5> names = {"PC", "Smartphone", "Tablet",
                                                            "GameConsole", "TV"};
};

template <>
struct EnumTraits<Channel> {
  static constexpr std::string_view kind = "channel";
  static constexpr std::array<std::string_view, 4> names = {"Direct", "Paid", "Organic", "Other"};
};

template <>
struct EnumTraits<Action> {
  static constexpr std::string_view kind = "action";
  static constexpr std::array<std::string_view, 5> names = {
      "PageView", "Query", "AddToBasket", "RemoveFromBasket", "Purchase"};
};

template <>
struct EnumTraits<PageType> {
  static constexpr std::string_view kind = "page_type";
  static constexpr std::array<std::string_view, 8> names = {
      "home", "search", "product", "category", "basket", "checkout", "account", "other"};
};

template <class E>
inline constexpr std::size_t enum_size = EnumTraits<E>::names.size();

template <class E>
constexpr std::string_view to_string(E value) {
  return EnumTraits<E>::names[static_cast<std::size_t>(value)];
}

template <class E>
constexpr std::size_t index_of(E value) {
  return static_cast<std::size_t>(value);
}

template <class E>
constexpr E from_index(std::size_t i) {
  return static_cast<E>(i);
}

template <class E>
constexpr std::array<E, enum_size<E>> all_values() {
  std::array<E, enum_size<E>> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<E>(i);
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

/// Case-insensitive decode; nullopt when the text is outside the alphabet.
template <class E>
std::optional<E> parse_enum(std::string_view text) {
  const auto& names = EnumTraits<E>::names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (iequals(names[i], text)) return static_cast<E>(i);
  }
  return std::nullopt;
}

template <class E>
E parse_enum_or_throw(std::string_view text, std::optional<std::size_t> line = {}) {
  if (auto v = parse_enum<E>(text)) return *v;
  throw Error(Errc::UnknownEnum,
              std::string(EnumTraits<E>::kind) + " '" + std::string(text) + "'", line);
}

enum class Label : std::uint8_t { NonPurchase = 0, Purchase = 1 };

inline constexpr std::size_t label_index(bool purchase) { return purchase ? 1 : 0; }

// ---------------------------------------------------------------------------
// Time. Timestamps are UTC milliseconds; analytics use Central European time
// (CET, UTC+1; CEST, UTC+2 between the last Sundays of March and October,
// switching at 01:00 UTC).
// ---------------------------------------------------------------------------

using TimestampMs = std::int64_t;

inline constexpr std::int64_t kSecondMs = 1000;
inline constexpr std::int64_t kMinuteMs = 60 * kSecondMs;
inline constexpr std::int64_t kHourMs = 60 * kMinuteMs;
inline constexpr std::int64_t kDayMs = 24 * kHourMs;

namespace detail {

inline std::int64_t last_sunday_utc_1am(int y, int m) {
  using namespace std::chrono;
  const sys_days month_end{year{y} / m / std::chrono::last};
  const weekday wd{month_end};
  const sys_days sunday = month_end - days{wd.c_encoding()};  // c_encoding: Sunday == 0
  return duration_cast<milliseconds>(sunday.time_since_epoch()).count() + kHourMs;
}

inline int utc_year(TimestampMs utc_ms) {
  using namespace std::chrono;
  const sys_days d = floor<days>(sys_time<milliseconds>{milliseconds{utc_ms}});
  return static_cast<int>(year_month_day{d}.year());
}

}  // namespace detail

/// Offset of Central European (summer) time from UTC at the given instant.
inline std::int64_t cet_offset_ms(TimestampMs utc_ms) {
  const int y = detail::utc_year(utc_ms);
  const auto dst_start = detail::last_sunday_utc_1am(y, 3);
  const auto dst_end = detail::last_sunday_utc_1am(y, 10);
  return (utc_ms >= dst_start && utc_ms < dst_end) ? 2 * kHourMs : kHourMs;
}

inline TimestampMs to_cet_local(TimestampMs utc_ms) { return utc_ms + cet_offset_ms(utc_ms); }

/// Inverse of to_cet_local. Ambiguous autumn wall-clock times resolve to the
/// earlier (summer time) instant; skipped spring times map forward.
inline TimestampMs from_cet_local(TimestampMs local_ms) {
  const TimestampMs summer = local_ms - 2 * kHourMs;
  if (cet_offset_ms(summer) == 2 * kHourMs) return summer;
  return local_ms - kHourMs;
}

/// Monday = 0 ... Sunday = 6, in Central European time.
inline int cet_weekday(TimestampMs utc_ms) {
  using namespace std::chrono;
  const auto local = to_cet_local(utc_ms);
  const sys_days d = floor<days>(sys_time<milliseconds>{milliseconds{local}});
  return static_cast<int>(weekday{d}.iso_encoding()) - 1;
}

inline int cet_hour(TimestampMs utc_ms) {
  const auto local = to_cet_local(utc_ms);
  auto in_day = local % kDayMs;
  if (in_day < 0) in_day += kDayMs;
  return static_cast<int>(in_day / kHourMs);
}

inline constexpr std::array<std::string_view, 7> kWeekdayNames = {
    "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"};

// ---------------------------------------------------------------------------
// Seeds. All randomness derives from one master seed through splitmix64 so
// that independent work units get stable, uncorrelated streams.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t master, Tags... tags) {
  std::uint64_t s = splitmix64(master);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

/// FNV-1a, used for content hashes in run manifests.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

}  // namespace pintent

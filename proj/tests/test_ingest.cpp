#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <zlib.h>

#include "oracles.hpp"
#include "pintent/ingest.hpp"

using namespace pintent;

namespace {

RawEvent ev(std::int64_t t, std::string client, std::optional<std::string> customer = std::nullopt,
            Action a = Action::PageView) {
  RawEvent e;
  e.timestamp_ms = t;
  e.client_token = std::move(client);
  e.customer_id = std::move(customer);
  e.action = a;
  e.country = "NL";
  return e;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pintent_ingest_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(ParseEventLine, DecodesAllFields) {
  const auto e = parse_event_line("1570000000000\tC1\tu42\tPC\tDirect\tPageView\thome\t\t\tNL");
  EXPECT_EQ(e.timestamp_ms, 1570000000000);
  EXPECT_EQ(e.client_token, "C1");
  ASSERT_TRUE(e.customer_id.has_value());
  EXPECT_EQ(*e.customer_id, "u42");
  EXPECT_EQ(e.device, Device::PC);
  EXPECT_EQ(e.channel, Channel::Direct);
  EXPECT_EQ(e.action, Action::PageView);
  EXPECT_EQ(e.page_type, PageType::Home);
  EXPECT_FALSE(e.query_text.has_value());
  EXPECT_FALSE(e.price_cents.has_value());
  EXPECT_EQ(e.country, "NL");
}

TEST(ParseEventLine, EmptyCustomerIsAnonymous) {
  const auto e = parse_event_line("1570000000000\tC1\t\tPC\tDirect\tPageView\thome\t\t\tNL");
  EXPECT_FALSE(e.customer_id.has_value());
}

TEST(ParseEventLine, EnumsAreCaseInsensitive) {
  const auto e = parse_event_line("5\tC1\t\tsmartphone\tPAID\tquery\tSEARCH\tshoes\t\tDE");
  EXPECT_EQ(e.device, Device::Smartphone);
  EXPECT_EQ(e.channel, Channel::Paid);
  EXPECT_EQ(e.action, Action::Query);
  EXPECT_EQ(e.page_type, PageType::Search);
  EXPECT_EQ(*e.query_text, "shoes");
}

TEST(ParseEventLine, ErrorsCarryCodeAndLine) {
  auto code_of = [](const std::string& line) {
    try {
      parse_event_line(line, {}, 17);
    } catch (const Error& e) {
      EXPECT_EQ(e.line(), std::optional<std::size_t>(17));
      return e.code();
    }
    ADD_FAILURE() << "no error for " << line;
    return Errc::Io;
  };
  EXPECT_EQ(code_of("abc\tC1\t\tPC\tDirect\tPageView\thome\t\t\tNL"), Errc::BadTimestamp);
  EXPECT_EQ(code_of("-5\tC1\t\tPC\tDirect\tPageView\thome\t\t\tNL"), Errc::BadTimestamp);
  EXPECT_EQ(code_of("5\tC1\t\tPC\tDirect\tPageView"), Errc::MalformedLine);
  EXPECT_EQ(code_of("5\tC1\t\tFridge\tDirect\tPageView\thome\t\t\tNL"), Errc::UnknownEnum);
}

TEST(ParseEventLine, FormatRoundTrip) {
  RawEvent e = ev(123456, "tok", "cust", Action::PageView);
  e.device = Device::Tablet;
  e.channel = Channel::Organic;
  e.page_type = PageType::Product;
  e.price_cents = 1999;
  EXPECT_EQ(parse_event_line(format_event_line(e)), e);
}

TEST(FilterEvents, KeepsAllowedInOrder) {
  BotFilterConfig cfg;
  cfg.allowed_countries = {"NL", "DE", "BE"};
  cfg.allowed_devices = {Device::PC, Device::TV};
  std::vector<RawEvent> in;
  for (int i = 0; i < 10; ++i) {
    auto e = ev(i, "c");
    e.country = (i % 4 == 1) ? "US" : "NL";
    e.device = (i == 6) ? Device::Smartphone : (i % 2 ? Device::TV : Device::PC);
    in.push_back(e);
  }
  const auto out = filter_events(in, cfg);
  std::vector<RawEvent> expected;
  for (const auto& e : in) {
    if (cfg.allowed_countries.count(e.country) && cfg.allowed_devices.count(e.device)) expected.push_back(e);
  }
  EXPECT_EQ(out.events, expected);
  EXPECT_EQ(out.dropped, in.size() - expected.size());
  EXPECT_EQ(out.events.size(), 6u);
  // Idempotent.
  EXPECT_EQ(filter_events(out.events, cfg).events, out.events);
}

TEST(BotFilterConfig, ValidatesBounds) {
  BotFilterConfig c = BotFilterConfig::defaults();
  c.min_session_events = 0;
  EXPECT_THROW(c.validate(), Error);
  c.min_session_events = 5;
  c.max_session_events = 5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Sessionize, ThirtyFiveMinuteGapSplits) {
  SessionizeOptions opt;
  opt.min_session_events = 1;
  const auto r = sessionize(std::vector<RawEvent>{ev(0, "a"), ev(10 * kMinuteMs, "a"), ev(45 * kMinuteMs, "a")}, opt);
  ASSERT_EQ(r.sessions.size(), 2u);
  EXPECT_EQ(r.sessions[0].length(), 2u);
  EXPECT_EQ(r.sessions[1].length(), 1u);
}

TEST(Sessionize, GapsUpToThirtyMinutesStayTogether) {
  SessionizeOptions opt;
  opt.min_session_events = 1;
  const auto r = sessionize(std::vector<RawEvent>{ev(0, "a"), ev(29 * kMinuteMs, "a"), ev(58 * kMinuteMs, "a"),
                                                  ev(88 * kMinuteMs, "a")},
                            opt);
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].length(), 4u);
}

TEST(Sessionize, LateLoginIdentifiesWholeSession) {
  const auto r = sessionize(std::vector<RawEvent>{ev(0, "a"), ev(1000, "a"), ev(2000, "a"), ev(3000, "a", "u7")});
  ASSERT_EQ(r.sessions.size(), 1u);
  ASSERT_TRUE(r.sessions[0].customer_id().has_value());
  EXPECT_EQ(*r.sessions[0].customer_id(), "u7");
}

TEST(Sessionize, LabelAndLengthFilter) {
  SessionizeOptions opt;
  opt.min_session_events = 2;
  opt.max_session_events = 3;
  const auto r = sessionize(std::vector<RawEvent>{ev(0, "a"), ev(1, "a", std::nullopt, Action::Purchase),
                                                  ev(0, "b"), ev(0, "c"), ev(1, "c"), ev(2, "c"), ev(3, "c")},
                            opt);
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_TRUE(r.sessions[0].purchase());
  EXPECT_EQ(r.dropped_sessions, 2u);
}

TEST(Sessionize, RejectsDecreasingTimestamps) {
  try {
    sessionize(std::vector<RawEvent>{ev(10, "a"), ev(5, "a")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsortedInput);
  }
}

TEST(Sessionize, MatchesBruteForceOnRandomStreams) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto events = oracle::random_stream(rng, 120);
    SessionizeOptions opt;
    const auto got = sessionize(events, opt).sessions;
    const auto want = oracle::sessionize(events, opt.idle_gap_ms, opt.min_session_events, opt.max_session_events);
    ASSERT_EQ(got.size(), want.size());
    std::multiset<std::tuple<std::string, std::int64_t, std::size_t, bool, std::string>> a, b;
    for (const auto& s : got) {
      a.insert({s.client_token(), s.start_ms(), s.length(), s.purchase(), s.customer_id().value_or("")});
    }
    for (const auto& s : want) {
      b.insert({s.client, events[s.members.front()].timestamp_ms, s.members.size(), s.purchase, s.customer});
    }
    ASSERT_EQ(a, b);
    // Partition: surviving events are exactly the union of the sessions.
    std::size_t total = 0;
    for (const auto& s : got) total += s.length();
    std::size_t want_total = 0;
    for (const auto& s : want) want_total += s.members.size();
    EXPECT_EQ(total, want_total);
  }
}

TEST(SplitByIdentity, PartitionsByCustomer) {
  std::vector<RawEvent> events;
  for (int i = 0; i < 10; ++i) {
    const std::string c = "c" + std::to_string(i);
    std::optional<std::string> cust = i < 6 ? std::nullopt : std::optional<std::string>("u" + std::to_string(i));
    events.push_back(ev(0, c, cust));
    events.push_back(ev(1, c, cust));
  }
  const auto s = sessionize(events).sessions;
  const auto split = split_by_identity(s);
  EXPECT_EQ(split.anonymous.size(), 6u);
  EXPECT_EQ(split.identified.size(), 4u);
  const auto empty = split_by_identity(std::vector<Session>{});
  EXPECT_TRUE(empty.anonymous.empty());
  EXPECT_TRUE(empty.identified.empty());
}

TEST(ReadEventLog, PlainAndGzipWithHeader) {
  std::string body = tsv_header() + "\n";
  body += format_event_line(ev(1000, "a", "u1")) + "\n";
  body += format_event_line(ev(2000, "a")) + "\n";
  const auto plain = temp_file("log.tsv");
  {
    std::ofstream os(plain);
    os << body;
  }
  const auto gz = temp_file("log.tsv.gz");
  gzFile f = gzopen(gz.string().c_str(), "wb");
  gzwrite(f, body.data(), static_cast<unsigned>(body.size()));
  gzclose(f);
  const auto a = read_event_log(plain.string());
  const auto b = read_event_log(gz.string());
  ASSERT_EQ(a.events.size(), 2u);
  EXPECT_EQ(a.events, b.events);
}

TEST(ReadEventLog, ReorderedHeaderColumns) {
  const auto p = temp_file("reordered.tsv");
  {
    std::ofstream os(p);
    os << "client_token\ttimestamp_ms\tcustomer_id\tdevice\tchannel\taction\tpage_type\tquery_text\tprice_cents\tcountry\n";
    os << "a\t1000\t\tTV\tOther\tPageView\tother\t\t\tFR\n";
  }
  const auto r = read_event_log(p.string());
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].timestamp_ms, 1000);
  EXPECT_EQ(r.events[0].device, Device::TV);
}

TEST(ReadEventLog, MalformedLineReportsLineNumberOrIsSkipped) {
  const auto p = temp_file("bad.tsv");
  {
    std::ofstream os(p);
    os << format_event_line(ev(1000, "a")) << "\n";
    os << "1000\ta\n";
    os << format_event_line(ev(2000, "a")) << "\n";
  }
  try {
    read_event_log(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedLine);
    EXPECT_EQ(e.line(), std::optional<std::size_t>(2));
  }
  const auto r = read_event_log(p.string(), true);
  EXPECT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.malformed, 1u);
}

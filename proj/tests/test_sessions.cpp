#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pintent/session.hpp"

using namespace pintent;

namespace {

RawEvent ev(std::int64_t t_ms, Action a = Action::PageView, Device d = Device::PC) {
  RawEvent e;
  e.timestamp_ms = t_ms;
  e.client_token = "tok";
  e.action = a;
  e.device = d;
  e.country = "NL";
  if (a == Action::Query) e.query_text = "q";
  return e;
}

Session session_of(std::vector<RawEvent> events) { return Session::from_events(std::move(events)); }

JourneyEntry entry(std::string id, Device d, std::int64_t start, std::int64_t end, bool purchase) {
  return {std::move(id), d, start, end, purchase};
}

}  // namespace

TEST(Session, InvariantsAndDerivedFields) {
  const auto s = session_of({ev(0), ev(1000, Action::Query), ev(2000), ev(3000, Action::Purchase)});
  EXPECT_EQ(s.length(), 4u);
  EXPECT_EQ(s.page_count(), 2u);
  EXPECT_TRUE(s.purchase());
  EXPECT_EQ(s.id(), "tok:0");
  EXPECT_THROW(session_of({}), Error);
  EXPECT_THROW(session_of({ev(10), ev(5)}), Error);
  auto other = ev(20);
  other.client_token = "x";
  EXPECT_THROW(session_of({ev(10), other}), Error);
}

TEST(DwellTimes, NextActionDifferences) {
  const auto s = session_of({ev(0), ev(30'000), ev(45'000, Action::Query)});
  EXPECT_EQ(dwell_times(s), (std::vector<double>{30, 15}));
  EXPECT_TRUE(dwell_times(session_of({ev(0)})).empty());
}

TEST(DwellTimes, MatchesPairwiseDifferencesOnRandomSessions) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> gap(0, 100'000);
  std::bernoulli_distribution is_page(0.7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RawEvent> events;
    std::int64_t t = 0;
    for (int i = 0; i < 10; ++i) {
      events.push_back(ev(t, is_page(rng) ? Action::PageView : Action::Query));
      t += gap(rng);
    }
    std::vector<double> want;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
      if (events[i].action == Action::PageView) {
        want.push_back(double(events[i + 1].timestamp_ms - events[i].timestamp_ms) / 1000.0);
      }
    }
    EXPECT_EQ(dwell_times(session_of(events)), want);
  }
}

TEST(DwellStats, ExpandingWindow) {
  const auto s = session_of({ev(0), ev(30'000), ev(45'000, Action::Query)});
  const auto two = dwell_stats_at_step(s, 2);
  EXPECT_DOUBLE_EQ(two.mean, 22.5);
  EXPECT_DOUBLE_EQ(two.std, 7.5);
  EXPECT_EQ(two.count, 2u);
  EXPECT_EQ(dwell_stats_at_step(s, 0), (DwellStats{0, 0, 0}));
  const auto one = dwell_stats_at_step(s, 1);
  EXPECT_DOUBLE_EQ(one.mean, 30);
  EXPECT_DOUBLE_EQ(one.std, 0);
  try {
    dwell_stats_at_step(s, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StepOutOfRange);
  }
}

TEST(DwellStats, ConsistentWithRecomputationAtEveryStep) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::int64_t> gap(1, 200'000);
  std::vector<RawEvent> events;
  std::int64_t t = 0;
  for (int i = 0; i < 15; ++i) {
    events.push_back(ev(t));
    t += gap(rng);
  }
  const auto s = session_of(events);
  const auto all = dwell_times(s);
  for (std::size_t k = 0; k <= s.page_count(); ++k) {
    std::vector<double> w(all.begin(), all.begin() + static_cast<long>(std::min(k, all.size())));
    double m = 0;
    for (double x : w) m += x;
    m = w.empty() ? 0 : m / double(w.size());
    double v = 0;
    for (double x : w) v += (x - m) * (x - m);
    const double sd = w.empty() ? 0 : std::sqrt(v / double(w.size()));
    const auto st = dwell_stats_at_step(s, k);
    EXPECT_NEAR(st.mean, m, 1e-9);
    EXPECT_NEAR(st.std, sd, 1e-9);
  }
}

TEST(DeviceSwitches, PairsAndProbability) {
  const auto j = Journey::build("u", {entry("a", Device::PC, 0, 1, false), entry("b", Device::PC, 10 * kHourMs, 10 * kHourMs + 1, false),
                                      entry("c", Device::Smartphone, 20 * kHourMs, 20 * kHourMs + 1, true)});
  const auto sw = device_switches(j);
  ASSERT_EQ(sw.pairs.size(), 2u);
  EXPECT_EQ(sw.pairs[1], std::make_pair(Device::PC, Device::Smartphone));
  EXPECT_DOUBLE_EQ(sw.switch_probability, 0.5);
  EXPECT_DOUBLE_EQ(device_switches(Journey::build("u", {entry("a", Device::TV, 0, 1, false)})).switch_probability, 0.0);
  EXPECT_DOUBLE_EQ(device_switches_of(std::vector<Device>{Device::PC, Device::TV, Device::PC, Device::TV}).switch_probability, 1.0);
}

TEST(DeviceSwitches, RandomJourneyMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dev(0, 2);
  std::vector<Device> d;
  for (int i = 0; i < 50; ++i) d.push_back(from_index<Device>(dev(rng)));
  std::size_t differ = 0;
  for (std::size_t i = 1; i < d.size(); ++i) differ += d[i] != d[i - 1];
  EXPECT_DOUBLE_EQ(device_switches_of(d).switch_probability, double(differ) / 49.0);
}

TEST(Journey, GapsAndOrdering) {
  const auto j = Journey::build("u", {entry("b", Device::PC, 5 * kHourMs, 6 * kHourMs, false), entry("a", Device::PC, 0, kHourMs, false)});
  EXPECT_EQ(j.sessions[0].session_id, "a");
  ASSERT_EQ(j.gaps_ms.size(), 1u);
  EXPECT_EQ(j.gaps_ms[0], 4 * kHourMs);
}

TEST(HistorySnapshot, CountsStrictlyEarlierSessions) {
  const std::int64_t at = 100 * kDayMs;
  std::vector<JourneyEntry> entries;
  // 7 earlier sessions, purchases ending 10 and 3 days before `at`, devices {PC, Tablet}.
  for (int i = 0; i < 7; ++i) {
    const std::int64_t end = at - (20 - 2 * i) * kDayMs;
    entries.push_back(entry("s" + std::to_string(i), i % 2 ? Device::Tablet : Device::PC, end - kHourMs, end, false));
  }
  entries[2].end_ms = at - 10 * kDayMs;
  entries[2].start_ms = entries[2].end_ms - kHourMs;
  entries[2].purchase = true;
  entries[6].end_ms = at - 3 * kDayMs;
  entries[6].start_ms = entries[6].end_ms - kHourMs;
  entries[6].purchase = true;
  // A later session that must not count.
  entries.push_back(entry("late", Device::TV, at + kHourMs, at + 2 * kHourMs, true));
  const auto h = history_snapshot(Journey::build("u", entries), at);
  EXPECT_EQ(h.orders, 2u);
  EXPECT_DOUBLE_EQ(h.days_since_last_purchase, 3.0);
  EXPECT_EQ(h.sessions, 7u);
  EXPECT_EQ(h.devices, 2u);
}

TEST(HistorySnapshot, NoPriorPurchaseSentinelAndFutureInvariance) {
  std::vector<JourneyEntry> entries = {entry("a", Device::PC, 0, kHourMs, false)};
  const auto before = history_snapshot(Journey::build("u", entries), 10 * kHourMs);
  EXPECT_DOUBLE_EQ(before.days_since_last_purchase, -1.0);
  entries.push_back(entry("b", Device::TV, 20 * kHourMs, 21 * kHourMs, true));
  const auto after = history_snapshot(Journey::build("u", entries), 10 * kHourMs);
  EXPECT_EQ(before.orders, after.orders);
  EXPECT_EQ(before.sessions, after.sessions);
  EXPECT_EQ(before.device_sequence, after.device_sequence);
}

TEST(HistorySnapshot, RandomJourneyMatchesRecount) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dev(0, 4);
  std::bernoulli_distribution buy(0.3);
  std::vector<JourneyEntry> entries;
  std::int64_t t = 0;
  for (int i = 0; i < 30; ++i) {
    t += 2 * kHourMs + static_cast<std::int64_t>(rng() % kDayMs);
    entries.push_back(entry("s" + std::to_string(i), from_index<Device>(dev(rng)), t, t + kHourMs, buy(rng)));
  }
  const auto j = Journey::build("u", entries);
  for (int probe = 0; probe < 20; ++probe) {
    const std::int64_t at = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(t + 2 * kHourMs));
    std::size_t orders = 0, sessions = 0;
    std::set<Device> devices;
    std::int64_t last = -1;
    for (const auto& e : entries) {
      if (e.end_ms < at) {
        ++sessions;
        devices.insert(e.device);
        if (e.purchase) {
          ++orders;
          last = std::max(last, e.end_ms);
        }
      }
    }
    const auto h = history_snapshot(j, at);
    EXPECT_EQ(h.orders, orders);
    EXPECT_EQ(h.sessions, sessions);
    EXPECT_EQ(h.devices, devices.size());
    EXPECT_DOUBLE_EQ(h.days_since_last_purchase, last < 0 ? -1.0 : double(at - last) / double(kDayMs));
  }
}

TEST(SessionsJsonl, RoundTrip) {
  auto e1 = ev(0);
  e1.page_type = PageType::Product;
  e1.price_cents = 500;
  auto e2 = ev(5000, Action::Query);
  e2.customer_id = "u1";
  const std::vector<Session> in = {session_of({e1, e2})};
  std::stringstream ss;
  write_sessions_jsonl(ss, in);
  const auto out = read_sessions_jsonl(ss);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].events(), in[0].events());
  EXPECT_EQ(out[0].customer_id(), in[0].customer_id());
  std::stringstream bad("{\"client_token\": 3}\n");
  EXPECT_THROW(read_sessions_jsonl(bad), Error);
}

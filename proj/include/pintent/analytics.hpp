#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/common.hpp"
#include "pintent/markov.hpp"
#include "pintent/session.hpp"

namespace pintent {

// ---------------------------------------------------------------------------
// Conversion rates
// ---------------------------------------------------------------------------

/// (rate - mean) / sigma across keys, sigma being the population standard
/// deviation. Throws DegenerateStd when every rate is the same.
inline std::vector<double> standardize(std::span<const double> rates) {
  if (rates.empty()) return {};
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= static_cast<double>(rates.size());
  double ss = 0.0;
  for (double r : rates) ss += (r - mean) * (r - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(rates.size()));
  if (!(sigma > 1e-15)) throw Error(Errc::DegenerateStd, "all conversion rates are equal");
  std::vector<double> out;
  out.reserve(rates.size());
  for (double r : rates) out.push_back((r - mean) / sigma);
  return out;
}

struct ConversionRow {
  std::string key;
  std::size_t purchase_sessions = 0;
  std::size_t total_sessions = 0;
  double conversion_rate = 0.0;
  std::optional<double> standardized;  // empty when the report is degenerate
};

struct ConversionReport {
  std::vector<ConversionRow> rows;
  bool degenerate = false;

  const ConversionRow* find(std::string_view key) const {
    for (const auto& r : rows) {
      if (r.key == key) return &r;
    }
    return nullptr;
  }
};

/// Build a report from per-key (purchase, total) counts; keys without
/// sessions are omitted.
inline ConversionReport conversion_report(std::span<const std::string> keys,
                                          std::span<const std::size_t> purchases,
                                          std::span<const std::size_t> totals) {
  ConversionReport rep;
  std::vector<double> rates;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (totals[i] == 0) continue;
    const double rate = static_cast<double>(purchases[i]) / static_cast<double>(totals[i]);
    rep.rows.push_back({keys[i], purchases[i], totals[i], rate, std::nullopt});
    rates.push_back(rate);
  }
  if (rates.empty()) return rep;
  try {
    const auto z = standardize(rates);
    for (std::size_t i = 0; i < z.size(); ++i) rep.rows[i].standardized = z[i];
  } catch (const Error&) {
    rep.degenerate = true;
  }
  return rep;
}

enum class ConversionKey { Device, Channel };

inline ConversionReport conversion_rates(std::span<const Session> sessions, ConversionKey key) {
  const bool by_device = key == ConversionKey::Device;
  const std::size_t n = by_device ? enum_size<Device> : enum_size<Channel>;
  std::vector<std::size_t> purchases(n, 0), totals(n, 0);
  for (const auto& s : sessions) {
    const std::size_t k = by_device ? index_of(s.device()) : index_of(s.channel());
    ++totals[k];
    if (s.purchase()) ++purchases[k];
  }
  std::vector<std::string> keys;
  for (std::size_t k = 0; k < n; ++k) {
    keys.emplace_back(by_device ? to_string(from_index<Device>(k)) : to_string(from_index<Channel>(k)));
  }
  return conversion_report(keys, purchases, totals);
}

// ---------------------------------------------------------------------------
// Session length CCDF
// ---------------------------------------------------------------------------

struct Ccdf {
  std::vector<std::size_t> support;  // distinct observed values, ascending
  std::vector<double> tail;          // P(L >= support[i])

  /// P(L >= x) for any x.
  double at(std::size_t x) const {
    auto it = std::lower_bound(support.begin(), support.end(), x);
    if (it == support.end()) return 0.0;
    return tail[static_cast<std::size_t>(it - support.begin())];
  }
};

inline Ccdf empirical_ccdf(std::vector<std::size_t> values) {
  Ccdf c;
  if (values.empty()) return c;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i == 0 || values[i] != values[i - 1]) {
      c.support.push_back(values[i]);
      c.tail.push_back(static_cast<double>(values.size() - i) / n);
    }
  }
  return c;
}

struct CcdfGroup {
  Device device;
  bool purchase;
  std::size_t sessions;
  Ccdf ccdf;
};

/// Session-length CCDF per (device, label); groups without sessions are omitted.
inline std::vector<CcdfGroup> session_length_ccdf(std::span<const Session> sessions) {
  std::array<std::array<std::vector<std::size_t>, 2>, enum_size<Device>> lengths;
  for (const auto& s : sessions) lengths[index_of(s.device())][label_index(s.purchase())].push_back(s.length());
  std::vector<CcdfGroup> out;
  for (std::size_t d = 0; d < lengths.size(); ++d) {
    for (int label = 1; label >= 0; --label) {
      auto& v = lengths[d][static_cast<std::size_t>(label)];
      if (v.empty()) continue;
      const auto n = v.size();
      out.push_back({from_index<Device>(d), label == 1, n, empirical_ccdf(std::move(v))});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal profiles
// ---------------------------------------------------------------------------

enum class TemporalAxis { Weekday, Hour };

struct TemporalProfile {
  TemporalAxis axis = TemporalAxis::Weekday;
  /// Indexed by label (0 non-purchase, 1 purchase); each vector sums to 1
  /// unless the label has no sessions.
  std::array<std::vector<double>, 2> fractions;
  std::array<std::vector<std::size_t>, 2> counts;
};

/// Distribution of session start weekday or hour (Central European time),
/// normalised within each label.
inline TemporalProfile temporal_profile(std::span<const Session> sessions, TemporalAxis axis) {
  const std::size_t bins = axis == TemporalAxis::Weekday ? 7 : 24;
  TemporalProfile p;
  p.axis = axis;
  for (auto& c : p.counts) c.assign(bins, 0);
  for (const auto& s : sessions) {
    const int b = axis == TemporalAxis::Weekday ? cet_weekday(s.start_ms()) : cet_hour(s.start_ms());
    ++p.counts[label_index(s.purchase())][static_cast<std::size_t>(b)];
  }
  for (std::size_t l = 0; l < 2; ++l) {
    std::size_t total = 0;
    for (auto c : p.counts[l]) total += c;
    p.fractions[l].assign(bins, 0.0);
    if (total == 0) continue;
    for (std::size_t b = 0; b < bins; ++b) {
      p.fractions[l][b] = static_cast<double>(p.counts[l][b]) / static_cast<double>(total);
    }
  }
  return p;
}

/// Sum of the k largest entries.
inline double top_k_mass(std::vector<double> fractions, std::size_t k) {
  std::sort(fractions.begin(), fractions.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(k, fractions.size()); ++i) s += fractions[i];
  return s;
}

// ---------------------------------------------------------------------------
// Categorical mixes (channel, device) per label
// ---------------------------------------------------------------------------

template <class E>
struct CategoryMix {
  std::array<std::array<std::size_t, enum_size<E>>, 2> counts{};
  std::array<std::array<double, enum_size<E>>, 2> fractions{};  // within label
  ConversionReport conversion;
};

template <class E, class KeyFn>
CategoryMix<E> category_mix(std::span<const Session> sessions, KeyFn key) {
  CategoryMix<E> m;
  for (const auto& s : sessions) ++m.counts[label_index(s.purchase())][index_of(key(s))];
  for (std::size_t l = 0; l < 2; ++l) {
    std::size_t total = 0;
    for (auto c : m.counts[l]) total += c;
    if (total == 0) continue;
    for (std::size_t k = 0; k < enum_size<E>; ++k) {
      m.fractions[l][k] = static_cast<double>(m.counts[l][k]) / static_cast<double>(total);
    }
  }
  std::vector<std::string> keys;
  std::vector<std::size_t> purchases, totals;
  for (std::size_t k = 0; k < enum_size<E>; ++k) {
    keys.emplace_back(to_string(from_index<E>(k)));
    purchases.push_back(m.counts[1][k]);
    totals.push_back(m.counts[0][k] + m.counts[1][k]);
  }
  m.conversion = conversion_report(keys, purchases, totals);
  return m;
}

inline CategoryMix<Channel> channel_mix(std::span<const Session> sessions) {
  return category_mix<Channel>(sessions, [](const Session& s) { return s.channel(); });
}

inline CategoryMix<Device> device_mix(std::span<const Session> sessions) {
  return category_mix<Device>(sessions, [](const Session& s) { return s.device(); });
}

// ---------------------------------------------------------------------------
// Device ownership
// ---------------------------------------------------------------------------

struct OwnershipGroup {
  std::size_t customers = 0;
  std::array<std::size_t, 4> histogram{};  // 1, 2, 3, 4+ devices
  std::array<double, 4> fractions{};
  double multi_device_share = 0.0;
};

struct OwnershipReport {
  OwnershipGroup purchasers;      // at least one purchase session
  OwnershipGroup non_purchasers;
};

inline OwnershipReport device_ownership(std::span<const Journey> journeys) {
  OwnershipReport rep;
  for (const auto& j : journeys) {
    if (j.sessions.empty()) continue;
    std::set<Device> devices;
    bool purchaser = false;
    for (const auto& e : j.sessions) {
      devices.insert(e.device);
      purchaser = purchaser || e.purchase;
    }
    auto& g = purchaser ? rep.purchasers : rep.non_purchasers;
    ++g.customers;
    ++g.histogram[std::min<std::size_t>(devices.size(), 4) - 1];
  }
  for (auto* g : {&rep.purchasers, &rep.non_purchasers}) {
    if (g->customers == 0) continue;
    for (std::size_t i = 0; i < 4; ++i) {
      g->fractions[i] = static_cast<double>(g->histogram[i]) / static_cast<double>(g->customers);
    }
    g->multi_device_share =
        static_cast<double>(g->customers - g->histogram[0]) / static_cast<double>(g->customers);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

struct QueryCell {
  std::size_t sessions = 0;
  std::size_t queries = 0;
  std::size_t unique_queries = 0;
  double queries_per_session = 0.0;
  double query_share = 0.0;  // of all queries issued in sessions with this label
};

struct QueryStats {
  std::array<std::array<QueryCell, enum_size<Device>>, 2> per_device{};
  std::array<QueryCell, 2> overall{};  // per label, all devices
};

inline QueryStats query_stats(std::span<const Session> sessions) {
  QueryStats qs;
  std::array<std::array<std::set<std::string>, enum_size<Device>>, 2> distinct;
  std::array<std::set<std::string>, 2> distinct_all;
  for (const auto& s : sessions) {
    const auto l = label_index(s.purchase());
    auto& cell = qs.per_device[l][index_of(s.device())];
    ++cell.sessions;
    ++qs.overall[l].sessions;
    for (const auto& ev : s.events()) {
      if (ev.action != Action::Query) continue;
      ++cell.queries;
      ++qs.overall[l].queries;
      const std::string text = ev.query_text.value_or("");
      distinct[l][index_of(s.device())].insert(text);
      distinct_all[l].insert(text);
    }
  }
  for (std::size_t l = 0; l < 2; ++l) {
    auto& all = qs.overall[l];
    all.unique_queries = distinct_all[l].size();
    if (all.sessions) all.queries_per_session = static_cast<double>(all.queries) / static_cast<double>(all.sessions);
    all.query_share = all.queries ? 1.0 : 0.0;
    for (std::size_t d = 0; d < enum_size<Device>; ++d) {
      auto& c = qs.per_device[l][d];
      c.unique_queries = distinct[l][d].size();
      if (c.sessions) c.queries_per_session = static_cast<double>(c.queries) / static_cast<double>(c.sessions);
      if (all.queries) c.query_share = static_cast<double>(c.queries) / static_cast<double>(all.queries);
    }
  }
  return qs;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos) {
    s.erase(0, s.find_first_not_of('-'));  // no "-0.00"
  }
  return s;
}

inline std::string pct(double fraction) { return fixed(100.0 * fraction, 2); }

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + p.string());
  return os;
}

inline const char* label_name(std::size_t l) { return l ? "purchase" : "non_purchase"; }

}  // namespace detail

struct AnalyticsReport {
  std::vector<CcdfGroup> ccdf;
  TemporalProfile weekday;
  TemporalProfile hour;
  CategoryMix<Channel> channels;
  CategoryMix<Device> devices;
  OwnershipReport ownership;
  DeviceTransitionMatrix transitions;
  QueryStats queries;
};

inline AnalyticsReport analyze(std::span<const Session> sessions) {
  AnalyticsReport r;
  r.ccdf = session_length_ccdf(sessions);
  r.weekday = temporal_profile(sessions, TemporalAxis::Weekday);
  r.hour = temporal_profile(sessions, TemporalAxis::Hour);
  r.channels = channel_mix(sessions);
  r.devices = device_mix(sessions);
  const auto journeys = journey_list(build_journeys(sessions));
  r.ownership = device_ownership(journeys);
  r.transitions = transition_matrix(journeys, TransitionCondition::NextIsPurchase);
  r.queries = query_stats(sessions);
  return r;
}

template <class E>
void write_mix_csv(std::ostream& os, const CategoryMix<E>& mix, std::string_view key_name) {
  os << key_name
     << ",purchase_sessions,non_purchase_sessions,purchase_pct,non_purchase_pct,"
        "conversion_rate_pct,standardized_conversion_rate\n";
  for (std::size_t k = 0; k < enum_size<E>; ++k) {
    const auto name = to_string(from_index<E>(k));
    const auto* row = mix.conversion.find(name);
    if (!row) continue;
    os << name << ',' << mix.counts[1][k] << ',' << mix.counts[0][k] << ','
       << detail::pct(mix.fractions[1][k]) << ',' << detail::pct(mix.fractions[0][k]) << ','
       << detail::pct(row->conversion_rate) << ','
       << (row->standardized ? detail::fixed(*row->standardized, 2) : std::string()) << '\n';
  }
}

/// Write every characterisation table as CSV plus a combined report.json.
/// Fractions are normalised within label; percentages carry two decimals.
inline void write_analytics(const AnalyticsReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "ccdf.csv");
    os << "device,label,length,tail\n";
    for (const auto& g : r.ccdf) {
      for (std::size_t i = 0; i < g.ccdf.support.size(); ++i) {
        os << to_string(g.device) << ',' << detail::label_name(g.purchase) << ','
           << g.ccdf.support[i] << ',' << detail::fixed(g.ccdf.tail[i], 6) << '\n';
      }
    }
  }
  auto temporal = [&](const TemporalProfile& p, const char* file, const char* key) {
    auto os = detail::open_out(dir / file);
    os << key << ",purchase_pct,non_purchase_pct\n";
    const auto bins = p.fractions[0].size();
    for (std::size_t b = 0; b < bins; ++b) {
      if (p.axis == TemporalAxis::Weekday) {
        os << kWeekdayNames[b];
      } else {
        os << b;
      }
      os << ',' << detail::pct(p.fractions[1][b]) << ',' << detail::pct(p.fractions[0][b]) << '\n';
    }
  };
  temporal(r.weekday, "weekday.csv", "weekday");
  temporal(r.hour, "hour.csv", "hour_cet");
  {
    auto os = detail::open_out(dir / "channels.csv");
    write_mix_csv(os, r.channels, "channel");
  }
  {
    auto os = detail::open_out(dir / "devices.csv");
    write_mix_csv(os, r.devices, "device");
  }
  {
    auto os = detail::open_out(dir / "ownership.csv");
    os << "group,customers,one_device_pct,two_devices_pct,three_devices_pct,"
          "four_plus_devices_pct,multi_device_pct\n";
    auto row = [&](const char* name, const OwnershipGroup& g) {
      if (g.customers == 0) return;
      os << name << ',' << g.customers;
      for (double f : g.fractions) os << ',' << detail::pct(f);
      os << ',' << detail::pct(g.multi_device_share) << '\n';
    };
    row("purchasers", r.ownership.purchasers);
    row("non_purchasers", r.ownership.non_purchasers);
  }
  {
    auto os = detail::open_out(dir / "transitions.csv");
    os << "from_device,to_device,pairs,probability\n";
    for (std::size_t a = 0; a < DeviceTransitionMatrix::kN; ++a) {
      if (!r.transitions.rows[a]) continue;
      for (std::size_t b = 0; b < DeviceTransitionMatrix::kN; ++b) {
        os << to_string(from_index<Device>(a)) << ',' << to_string(from_index<Device>(b)) << ','
           << r.transitions.counts[a][b] << ',' << detail::fixed((*r.transitions.rows[a])[b], 4)
           << '\n';
      }
    }
  }
  {
    auto os = detail::open_out(dir / "queries.csv");
    // query_share_pct: share of the label's queries (per-label base).
    os << "device,label,sessions,queries,queries_per_session,unique_queries,query_share_pct\n";
    for (std::size_t l = 2; l-- > 0;) {
      for (std::size_t d = 0; d < enum_size<Device>; ++d) {
        const auto& c = r.queries.per_device[l][d];
        if (c.sessions == 0) continue;
        os << to_string(from_index<Device>(d)) << ',' << detail::label_name(l) << ',' << c.sessions
           << ',' << c.queries << ',' << detail::fixed(c.queries_per_session, 4) << ','
           << c.unique_queries << ',' << detail::pct(c.query_share) << '\n';
      }
      const auto& a = r.queries.overall[l];
      if (a.sessions == 0) continue;
      os << "All," << detail::label_name(l) << ',' << a.sessions << ',' << a.queries << ','
         << detail::fixed(a.queries_per_session, 4) << ',' << a.unique_queries << ','
         << detail::pct(a.query_share) << '\n';
    }
  }

  nlohmann::json j;
  auto mix_json = [](const auto& mix) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : mix.conversion.rows) {
      rows.push_back({{"key", row.key},
                      {"purchase_sessions", row.purchase_sessions},
                      {"total_sessions", row.total_sessions},
                      {"conversion_rate", row.conversion_rate},
                      {"standardized", row.standardized ? nlohmann::json(*row.standardized)
                                                        : nlohmann::json()}});
    }
    return nlohmann::json{{"purchase_fractions", mix.fractions[1]},
                          {"non_purchase_fractions", mix.fractions[0]},
                          {"conversion", rows},
                          {"degenerate", mix.conversion.degenerate}};
  };
  j["channels"] = mix_json(r.channels);
  j["devices"] = mix_json(r.devices);
  j["weekday"] = {{"purchase", r.weekday.fractions[1]}, {"non_purchase", r.weekday.fractions[0]}};
  j["hour"] = {{"purchase", r.hour.fractions[1]}, {"non_purchase", r.hour.fractions[0]}};
  auto own = [](const OwnershipGroup& g) {
    return nlohmann::json{{"customers", g.customers},
                          {"fractions", g.fractions},
                          {"multi_device_share", g.multi_device_share}};
  };
  j["ownership"] = {{"purchasers", own(r.ownership.purchasers)},
                    {"non_purchasers", own(r.ownership.non_purchasers)}};
  j["queries"] = {{"purchase_per_session", r.queries.overall[1].queries_per_session},
                  {"non_purchase_per_session", r.queries.overall[0].queries_per_session},
                  {"purchase_unique", r.queries.overall[1].unique_queries},
                  {"non_purchase_unique", r.queries.overall[0].unique_queries}};
  auto os = detail::open_out(dir / "report.json");
  os << j.dump(2) << '\n';
}

}  // namespace pintent

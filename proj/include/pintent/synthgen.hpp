#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "pintent/common.hpp"
#include "pintent/config.hpp"
#include "pintent/event.hpp"

namespace pintent {

inline constexpr std::size_t kDevices = enum_size<Device>;
inline constexpr std::size_t kChannels = enum_size<Channel>;
inline constexpr std::size_t kPageTypes = enum_size<PageType>;

template <std::size_t N>
using Mix = std::array<double, N>;
template <std::size_t N>
using Stochastic = std::array<std::array<double, N>, N>;
template <class T>
using PerLabel = std::array<T, 2>;  // [non-purchase, purchase]

enum class DeviceMode : std::uint8_t { Ownership, Transition };

template <>
struct EnumTraits<DeviceMode> {
  static constexpr std::string_view kind = "device_mode";
  static constexpr std::array<std::string_view, 2> names = {"ownership", "transition"};
};

namespace detail {

template <std::size_t N>
Mix<N> normalize_mix(const std::array<double, N>& raw) {
  Mix<N> m{};
  const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
  for (std::size_t i = 0; i < N; ++i) m[i] = raw[i] / s;
  return m;
}

template <std::size_t N>
Mix<N> lerp(const Mix<N>& a, const Mix<N>& b, double t) {
  Mix<N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = (1 - t) * a[i] + t * b[i];
  return out;
}

/// Evening-peaked start-hour profile.
inline Mix<24> hour_profile(double evening_weight) {
  std::array<double, 24> w{};
  for (int h = 0; h < 24; ++h) {
    double base = (h < 6) ? 0.25 : (h < 9 ? 0.8 : 1.0);
    if (h >= 18 && h <= 22) base += evening_weight;
    w[static_cast<std::size_t>(h)] = base;
  }
  return normalize_mix(w);
}

inline Stochastic<kPageTypes> default_page_chain() {
  // home, search, product, category, basket, checkout, account, other
  return {{
      {.05, .20, .25, .35, .05, .00, .05, .05},
      {.05, .20, .55, .15, .00, .00, .00, .05},
      {.10, .15, .35, .20, .15, .00, .00, .05},
      {.10, .10, .50, .25, .00, .00, .00, .05},
      {.10, .00, .30, .10, .10, .40, .00, .00},
      {.40, .00, .30, .00, .00, .00, .20, .10},
      {.50, .00, .20, .20, .00, .00, .10, .00},
      {.50, .00, .20, .20, .00, .00, .00, .10},
  }};
}

/// Row i moves to (i + shift) mod n with probability `peak`.
inline Stochastic<kPageTypes> cyclic_chain(std::size_t shift, double peak) {
  Stochastic<kPageTypes> m{};
  for (std::size_t i = 0; i < kPageTypes; ++i) {
    for (std::size_t j = 0; j < kPageTypes; ++j) {
      m[i][j] = (j == (i + shift) % kPageTypes) ? peak : (1 - peak) / (kPageTypes - 1);
    }
  }
  return m;
}

}  // namespace detail

struct GenConfig {
  std::uint64_t seed = 1;
  std::size_t n_customers = 1000;  // identified customers
  double anonymous_share = 0.565;
  double anonymous_purchase_rate = 0.08;
  double purchaser_share = 0.3;          // of identified customers
  double purchase_probability = 0.45;    // per session of a purchaser
  PerLabel<double> sessions_mean = {2.0, 4.0};  // per customer, [non-purchaser, purchaser]
  double late_login_share = 0.2;
  double bot_share = 0.0;

  PerLabel<double> length_mean = {6.16, 48.14};
  PerLabel<double> length_dispersion = {1.0, 2.5};

  PerLabel<Mix<kDevices>> device_mix = {
      detail::normalize_mix<kDevices>({.3440, .58094, .0750, .00004, .00002}),
      detail::normalize_mix<kDevices>({.4497, .46995, .0803, .00004, .00001})};
  PerLabel<Mix<kChannels>> channel_mix = {
      detail::normalize_mix<kChannels>({.78002, .13037, .07901, .01060}),
      detail::normalize_mix<kChannels>({.71141, .16757, .11792, .00310})};
  PerLabel<Mix<7>> weekday_mix = {
      detail::normalize_mix<7>({.19, .095, .205, .1905, .1145, .105, .10}),
      detail::normalize_mix<7>({.135, .1625, .16, .163, .135, .125, .1195})};
  PerLabel<Mix<24>> hour_mix = {detail::hour_profile(0.3), detail::hour_profile(0.9)};

  DeviceMode device_mode = DeviceMode::Ownership;
  PerLabel<Mix<3>> ownership = {Mix<3>{.8378, .1539, .0083}, Mix<3>{.7595, .2223, .0182}};
  Stochastic<kDevices> device_transition = {{
      {.4375, .25, .0625, .0625, .1875},
      {.4375, .25, .0625, .0625, .1875},
      {.4375, .25, .0625, .0625, .1875},
      {.4375, .25, .0625, .0625, .1875},
      {.4375, .25, .0625, .0625, .1875},
  }};

  PerLabel<Mix<kDevices>> query_rate = {Mix<kDevices>{.09, .05, .0003, .05, .05},
                                        Mix<kDevices>{2.13, 4.0, 4.0, 2.13, 2.13}};
  std::size_t query_vocabulary = 5000;

  PerLabel<double> dwell_log_mean = {std::log(30.0), std::log(30.0) + 0.3};
  double dwell_session_sd = 0.5;
  double dwell_within_sd = 0.2;

  PerLabel<Mix<kPageTypes>> page_start = {Mix<kPageTypes>{.5, .1, .2, .2, 0, 0, 0, 0},
                                          Mix<kPageTypes>{.5, .1, .2, .2, 0, 0, 0, 0}};
  PerLabel<Stochastic<kPageTypes>> page_chain = {detail::default_page_chain(), detail::default_page_chain()};

  bool operator==(const GenConfig&) const = default;

  /// Throws InvalidConfig naming the offending key.
  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
      throw Error(Errc::InvalidConfig, "key '" + key + "': " + why);
    };
    auto mix = [&](const std::string& key, const auto& m) {
      double s = 0.0;
      for (double v : m) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(key, "negative or non-finite entry");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) fail(key, "entries sum to " + std::to_string(s) + ", expected 1");
    };
    auto rate = [&](const std::string& key, double v) {
      if (!(v >= 0.0 && v <= 1.0)) fail(key, "must lie in [0, 1]");
    };
    auto positive = [&](const std::string& key, double v) {
      if (!(v > 0.0) || !std::isfinite(v)) fail(key, "must be > 0");
    };
    static constexpr const char* L[2] = {"non_purchase", "purchase"};
    static constexpr const char* C[2] = {"non_purchaser", "purchaser"};
    rate("anonymous_share", anonymous_share);
    if (anonymous_share >= 1.0) fail("anonymous_share", "must be < 1");
    rate("anonymous_purchase_rate", anonymous_purchase_rate);
    rate("purchaser_share", purchaser_share);
    rate("purchase_probability", purchase_probability);
    rate("late_login_share", late_login_share);
    rate("bot_share", bot_share);
    for (std::size_t l = 0; l < 2; ++l) {
      const std::string sfx = std::string("_") + L[l];
      if (!(sessions_mean[l] >= 1.0)) fail(std::string("sessions_mean_") + C[l], "must be >= 1");
      if (!(length_mean[l] >= 2.0)) fail("length_mean" + sfx, "must be >= 2");
      positive("length_dispersion" + sfx, length_dispersion[l]);
      mix("device_mix" + sfx, device_mix[l]);
      mix("channel_mix" + sfx, channel_mix[l]);
      mix("weekday_mix" + sfx, weekday_mix[l]);
      mix("hour_mix" + sfx, hour_mix[l]);
      mix(std::string("ownership_") + C[l], ownership[l]);
      mix("page_start" + sfx, page_start[l]);
      for (const auto& row : page_chain[l]) mix("page_chain" + sfx, row);
      for (double q : query_rate[l]) {
        if (!(q >= 0.0) || !std::isfinite(q)) fail("query_rate" + sfx, "negative rate");
      }
      if (!std::isfinite(dwell_log_mean[l])) fail("dwell_log_mean" + sfx, "not finite");
    }
    for (const auto& row : device_transition) mix("device_transition", row);
    if (!(dwell_session_sd >= 0)) fail("dwell_session_sd", "must be >= 0");
    if (!(dwell_within_sd >= 0)) fail("dwell_within_sd", "must be >= 0");
    if (query_vocabulary == 0) fail("query_vocabulary", "must be > 0");
  }

  static GenConfig from(const KeyValueConfig& kv) { return from(kv, GenConfig{}); }

  static GenConfig from(const KeyValueConfig& kv, GenConfig c) {
    static constexpr const char* L[2] = {"non_purchase", "purchase"};
    static constexpr const char* C[2] = {"non_purchaser", "purchaser"};
    kv.read("seed", c.seed);
    kv.read("n_customers", c.n_customers);
    kv.read("anonymous_share", c.anonymous_share);
    kv.read("anonymous_purchase_rate", c.anonymous_purchase_rate);
    kv.read("purchaser_share", c.purchaser_share);
    kv.read("purchase_probability", c.purchase_probability);
    kv.read("late_login_share", c.late_login_share);
    kv.read("bot_share", c.bot_share);
    kv.read("device_mode", c.device_mode);
    kv.read_matrix("device_transition", c.device_transition);
    kv.read("query_vocabulary", c.query_vocabulary);
    kv.read("dwell_session_sd", c.dwell_session_sd);
    kv.read("dwell_within_sd", c.dwell_within_sd);
    for (std::size_t l = 0; l < 2; ++l) {
      const std::string sfx = std::string("_") + L[l];
      kv.read(std::string("sessions_mean_") + C[l], c.sessions_mean[l]);
      kv.read("length_mean" + sfx, c.length_mean[l]);
      kv.read("length_dispersion" + sfx, c.length_dispersion[l]);
      kv.read_array("device_mix" + sfx, c.device_mix[l]);
      kv.read_array("channel_mix" + sfx, c.channel_mix[l]);
      kv.read_array("weekday_mix" + sfx, c.weekday_mix[l]);
      kv.read_array("hour_mix" + sfx, c.hour_mix[l]);
      kv.read_array(std::string("ownership_") + C[l], c.ownership[l]);
      kv.read_array("query_rate" + sfx, c.query_rate[l]);
      kv.read("dwell_log_mean" + sfx, c.dwell_log_mean[l]);
      kv.read_array("page_start" + sfx, c.page_start[l]);
      kv.read_matrix("page_chain" + sfx, c.page_chain[l]);
    }
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"n_customers", n_customers},
            {"anonymous_share", anonymous_share},
            {"anonymous_purchase_rate", anonymous_purchase_rate},
            {"purchaser_share", purchaser_share},
            {"purchase_probability", purchase_probability},
            {"sessions_mean", sessions_mean},
            {"late_login_share", late_login_share},
            {"bot_share", bot_share},
            {"length_mean", length_mean},
            {"length_dispersion", length_dispersion},
            {"device_mix", device_mix},
            {"channel_mix", channel_mix},
            {"weekday_mix", weekday_mix},
            {"hour_mix", hour_mix},
            {"device_mode", to_string(device_mode)},
            {"ownership", ownership},
            {"device_transition", device_transition},
            {"query_rate", query_rate},
            {"query_vocabulary", query_vocabulary},
            {"dwell_log_mean", dwell_log_mean},
            {"dwell_session_sd", dwell_session_sd},
            {"dwell_within_sd", dwell_within_sd},
            {"page_start", page_start},
            {"page_chain", page_chain}};
  }
};

enum class SignalKind : std::uint8_t { Static, Dynamic, History };

template <>
struct EnumTraits<SignalKind> {
  static constexpr std::string_view kind = "signal";
  static constexpr std::array<std::string_view, 3> names = {"static", "dynamic", "history"};
};

/// Move the label-conditional parts of `cfg` towards strongly separated
/// extremes. Strength 0 returns `cfg` unchanged; effects grow with strength.
///   static:  channel, weekday and start-hour mixes
///   dynamic: dwell-time level and page-type chains
///   history: purchase frequency and depth of purchaser histories
inline GenConfig plant_signal(const GenConfig& cfg, SignalKind kind, double strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw Error(Errc::InvalidConfig, "strength must lie in [0, 1]");
  if (strength == 0.0) return cfg;
  GenConfig c = cfg;
  const double s = strength;
  switch (kind) {
    case SignalKind::Static: {
      const Mix<kChannels> ch_p{.10, .50, .38, .02}, ch_n{.94, .02, .02, .02};
      const Mix<7> wd_p{.04, .04, .04, .04, .08, .38, .38}, wd_n{.22, .22, .22, .22, .06, .03, .03};
      Mix<24> hr_p{}, hr_n{};
      for (std::size_t h = 0; h < 24; ++h) {
        hr_p[h] = (h >= 18 && h <= 23) ? 0.9 / 6 : 0.1 / 18;
        hr_n[h] = (h >= 7 && h <= 14) ? 0.9 / 8 : 0.1 / 16;
      }
      c.channel_mix = {detail::lerp(cfg.channel_mix[0], ch_n, s), detail::lerp(cfg.channel_mix[1], ch_p, s)};
      c.weekday_mix = {detail::lerp(cfg.weekday_mix[0], wd_n, s), detail::lerp(cfg.weekday_mix[1], wd_p, s)};
      c.hour_mix = {detail::lerp(cfg.hour_mix[0], hr_n, s), detail::lerp(cfg.hour_mix[1], hr_p, s)};
      break;
    }
    case SignalKind::Dynamic: {
      c.dwell_log_mean[1] = cfg.dwell_log_mean[1] + 0.6 * s;
      c.dwell_log_mean[0] = cfg.dwell_log_mean[0] - 0.3 * s;
      const auto p_ext = detail::cyclic_chain(1, 0.9), n_ext = detail::cyclic_chain(3, 0.9);
      for (std::size_t i = 0; i < kPageTypes; ++i) {
        c.page_chain[1][i] = detail::lerp(cfg.page_chain[1][i], p_ext[i], s);
        c.page_chain[0][i] = detail::lerp(cfg.page_chain[0][i], n_ext[i], s);
      }
      break;
    }
    case SignalKind::History: {
      c.purchase_probability = (1 - s) * cfg.purchase_probability + s;
      c.sessions_mean[1] = (1 - s) * cfg.sessions_mean[1] + s * 12.0;
      break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct TruthSession {
  std::string session_id;  // client_token:start_ms, as sessionize names it
  std::string client_token;
  std::optional<std::string> customer_id;
  bool purchase = false;
  Device device = Device::PC;
  Channel channel = Channel::Direct;
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;
  std::size_t events = 0;
  bool bot = false;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"session_id", session_id}, {"client_token", client_token},
                        {"purchase", purchase},     {"device", to_string(device)},
                        {"channel", to_string(channel)}, {"start_ms", start_ms},
                        {"end_ms", end_ms},         {"events", events},
                        {"bot", bot}};
    j["customer_id"] = customer_id ? nlohmann::json(*customer_id) : nlohmann::json();
    return j;
  }
};

struct GeneratedLog {
  std::vector<RawEvent> events;  // ordered by (timestamp, client_token)
  std::vector<TruthSession> truth;
};

/// Counts per category summing to n, by largest remainder (ties to lower index).
template <std::size_t N>
std::array<std::size_t, N> allocate(const Mix<N>& p, std::size_t n) {
  std::array<std::size_t, N> out{};
  std::array<double, N> rem{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double exact = p[i] * static_cast<double>(n);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(out[i]);
    used += out[i];
  }
  std::array<std::size_t, N> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; k = (k + 1) % N, ++used) ++out[order[k]];
  return out;
}

namespace detail {

using GenRng = std::mt19937_64;

template <std::size_t N>
std::size_t draw(const Mix<N>& p, GenRng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (p[i] <= 0) continue;
    last = i;
    acc += p[i];
    if (u < acc) return i;
  }
  return last;
}

/// Stratified category list: exact allocation, shuffled.
template <std::size_t N>
std::vector<std::size_t> stratified(const Mix<N>& p, std::size_t n, GenRng& rng) {
  const auto counts = allocate(p, n);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < N; ++i) out.insert(out.end(), counts[i], i);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

inline std::size_t neg_binomial(double mean, double dispersion, GenRng& rng) {
  if (mean <= 0) return 0;
  std::gamma_distribution<double> gamma(dispersion, mean / dispersion);
  const double lambda = gamma(rng);
  if (lambda <= 0) return 0;
  return static_cast<std::size_t>(std::poisson_distribution<long long>(lambda)(rng));
}

inline std::size_t poisson(double mean, GenRng& rng) {
  if (mean <= 0) return 0;
  return static_cast<std::size_t>(std::poisson_distribution<long long>(mean)(rng));
}

struct SessionPlan {
  std::optional<std::size_t> customer;
  bool purchase = false;
  Device device = Device::PC;
  Channel channel = Channel::Direct;
  int weekday = 0;
  int hour = 0;
  bool bot = false;
};

struct PlannedAction {
  pintent::Action action;
  PageType page;
  std::int64_t gap_after_ms;  // to the next action
};

/// 2019-10-28 00:00 local time, a Monday; the 28-day window has no clock change.
inline TimestampMs window_start_utc() {
  using namespace std::chrono;
  const sys_days d = year{2019} / October / 28;
  return from_cet_local(duration_cast<milliseconds>(d.time_since_epoch()).count());
}

inline constexpr std::array<std::string_view, 16> kCountries = {
    "AT", "BE", "CH", "DE", "DK", "ES", "FR", "GB", "IE", "IT", "LU", "NL", "NO", "PL", "PT", "SE"};

}  // namespace detail

inline GeneratedLog generate(const GenConfig& cfg) {
  using namespace detail;
  cfg.validate();
  GeneratedLog out;
  GenRng alloc(derive_seed(cfg.seed, 0xa110c));

  // 1. Identified customers: type, device ownership, per-session label and device.
  const std::size_t n_cust = cfg.n_customers;
  std::vector<char> purchaser(n_cust, 0);
  {
    const auto n_p = static_cast<std::size_t>(std::llround(cfg.purchaser_share * static_cast<double>(n_cust)));
    for (std::size_t i = 0; i < n_p; ++i) purchaser[i] = 1;
    std::shuffle(purchaser.begin(), purchaser.end(), alloc);
  }
  std::array<std::vector<std::size_t>, 2> owned_counts;
  for (std::size_t t = 0; t < 2; ++t) {
    const auto n_t = static_cast<std::size_t>(std::count(purchaser.begin(), purchaser.end(), static_cast<char>(t)));
    owned_counts[t] = stratified(cfg.ownership[t], n_t, alloc);
  }
  std::array<std::size_t, 2> next_owned{0, 0};

  std::vector<SessionPlan> plans;
  std::vector<std::vector<std::size_t>> customer_sessions(n_cust);
  for (std::size_t c = 0; c < n_cust; ++c) {
    GenRng rng(derive_seed(cfg.seed, 0xc057, c));
    const std::size_t t = purchaser[c] ? 1 : 0;
    std::size_t n = 1 + poisson(cfg.sessions_mean[t] - 1.0, rng);
    std::vector<char> labels;
    std::vector<Device> devices;
    if (cfg.device_mode == DeviceMode::Ownership) {
      const std::size_t k = owned_counts[t][next_owned[t]++] + 1;
      n = std::max(n, k);
      for (std::size_t i = 0; i < n; ++i) {
        labels.push_back(t == 1 && std::bernoulli_distribution(cfg.purchase_probability)(rng));
      }
      // Distinct owned devices, drawn in proportion to the customer's label mix.
      Mix<kDevices> w = cfg.device_mix[t];
      std::vector<Device> owned;
      for (std::size_t i = 0; i < k; ++i) {
        const auto d = draw(normalize_mix(w), rng);
        owned.push_back(from_index<Device>(d));
        w[d] = 0.0;
        if (std::accumulate(w.begin(), w.end(), 0.0) <= 0) break;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (i < owned.size()) {
          devices.push_back(owned[i]);
          continue;
        }
        Mix<kDevices> pw{};
        for (Device d : owned) pw[index_of(d)] = cfg.device_mix[labels[i] ? 1 : 0][index_of(d)];
        devices.push_back(from_index<Device>(draw(normalize_mix(pw), rng)));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        labels.push_back(t == 1 && std::bernoulli_distribution(cfg.purchase_probability)(rng));
        const Device d = i == 0 ? from_index<Device>(draw(cfg.device_mix[t], rng))
                                : from_index<Device>(draw(cfg.device_transition[index_of(devices.back())], rng));
        devices.push_back(d);
      }
    }
    if (t == 1 && std::find(labels.begin(), labels.end(), 1) == labels.end()) {
      labels[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      SessionPlan p;
      p.customer = c;
      p.purchase = labels[i];
      p.device = devices[i];
      customer_sessions[c].push_back(plans.size());
      plans.push_back(p);
    }
  }

  // 2. Anonymous single-session visitors. In ownership mode their devices
  // make up the difference between the identified sessions and the target mix.
  const std::size_t n_id = plans.size();
  const auto n_anon = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_id) * cfg.anonymous_share / (1.0 - cfg.anonymous_share)));
  const auto n_anon_p = static_cast<std::size_t>(std::llround(static_cast<double>(n_anon) * cfg.anonymous_purchase_rate));
  std::array<std::array<std::size_t, kDevices>, 2> id_devices{};
  std::array<std::size_t, 2> id_labels{};
  for (const auto& p : plans) {
    ++id_devices[p.purchase][index_of(p.device)];
    ++id_labels[p.purchase];
  }
  for (std::size_t l = 0; l < 2; ++l) {
    const std::size_t a_l = l ? n_anon_p : n_anon - n_anon_p;
    std::vector<std::size_t> devs;
    if (cfg.device_mode == DeviceMode::Ownership) {
      const auto target = allocate(cfg.device_mix[l], a_l + id_labels[l]);
      Mix<kDevices> deficit{};
      for (std::size_t d = 0; d < kDevices; ++d) {
        deficit[d] = target[d] > id_devices[l][d] ? static_cast<double>(target[d] - id_devices[l][d]) : 0.0;
      }
      const double total = std::accumulate(deficit.begin(), deficit.end(), 0.0);
      devs = stratified(total > 0 ? normalize_mix(deficit) : cfg.device_mix[l], a_l, alloc);
    } else {
      devs = stratified(cfg.device_mix[l], a_l, alloc);
    }
    for (std::size_t i = 0; i < a_l; ++i) {
      SessionPlan p;
      p.purchase = l == 1;
      p.device = from_index<Device>(devs[i]);
      plans.push_back(p);
    }
  }

  // 3. Channel, weekday and hour: exact per-label allocation.
  for (std::size_t l = 0; l < 2; ++l) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      if (plans[i].purchase == (l == 1)) idx.push_back(i);
    }
    const auto ch = stratified(cfg.channel_mix[l], idx.size(), alloc);
    const auto wd = stratified(cfg.weekday_mix[l], idx.size(), alloc);
    const auto hr = stratified(cfg.hour_mix[l], idx.size(), alloc);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      plans[idx[k]].channel = from_index<Channel>(ch[k]);
      plans[idx[k]].weekday = static_cast<int>(wd[k]);
      plans[idx[k]].hour = static_cast<int>(hr[k]);
    }
  }

  // 4. Optional bot traffic from outside the storefront countries.
  const auto n_bots = static_cast<std::size_t>(std::llround(cfg.bot_share * static_cast<double>(plans.size())));
  for (std::size_t i = 0; i < n_bots; ++i) {
    SessionPlan p;
    p.bot = true;
    p.device = from_index<Device>(draw(cfg.device_mix[0], alloc));
    p.channel = from_index<Channel>(draw(cfg.channel_mix[0], alloc));
    p.weekday = static_cast<int>(draw(cfg.weekday_mix[0], alloc));
    p.hour = static_cast<int>(draw(cfg.hour_mix[0], alloc));
    plans.push_back(p);
  }

  // 5. Actions, timing and placement.
  const TimestampMs t0 = window_start_utc();
  const TimestampMs margin = 31 * kMinuteMs;
  std::vector<std::vector<PlannedAction>> actions(plans.size());
  std::vector<TimestampMs> starts(plans.size()), durations(plans.size());
  std::vector<GenRng> rngs;
  rngs.reserve(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    rngs.emplace_back(derive_seed(cfg.seed, 0x5e55, i));
    auto& rng = rngs.back();
    const auto& p = plans[i];
    const std::size_t l = p.purchase ? 1 : 0;
    const double q_rate = cfg.query_rate[l][index_of(p.device)];
    const std::size_t extra = p.purchase ? 2 : 0;
    const double pv_mean = std::max(0.05, cfg.length_mean[l] - 2.0 - q_rate - static_cast<double>(extra));
    std::size_t pages = 2 + neg_binomial(pv_mean, cfg.length_dispersion[l], rng);
    std::size_t queries = poisson(q_rate, rng);
    pages = std::min<std::size_t>(pages, 1900);
    queries = std::min<std::size_t>(queries, 2000 - extra - pages);

    const double session_effect = std::normal_distribution<double>(0.0, cfg.dwell_session_sd)(rng);
    std::normal_distribution<double> within(0.0, cfg.dwell_within_sd);
    std::normal_distribution<double> short_gap(std::log(8.0), 0.5);
    auto gap_ms = [&](double seconds) {
      return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(seconds * 1000.0)), 1000, 29 * kMinuteMs);
    };
    // Queries follow random page views.
    std::vector<std::size_t> queries_after(pages, 0);
    for (std::size_t q = 0; q < queries; ++q) ++queries_after[std::uniform_int_distribution<std::size_t>(0, pages - 1)(rng)];
    auto& acts = actions[i];
    std::size_t page = draw(cfg.page_start[l], rng);
    for (std::size_t k = 0; k < pages; ++k) {
      if (k) page = draw(cfg.page_chain[l][page], rng);
      const double dwell = std::exp(cfg.dwell_log_mean[l] + session_effect + within(rng));
      acts.push_back({pintent::Action::PageView, from_index<PageType>(page), gap_ms(dwell)});
      for (std::size_t q = 0; q < queries_after[k]; ++q) {
        acts.push_back({pintent::Action::Query, PageType::Search, gap_ms(std::exp(short_gap(rng)))});
      }
    }
    if (p.purchase) {
      acts.push_back({pintent::Action::AddToBasket, acts.back().page, gap_ms(std::exp(short_gap(rng)))});
      acts.push_back({pintent::Action::Purchase, PageType::Checkout, 0});
    }
    acts.back().gap_after_ms = 0;
    TimestampMs dur = 0;
    for (const auto& a : acts) dur += a.gap_after_ms;
    durations[i] = dur;
  }

  auto start_of = [&](const SessionPlan& p, int week, GenRng& rng) {
    const auto minute = std::uniform_int_distribution<std::int64_t>(0, 59)(rng);
    const auto second = std::uniform_int_distribution<std::int64_t>(0, 59999)(rng);
    return t0 + (7 * week + p.weekday) * kDayMs + p.hour * kHourMs + minute * kMinuteMs + second;
  };
  for (std::size_t i = n_id; i < plans.size(); ++i) {
    starts[i] = start_of(plans[i], std::uniform_int_distribution<int>(0, 3)(rngs[i]), rngs[i]);
  }
  for (std::size_t c = 0; c < n_cust; ++c) {
    std::vector<std::pair<TimestampMs, TimestampMs>> placed;
    for (std::size_t i : customer_sessions[c]) {
      auto& rng = rngs[i];
      TimestampMs s = 0;
      bool ok = false;
      for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
        s = start_of(plans[i], std::uniform_int_distribution<int>(0, 3)(rng), rng);
        ok = std::none_of(placed.begin(), placed.end(), [&](const auto& iv) {
          return s < iv.second + margin && s + durations[i] + margin > iv.first;
        });
      }
      if (!ok) {
        // Crowded history: append after the latest session.
        TimestampMs latest = t0;
        for (const auto& iv : placed) latest = std::max(latest, iv.second);
        s = latest + margin + kMinuteMs;
      }
      starts[i] = s;
      placed.emplace_back(s, s + durations[i]);
    }
  }

  // 6. Events and ground truth.
  std::vector<std::pair<std::size_t, RawEvent>> keyed;  // (plan, event) for stable ordering
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    auto& rng = rngs[i];
    std::string token;
    std::optional<std::string> customer;
    if (p.customer) {
      customer = "C" + std::to_string(*p.customer);
      token = "c" + std::to_string(*p.customer) + "-" + std::string(to_string(p.device));
    } else {
      token = (p.bot ? "b" : "a") + std::to_string(i);
    }
    const std::string country = p.bot ? std::string("US")
                                      : std::string(kCountries[std::uniform_int_distribution<std::size_t>(0, kCountries.size() - 1)(rng)]);
    const auto& acts = actions[i];
    std::size_t login_at = 0;
    if (customer && std::bernoulli_distribution(cfg.late_login_share)(rng)) login_at = (acts.size() + 1) / 2;
    std::lognormal_distribution<double> price(std::log(3000.0), 0.8);
    std::uniform_int_distribution<std::size_t> vocab(0, cfg.query_vocabulary - 1);
    TimestampMs t = starts[i];
    for (std::size_t k = 0; k < acts.size(); ++k) {
      RawEvent ev;
      ev.timestamp_ms = t;
      ev.client_token = token;
      if (customer && k >= login_at) ev.customer_id = customer;
      ev.device = p.device;
      ev.channel = p.channel;
      ev.action = acts[k].action;
      ev.page_type = acts[k].page;
      if (ev.action == pintent::Action::Query) ev.query_text = "q" + std::to_string(vocab(rng));
      if (ev.action == pintent::Action::PageView && ev.page_type == PageType::Product) {
        ev.price_cents = std::max<std::int64_t>(1, std::llround(price(rng)));
      }
      ev.country = country;
      keyed.emplace_back(i, std::move(ev));
      t += acts[k].gap_after_ms;
    }
    TruthSession ts;
    ts.session_id = token + ":" + std::to_string(starts[i]);
    ts.client_token = token;
    ts.customer_id = customer;
    ts.purchase = p.purchase;
    ts.device = p.device;
    ts.channel = p.channel;
    ts.start_ms = starts[i];
    ts.end_ms = starts[i] + durations[i];
    ts.events = acts.size();
    ts.bot = p.bot;
    out.truth.push_back(std::move(ts));
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second.timestamp_ms, a.second.client_token) < std::tie(b.second.timestamp_ms, b.second.client_token);
  });
  out.events.reserve(keyed.size());
  for (auto& [i, ev] : keyed) out.events.push_back(std::move(ev));
  std::sort(out.truth.begin(), out.truth.end(), [](const auto& a, const auto& b) {
    return std::tie(a.client_token, a.start_ms) < std::tie(b.client_token, b.start_ms);
  });
  return out;
}

/// Write the event log (gzip when the name ends in ".gz") and truth.jsonl.
inline void write_generated(const GeneratedLog& log, const std::filesystem::path& dir,
                            const std::string& log_name = "events.tsv") {
  std::filesystem::create_directories(dir);
  const auto log_path = dir / log_name;
  std::string body = tsv_header() + "\n";
  for (const auto& ev : log.events) {
    body += format_event_line(ev);
    body += '\n';
  }
  if (log_name.ends_with(".gz")) {
    gzFile f = gzopen(log_path.string().c_str(), "wb");
    if (!f) throw Error(Errc::Io, "cannot write " + log_path.string());
    const int written = gzwrite(f, body.data(), static_cast<unsigned>(body.size()));
    gzclose(f);
    if (written != static_cast<int>(body.size())) throw Error(Errc::Io, "short write to " + log_path.string());
  } else {
    std::ofstream os(log_path, std::ios::binary);
    if (!os) throw Error(Errc::Io, "cannot write " + log_path.string());
    os << body;
  }
  std::ofstream truth(dir / "truth.jsonl", std::ios::binary);
  if (!truth) throw Error(Errc::Io, "cannot write truth.jsonl");
  for (const auto& t : log.truth) truth << t.to_json().dump() << '\n';
}

}  // namespace pintent

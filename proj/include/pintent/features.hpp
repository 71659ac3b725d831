#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pintent/common.hpp"
#include "pintent/markov.hpp"
#include "pintent/session.hpp"

namespace pintent {

enum class Setting : std::uint8_t { Anonymous, Identified };
enum class Variant : std::uint8_t { Baseline, Extended };

template <>
struct EnumTraits<Setting> {
  static constexpr std::string_view kind = "setting";
  static constexpr std::array<std::string_view, 2> names = {"anonymous", "identified"};
};

template <>
struct EnumTraits<Variant> {
  static constexpr std::string_view kind = "variant";
  static constexpr std::array<std::string_view, 2> names = {"baseline", "extended"};
};

enum class FeatureKind : std::uint8_t { Dynamic, Static };
enum class FeatureScope : std::uint8_t { Session, History };

enum class FeatureId : std::uint8_t {
  DwellMean,
  DwellStd,
  PageSequenceScore,
  NumPages,
  Channel,
  StartHour,
  Weekday,
  Device,
  DeviceConversionRate,
  NumOrders,
  DaysSinceLastPurchase,
  NumSessions,
  NumDevices,
  DeviceSequenceScore,
  SwitchProbability,
};

struct FeatureDescriptor {
  FeatureId id;
  std::string name;
  FeatureKind kind;
  FeatureScope scope;
  bool in_baseline;
  std::vector<std::string> categories;  // empty: single numeric column

  std::size_t width() const { return categories.empty() ? 1 : categories.size(); }
};

/// One encoded column of a feature matrix.
struct FeatureColumn {
  std::string name;
  std::size_t feature;  // index into FeatureCatalog::features
  FeatureKind kind;
};

class FeatureCatalog {
 public:
  static const FeatureCatalog& standard() {
    static const FeatureCatalog cat = build();
    return cat;
  }

  const std::vector<FeatureDescriptor>& features() const { return features_; }

  /// The features available in a setting: history features only for
  /// identified sessions, baseline features only for the baseline variant.
  bool included(const FeatureDescriptor& f, Setting setting, Variant variant) const {
    if (f.scope == FeatureScope::History && setting == Setting::Anonymous) return false;
    return variant == Variant::Extended || f.in_baseline;
  }

  std::vector<FeatureColumn> columns(Setting setting, Variant variant) const {
    std::vector<FeatureColumn> out;
    for (std::size_t i = 0; i < features_.size(); ++i) {
      const auto& f = features_[i];
      if (!included(f, setting, variant)) continue;
      if (f.categories.empty()) {
        out.push_back({f.name, i, f.kind});
      } else {
        for (const auto& c : f.categories) out.push_back({f.name + "=" + c, i, f.kind});
      }
    }
    return out;
  }

  std::vector<std::string> column_names(Setting setting, Variant variant) const {
    std::vector<std::string> out;
    for (auto& c : columns(setting, variant)) out.push_back(std::move(c.name));
    return out;
  }

 private:
  static FeatureCatalog build() {
    using K = FeatureKind;
    using S = FeatureScope;
    auto names = [](auto values) {
      std::vector<std::string> out;
      for (auto v : values) out.emplace_back(v);
      return out;
    };
    std::vector<std::string> weekdays;
    for (auto w : kWeekdayNames) weekdays.emplace_back(w.substr(0, 3));
    FeatureCatalog c;
    c.features_ = {
        {FeatureId::DwellMean, "dwell_mean", K::Dynamic, S::Session, true, {}},
        {FeatureId::DwellStd, "dwell_std", K::Dynamic, S::Session, true, {}},
        {FeatureId::PageSequenceScore, "page_sequence_score", K::Dynamic, S::Session, true, {}},
        {FeatureId::NumPages, "num_pages", K::Dynamic, S::Session, true, {}},
        {FeatureId::Channel, "channel", K::Static, S::Session, false,
         names(EnumTraits<Channel>::names)},
        {FeatureId::StartHour, "start_hour", K::Static, S::Session, false, {}},
        {FeatureId::Weekday, "weekday", K::Static, S::Session, false, weekdays},
        {FeatureId::Device, "device", K::Static, S::Session, false, names(EnumTraits<Device>::names)},
        {FeatureId::DeviceConversionRate, "device_conversion_rate", K::Static, S::Session, false, {}},
        {FeatureId::NumOrders, "num_orders", K::Static, S::History, true, {}},
        {FeatureId::DaysSinceLastPurchase, "days_since_last_purchase", K::Static, S::History, true, {}},
        {FeatureId::NumSessions, "num_sessions", K::Static, S::History, false, {}},
        {FeatureId::NumDevices, "num_devices", K::Static, S::History, false, {}},
        {FeatureId::DeviceSequenceScore, "device_sequence_score", K::Static, S::History, false, {}},
        {FeatureId::SwitchProbability, "switch_probability", K::Static, S::History, false, {}},
    };
    return c;
  }

  std::vector<FeatureDescriptor> features_;
};

struct ExtractOptions {
  std::size_t max_step = 10;
  std::size_t min_pages = 12;
  double markov_alpha = 1.0;
};

// ---------------------------------------------------------------------------
// Fold-fitted context
// ---------------------------------------------------------------------------

/// Page types of the first `n` page views.
inline SymbolSequence page_symbols(const Session& s, std::size_t n) {
  SymbolSequence out;
  const auto pv = s.page_views();
  n = std::min(n, pv.size());
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(index_of(s.events()[pv[k]].page_type));
  return out;
}

/// Devices of the customer's earlier sessions followed by this session's device.
inline SymbolSequence device_symbols(const HistorySummary& h, Device current) {
  SymbolSequence out;
  out.reserve(h.device_sequence.size() + 1);
  for (Device d : h.device_sequence) out.push_back(index_of(d));
  out.push_back(index_of(current));
  return out;
}

using JourneyIndex = std::map<std::string, Journey>;

inline const Journey* find_journey(const JourneyIndex& journeys, const Session& s) {
  if (!s.customer_id()) return nullptr;
  auto it = journeys.find(*s.customer_id());
  return it == journeys.end() ? nullptr : &it->second;
}

/// Statistics that must come from training sessions only: the class-
/// conditional page and device chains and the device conversion table.
struct FeatureContext {
  ClassChains pages;
  ClassChains devices;
  std::array<std::size_t, enum_size<Device>> device_sessions{};
  std::array<std::size_t, enum_size<Device>> device_purchases{};
  double global_rate = 0.0;

  /// `journeys` supplies the device history of identified training sessions.
  static FeatureContext fit(std::span<const Session* const> train, const JourneyIndex& journeys,
                            const ExtractOptions& opt = {}) {
    std::vector<SymbolSequence> page_seqs, device_seqs;
    std::vector<char> page_labels, device_labels;
    FeatureContext ctx;
    std::size_t purchases = 0;
    for (const Session* s : train) {
      page_seqs.push_back(page_symbols(*s, opt.max_step));
      page_labels.push_back(s->purchase());
      ++ctx.device_sessions[index_of(s->device())];
      if (s->purchase()) {
        ++ctx.device_purchases[index_of(s->device())];
        ++purchases;
      }
      if (const Journey* j = find_journey(journeys, *s)) {
        device_seqs.push_back(device_symbols(history_snapshot(*j, s->start_ms()), s->device()));
        device_labels.push_back(s->purchase());
      }
    }
    if (!train.empty()) {
      ctx.global_rate = static_cast<double>(purchases) / static_cast<double>(train.size());
    }
    auto fit_chains = [&](const std::vector<SymbolSequence>& seqs, const std::vector<char>& labels,
                          std::vector<std::string> alphabet) {
      ClassChains c{MarkovChain(alphabet, opt.markov_alpha), MarkovChain(alphabet, opt.markov_alpha)};
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        (labels[i] ? c.purchase : c.non_purchase).add_sequence(seqs[i]);
      }
      return c;
    };
    ctx.pages = fit_chains(page_seqs, page_labels, enum_alphabet<PageType>());
    ctx.devices = fit_chains(device_seqs, device_labels, enum_alphabet<Device>());
    return ctx;
  }

  /// Training conversion rate of a device; the overall training rate for
  /// devices without training sessions.
  double device_rate(Device d) const {
    const auto n = device_sessions[index_of(d)];
    if (n == 0) return global_rate;
    return static_cast<double>(device_purchases[index_of(d)]) / static_cast<double>(n);
  }

  nlohmann::json to_json() const {
    return {{"pages", pages.to_json()},
            {"devices", devices.to_json()},
            {"device_sessions", device_sessions},
            {"device_purchases", device_purchases},
            {"global_rate", global_rate}};
  }
};

inline double device_conversion_feature(const FeatureContext& ctx, Device d) {
  return ctx.device_rate(d);
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> names;
  Setting setting = Setting::Anonymous;
  Variant variant = Variant::Baseline;
  std::size_t step = 0;

  double at(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return values[i];
    }
    throw Error(Errc::DimensionMismatch, "no feature column '" + std::string(name) + "'");
  }
};

namespace detail {

inline void check_extractable(const Session& s, const Journey* j, std::size_t step,
                              Setting setting, const ExtractOptions& opt) {
  if (step > opt.max_step) {
    throw Error(Errc::StepOutOfRange,
                "step " + std::to_string(step) + " outside [0, " + std::to_string(opt.max_step) + "]");
  }
  if (s.page_count() < opt.min_pages) {
    throw Error(Errc::ShortSession, "session " + s.id() + " has " + std::to_string(s.page_count()) +
                                        " page views, need " + std::to_string(opt.min_pages));
  }
  if (setting == Setting::Identified && !j) {
    throw Error(Errc::MissingJourney, "no customer journey for session " + s.id());
  }
}

}  // namespace detail

/// Write the encoded features of (s, step) into `out`, which must hold
/// columns(setting, variant).size() values.
inline void extract_into(std::span<double> out, const Session& s, const Journey* j, std::size_t step,
                         Setting setting, Variant variant, const FeatureContext& ctx,
                         const ExtractOptions& opt = {}) {
  detail::check_extractable(s, j, step, setting, opt);
  const auto& cat = FeatureCatalog::standard();

  std::optional<HistorySummary> hist;
  if (setting == Setting::Identified) hist = history_snapshot(*j, s.start_ms());
  DwellStats dwell;
  if (step > 0) dwell = dwell_stats_at_step(s, step);

  std::size_t col = 0;
  auto put = [&](double v) {
    if (col >= out.size()) throw Error(Errc::DimensionMismatch, "feature row too short");
    out[col++] = v;
  };
  auto one_hot = [&](std::size_t hot, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) put(i == hot ? 1.0 : 0.0);
  };
  for (const auto& f : cat.features()) {
    if (!cat.included(f, setting, variant)) continue;
    switch (f.id) {
      case FeatureId::DwellMean: put(dwell.mean); break;
      case FeatureId::DwellStd: put(dwell.std); break;
      case FeatureId::PageSequenceScore: put(ctx.pages.score(page_symbols(s, step))); break;
      case FeatureId::NumPages: put(static_cast<double>(step)); break;
      case FeatureId::Channel: one_hot(index_of(s.channel()), f.width()); break;
      case FeatureId::StartHour: put(cet_hour(s.start_ms())); break;
      case FeatureId::Weekday: one_hot(static_cast<std::size_t>(cet_weekday(s.start_ms())), f.width()); break;
      case FeatureId::Device: one_hot(index_of(s.device()), f.width()); break;
      case FeatureId::DeviceConversionRate: put(ctx.device_rate(s.device())); break;
      case FeatureId::NumOrders: put(static_cast<double>(hist->orders)); break;
      case FeatureId::DaysSinceLastPurchase: put(hist->days_since_last_purchase); break;
      case FeatureId::NumSessions: put(static_cast<double>(hist->sessions)); break;
      case FeatureId::NumDevices: {
        auto seq = hist->device_sequence;
        seq.push_back(s.device());
        std::sort(seq.begin(), seq.end());
        put(static_cast<double>(std::unique(seq.begin(), seq.end()) - seq.begin()));
        break;
      }
      case FeatureId::DeviceSequenceScore:
        put(ctx.devices.score(device_symbols(*hist, s.device())));
        break;
      case FeatureId::SwitchProbability: {
        auto seq = hist->device_sequence;
        seq.push_back(s.device());
        put(device_switches_of(seq).switch_probability);
        break;
      }
    }
  }
  if (col != out.size()) throw Error(Errc::DimensionMismatch, "feature row width");
}

inline FeatureVector extract(const Session& s, const Journey* j, std::size_t step, Setting setting,
                             Variant variant, const FeatureContext& ctx,
                             const ExtractOptions& opt = {}) {
  FeatureVector v;
  v.names = FeatureCatalog::standard().column_names(setting, variant);
  v.values.assign(v.names.size(), 0.0);
  v.setting = setting;
  v.variant = variant;
  v.step = step;
  extract_into(v.values, s, j, step, setting, variant, ctx, opt);
  return v;
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

using Labels = std::vector<int>;

struct Dataset {
  Eigen::MatrixXd X;
  Labels y;
  std::vector<std::string> feature_names;
  std::vector<std::string> session_ids;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
};

inline Dataset matrixize(std::span<const Session* const> sessions, const JourneyIndex& journeys,
                         std::size_t step, Setting setting, Variant variant,
                         const FeatureContext& ctx, const ExtractOptions& opt = {}) {
  Dataset d;
  d.feature_names = FeatureCatalog::standard().column_names(setting, variant);
  const auto n = sessions.size();
  const auto m = d.feature_names.size();
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  d.y.resize(n);
  d.session_ids.resize(n);
  std::vector<double> row(m);
  for (std::size_t i = 0; i < n; ++i) {
    const Session& s = *sessions[i];
    try {
      extract_into(row, s, find_journey(journeys, s), step, setting, variant, ctx, opt);
    } catch (const Error& ex) {
      throw Error(ex.code(), "session " + s.id() + ": " + ex.detail());
    }
    for (std::size_t c = 0; c < m; ++c) d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    d.y[i] = s.purchase() ? 1 : 0;
    d.session_ids[i] = s.id();
  }
  return d;
}

inline Dataset matrixize(std::span<const Session> sessions, const JourneyIndex& journeys,
                         std::size_t step, Setting setting, Variant variant,
                         const FeatureContext& ctx, const ExtractOptions& opt = {}) {
  std::vector<const Session*> ptrs;
  ptrs.reserve(sessions.size());
  for (const auto& s : sessions) ptrs.push_back(&s);
  return matrixize(std::span<const Session* const>(ptrs), journeys, step, setting, variant, ctx, opt);
}

inline void write_matrix_csv(std::ostream& os, const Dataset& d) {
  os << "session_id";
  for (const auto& n : d.feature_names) os << ',' << n;
  os << ",label\n";
  char buf[32];
  for (std::size_t i = 0; i < d.rows(); ++i) {
    os << d.session_ids[i];
    for (std::size_t c = 0; c < d.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
      os << ',' << buf;
    }
    os << ',' << d.y[i] << '\n';
  }
}

/// File name of a cached matrix for (corpus hash, step, setting, variant, fold).
inline std::string matrix_cache_key(std::uint64_t corpus_hash, std::size_t step, Setting setting,
                                    Variant variant, std::size_t fold) {
  return hex64(corpus_hash) + "_s" + std::to_string(step) + "_" + std::string(to_string(setting)) +
         "_" + std::string(to_string(variant)) + "_f" + std::to_string(fold) + ".bin";
}

namespace detail {
inline constexpr char kMatrixMagic[8] = {'P', 'I', 'M', 'A', 'T', 'R', 'X', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(Errc::Io, "truncated matrix cache");
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (1u << 20)) throw Error(Errc::Io, "corrupt matrix cache");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw Error(Errc::Io, "truncated matrix cache");
  return s;
}
}  // namespace detail

inline void write_matrix_cache(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os.write(detail::kMatrixMagic, sizeof detail::kMatrixMagic);
  detail::write_pod<std::uint64_t>(os, d.rows());
  detail::write_pod<std::uint64_t>(os, d.cols());
  for (const auto& n : d.feature_names) detail::write_str(os, n);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    detail::write_str(os, d.session_ids[i]);
    detail::write_pod<std::int32_t>(os, d.y[i]);
    for (std::size_t c = 0; c < d.cols(); ++c) {
      detail::write_pod<double>(os, d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
    }
  }
}

inline Dataset read_matrix_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, detail::kMatrixMagic, sizeof magic) != 0) {
    throw Error(Errc::VersionMismatch, "not a matrix cache: " + path.string());
  }
  Dataset d;
  const auto n = detail::read_pod<std::uint64_t>(is);
  const auto m = detail::read_pod<std::uint64_t>(is);
  for (std::uint64_t c = 0; c < m; ++c) d.feature_names.push_back(detail::read_str(is));
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::uint64_t i = 0; i < n; ++i) {
    d.session_ids.push_back(detail::read_str(is));
    d.y.push_back(detail::read_pod<std::int32_t>(is));
    for (std::uint64_t c = 0; c < m; ++c) {
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = detail::read_pod<double>(is);
    }
  }
  return d;
}

}  // namespace pintent

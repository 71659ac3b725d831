#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pintent/common.hpp"
#include "pintent/config.hpp"
#include "pintent/features.hpp"
#include "pintent/ml/metrics.hpp"
#include "pintent/ml/models.hpp"
#include "pintent/session.hpp"

namespace pintent {

using ml::f1;
using ml::ModelKind;
using ml::PrfScore;

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

/// Stratified k-fold assignment. Positives and negatives are shuffled
/// separately and dealt round-robin; negatives continue where positives
/// stopped so fold sizes also differ by at most one. Returns row indices.
inline std::vector<std::vector<std::size_t>> kfold_split(std::span<const int> labels, std::size_t k,
                                                         std::uint64_t seed, bool stratified = true) {
  if (k < 2) throw Error(Errc::InvalidConfig, "need at least 2 folds");
  if (labels.size() < k) {
    throw Error(Errc::TooFewSessions,
                std::to_string(labels.size()) + " sessions for " + std::to_string(k) + " folds");
  }
  ml::Rng rng(derive_seed(seed, 0xf01d));
  std::vector<std::vector<std::size_t>> folds(k);
  if (!stratified) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    for (std::size_t i = 0; i < all.size(); ++i) folds[i % k].push_back(all[i]);
  } else {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    for (std::size_t i = 0; i < pos.size(); ++i) folds[i % k].push_back(pos[i]);
    const std::size_t offset = pos.size() % k;
    for (std::size_t i = 0; i < neg.size(); ++i) folds[(offset + i) % k].push_back(neg[i]);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Fold assignment over session ids.
inline std::vector<std::vector<std::string>> kfold_split(std::span<const std::string> ids,
                                                         std::span<const int> labels, std::size_t k,
                                                         std::uint64_t seed, bool stratified = true) {
  if (ids.size() != labels.size()) throw Error(Errc::LengthMismatch, "ids vs labels");
  std::vector<std::vector<std::string>> out;
  for (const auto& fold : kfold_split(labels, k, seed, stratified)) {
    auto& f = out.emplace_back();
    for (std::size_t i : fold) f.push_back(ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocol configuration
// ---------------------------------------------------------------------------

struct ProtocolConfig {
  std::vector<std::size_t> steps = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t min_pages = 12;
  std::size_t buffer = 2;
  std::size_t folds = 10;
  std::vector<Setting> settings = {Setting::Anonymous, Setting::Identified};
  std::vector<Variant> variants = {Variant::Baseline, Variant::Extended};
  std::vector<ModelKind> models = {ModelKind::LR,   ModelKind::KNN,  ModelKind::SVM,
                                   ModelKind::RF,   ModelKind::GBDT, ModelKind::MLP};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double markov_alpha = 1.0;
  bool compute_importance = true;
  ml::TrainConfig train;  // hyperparameters shared by all cells; kind and seed are set per cell

  std::size_t max_step() const { return steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end()); }

  ExtractOptions extract_options() const { return {max_step(), min_pages, markov_alpha}; }

  void validate() const {
    if (steps.empty()) throw Error(Errc::InvalidConfig, "steps: empty");
    if (min_pages != max_step() + buffer) {
      throw Error(Errc::InvalidConfig, "min_pages must equal max(steps) + buffer (" +
                                           std::to_string(max_step() + buffer) + ")");
    }
    if (folds < 2) throw Error(Errc::InvalidConfig, "folds must be >= 2");
    if (settings.empty() || variants.empty() || models.empty()) {
      throw Error(Errc::InvalidConfig, "settings, variants and models must be non-empty");
    }
  }

  static ProtocolConfig from(const KeyValueConfig& kv) {
    ProtocolConfig c;
    kv.read_list("steps", c.steps);
    kv.read("min_pages", c.min_pages);
    kv.read("buffer", c.buffer);
    kv.read("folds", c.folds);
    kv.read_list("settings", c.settings);
    kv.read_list("variants", c.variants);
    kv.read_list("models", c.models);
    kv.read("seed", c.seed);
    kv.read("threads", c.threads);
    kv.read("markov_alpha", c.markov_alpha);
    kv.read("importance", c.compute_importance);
    auto& t = c.train;
    kv.read("class_weighting", t.class_weighting);
    kv.read("rf_trees", t.rf_trees);
    kv.read("rf_max_depth", t.rf_max_depth);
    kv.read("rf_min_leaf", t.rf_min_leaf);
    kv.read("rf_max_features", t.rf_max_features);
    kv.read("max_bins", t.max_bins);
    kv.read("gbdt_rounds", t.gbdt_rounds);
    kv.read("gbdt_depth", t.gbdt_depth);
    kv.read("gbdt_rate", t.gbdt_rate);
    kv.read("gbdt_lambda", t.gbdt_lambda);
    kv.read("knn_k", t.knn_k);
    kv.read("linear_rate", t.linear_rate);
    kv.read("linear_epochs", t.linear_epochs);
    kv.read("l2", t.l2);
    kv.read("mlp_hidden", t.mlp_hidden);
    kv.read("mlp_epochs", t.mlp_epochs);
    kv.read("mlp_batch", t.mlp_batch);
    kv.read("mlp_rate", t.mlp_rate);
    kv.read("importance_shuffles", t.importance_shuffles);
    kv.read("importance_max_rows", t.importance_max_rows);
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    std::vector<std::string> s, v, m;
    for (auto x : settings) s.emplace_back(to_string(x));
    for (auto x : variants) v.emplace_back(to_string(x));
    for (auto x : models) m.emplace_back(to_string(x));
    return {{"steps", steps},         {"min_pages", min_pages}, {"buffer", buffer},
            {"folds", folds},         {"settings", s},          {"variants", v},
            {"models", m},            {"seed", seed},           {"markov_alpha", markov_alpha},
            {"importance", compute_importance}, {"train", train.hyperparameters()}};
  }
};

// ---------------------------------------------------------------------------
// Corpus preparation
// ---------------------------------------------------------------------------

/// Sessions eligible for one setting: at least `min_pages` page views, and a
/// known customer in the identified setting.
inline std::vector<const Session*> protocol_pool(std::span<const Session> sessions, Setting setting,
                                                 std::size_t min_pages) {
  std::vector<const Session*> out;
  for (const auto& s : sessions) {
    if (s.page_count() < min_pages) continue;
    if (setting == Setting::Identified && !s.identified()) continue;
    out.push_back(&s);
  }
  return out;
}

inline std::uint64_t cell_seed(std::uint64_t master, Setting setting, std::size_t fold, std::size_t step,
                               Variant variant, ModelKind model) {
  return derive_seed(master, 0xce11, index_of(setting), fold, step, index_of(variant), index_of(model));
}

/// Everything fitted on one training portion for one (step, variant, model).
struct FoldArtifacts {
  FeatureContext context;
  std::unique_ptr<ml::Classifier> model;
  Dataset train;

  /// Serialised fitted state: chains, conversion table, scaler and model
  /// parameters.
  nlohmann::json to_json() const {
    return {{"context", context.to_json()}, {"model", ml::save_model(*model, train.feature_names)}};
  }
};

inline std::vector<const Session*> select(std::span<const Session* const> pool, std::span<const std::size_t> rows) {
  std::vector<const Session*> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(pool[r]);
  return out;
}

inline std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> rows) {
  std::vector<char> held(n, 0);
  for (auto r : rows) held[r] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!held[i]) out.push_back(i);
  }
  return out;
}

inline ml::TrainConfig cell_train_config(const ProtocolConfig& cfg, Setting setting, std::size_t fold,
                                         std::size_t step, Variant variant, ModelKind model) {
  auto t = cfg.train;
  t.kind = model;
  t.seed = cell_seed(cfg.seed, setting, fold, step, variant, model);
  t.threads = cfg.threads;
  return t;
}

/// Customer journeys with the given sessions removed.
inline JourneyIndex journeys_without(const JourneyIndex& journeys, const std::set<std::string>& excluded) {
  JourneyIndex out;
  for (const auto& [id, j] : journeys) {
    std::vector<JourneyEntry> kept;
    for (const auto& e : j.sessions) {
      if (!excluded.count(e.session_id)) kept.push_back(e);
    }
    if (!kept.empty()) out.emplace(id, Journey::build(id, std::move(kept)));
  }
  return out;
}

/// One fold's partition of the pool. Training rows see customer histories
/// without the held-out sessions, so nothing fitted depends on them; the
/// held-out rows are scored with the full histories.
struct FoldSplit {
  std::vector<const Session*> train;
  std::vector<const Session*> test;
  JourneyIndex train_journeys;

  static FoldSplit make(std::span<const Session* const> pool, const JourneyIndex& journeys,
                        std::span<const std::size_t> test_rows) {
    FoldSplit f;
    f.train = select(pool, complement(pool.size(), test_rows));
    f.test = select(pool, test_rows);
    std::set<std::string> held;
    for (const auto* s : f.test) held.insert(s->id());
    f.train_journeys = journeys_without(journeys, held);
    return f;
  }
};

/// Fit the context and one model on the training sessions only.
inline FoldArtifacts train_fold(std::span<const Session* const> train, const JourneyIndex& journeys,
                                Setting setting, std::size_t step, Variant variant,
                                const ml::TrainConfig& tcfg, const ExtractOptions& opt) {
  FoldArtifacts a;
  a.context = FeatureContext::fit(train, journeys, opt);
  a.train = matrixize(train, journeys, step, setting, variant, a.context, opt);
  a.model = ml::fit(a.train.X, a.train.y, tcfg);
  return a;
}

// ---------------------------------------------------------------------------
// Running the protocol
// ---------------------------------------------------------------------------

struct CellKey {
  ModelKind model;
  Setting setting;
  Variant variant;
  std::size_t step;

  auto tie() const { return std::tuple(index_of(model), index_of(setting), index_of(variant), step); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
  bool operator==(const CellKey& o) const { return tie() == o.tie(); }
};

struct StepRow {
  CellKey key;
  std::vector<PrfScore> folds;  // per fold, in fold order
  double f1_mean = 0.0, f1_std = 0.0;
  double precision_mean = 0.0, recall_mean = 0.0;
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> feature_kinds;
  std::vector<double> importance;  // fold mean
  double static_share = 1.0;
};

struct CellFailure {
  CellKey key;
  std::size_t fold;
  std::string message;
};

struct StepReport {
  std::vector<StepRow> rows;  // ordered by (model, setting, variant, step)
  std::vector<CellFailure> failures;
  std::map<std::string, std::size_t> pool_sizes;  // per setting

  const StepRow* find(ModelKind m, Setting s, Variant v, std::size_t step) const {
    for (const auto& r : rows) {
      if (r.key == CellKey{m, s, v, step}) return &r;
    }
    return nullptr;
  }
};

inline double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

/// 1 minus the summed importance of dynamic columns; 1 when every
/// importance is zero.
inline double static_share_of(std::span<const double> importance, std::span<const FeatureKind> kinds) {
  double dynamic = 0.0;
  for (std::size_t i = 0; i < importance.size(); ++i) {
    if (kinds[i] == FeatureKind::Dynamic) dynamic += importance[i];
  }
  return std::clamp(1.0 - dynamic, 0.0, 1.0);
}

namespace detail {

struct FoldOutcome {
  std::map<CellKey, PrfScore> scores;
  std::map<CellKey, std::vector<double>> importance;
  std::vector<CellFailure> failures;
};

inline FoldOutcome run_fold(std::span<const Session* const> pool, const JourneyIndex& journeys,
                            std::span<const std::size_t> test_rows, std::size_t fold, Setting setting,
                            const ProtocolConfig& cfg) {
  FoldOutcome out;
  const auto opt = cfg.extract_options();
  const auto split = FoldSplit::make(pool, journeys, test_rows);
  const auto ctx = FeatureContext::fit(split.train, split.train_journeys, opt);
  for (std::size_t step : cfg.steps) {
    for (Variant variant : cfg.variants) {
      const auto Dtr = matrixize(split.train, split.train_journeys, step, setting, variant, ctx, opt);
      const auto Dte = matrixize(split.test, journeys, step, setting, variant, ctx, opt);
      for (ModelKind kind : cfg.models) {
        const CellKey key{kind, setting, variant, step};
        try {
          const auto model = ml::fit(Dtr.X, Dtr.y, cell_train_config(cfg, setting, fold, step, variant, kind));
          out.scores[key] = f1(Dte.y, model->predict(Dte.X));
          if (cfg.compute_importance) out.importance[key] = model->importance(Dte.X, Dte.y);
        } catch (const Error& ex) {
          out.failures.push_back({key, fold, ex.what()});
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// Per setting: filter, split into stratified folds, fit context and models
/// on each training portion and score the held-out fold at every step.
inline StepReport run_protocol(std::span<const Session> sessions, const ProtocolConfig& cfg) {
  cfg.validate();
  const JourneyIndex journeys = build_journeys(sessions);
  const auto& catalog = FeatureCatalog::standard();
  StepReport report;
  std::map<CellKey, std::vector<PrfScore>> scores;
  std::map<CellKey, std::vector<std::vector<double>>> importances;

  for (Setting setting : cfg.settings) {
    const auto pool = protocol_pool(sessions, setting, cfg.min_pages);
    report.pool_sizes[std::string(to_string(setting))] = pool.size();
    if (pool.size() < cfg.folds) {
      throw Error(Errc::TooFewSessions, std::string(to_string(setting)) + ": " + std::to_string(pool.size()) +
                                            " sessions with >= " + std::to_string(cfg.min_pages) +
                                            " pages, need at least " + std::to_string(cfg.folds));
    }
    std::vector<int> labels;
    for (const auto* s : pool) labels.push_back(s->purchase() ? 1 : 0);
    const auto folds = kfold_split(labels, cfg.folds, derive_seed(cfg.seed, 0xf0, index_of(setting)));

    std::vector<detail::FoldOutcome> outcomes(folds.size());
    const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, folds.size());
    auto work = [&](std::size_t first) {
      for (std::size_t f = first; f < folds.size(); f += threads) {
        outcomes[f] = detail::run_fold(pool, journeys, folds[f], f, setting, cfg);
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool_threads;
      for (std::size_t k = 0; k < threads; ++k) pool_threads.emplace_back(work, k);
      for (auto& t : pool_threads) t.join();
    }
    for (auto& o : outcomes) {
      for (auto& [k, s] : o.scores) scores[k].push_back(s);
      for (auto& [k, v] : o.importance) importances[k].push_back(std::move(v));
      for (auto& fl : o.failures) report.failures.push_back(std::move(fl));
    }
  }

  for (auto& [key, fold_scores] : scores) {
    StepRow row;
    row.key = key;
    row.folds = fold_scores;
    std::vector<double> f1s;
    for (const auto& s : fold_scores) {
      f1s.push_back(s.f1);
      row.precision_mean += s.precision;
      row.recall_mean += s.recall;
    }
    const double n = static_cast<double>(fold_scores.size());
    row.f1_mean = std::accumulate(f1s.begin(), f1s.end(), 0.0) / n;
    row.f1_std = population_std(f1s);
    row.precision_mean /= n;
    row.recall_mean /= n;
    for (const auto& c : catalog.columns(key.setting, key.variant)) {
      row.feature_names.push_back(c.name);
      row.feature_kinds.push_back(c.kind);
    }
    row.importance.assign(row.feature_names.size(), 0.0);
    if (auto it = importances.find(key); it != importances.end()) {
      for (const auto& v : it->second) {
        for (std::size_t i = 0; i < v.size(); ++i) row.importance[i] += v[i] / static_cast<double>(it->second.size());
      }
    }
    row.static_share = static_share_of(row.importance, row.feature_kinds);
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Static importance share per step for one model and setting.
inline std::vector<std::pair<std::size_t, double>> static_share_curve(const StepReport& report, ModelKind model,
                                                                      Setting setting,
                                                                      Variant variant = Variant::Extended) {
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& r : report.rows) {
    if (r.key.model == model && r.key.setting == setting && r.key.variant == variant) {
      out.emplace_back(r.key.step, r.static_share);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::LengthMismatch, "spearman inputs");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

namespace detail {
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace detail

inline void write_step_report_csv(std::ostream& os, const StepReport& r) {
  os << "model,setting,variant,step,F1_mean,F1_std,precision,recall\n";
  for (const auto& row : r.rows) {
    os << to_string(row.key.model) << ',' << to_string(row.key.setting) << ','
       << to_string(row.key.variant) << ',' << row.key.step << ',' << detail::num(row.f1_mean) << ','
       << detail::num(row.f1_std) << ',' << detail::num(row.precision_mean) << ','
       << detail::num(row.recall_mean) << '\n';
  }
}

inline void write_importance_csv(std::ostream& os, const StepReport& r) {
  os << "model,setting,variant,step,feature,importance\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.feature_names.size(); ++i) {
      os << to_string(row.key.model) << ',' << to_string(row.key.setting) << ','
         << to_string(row.key.variant) << ',' << row.key.step << ',' << row.feature_names[i] << ','
         << detail::num(row.importance[i]) << '\n';
    }
  }
}

inline void write_static_share_csv(std::ostream& os, const StepReport& r) {
  os << "model,setting,variant,step,static_share\n";
  for (const auto& row : r.rows) {
    os << to_string(row.key.model) << ',' << to_string(row.key.setting) << ','
       << to_string(row.key.variant) << ',' << row.key.step << ',' << detail::num(row.static_share) << '\n';
  }
}

}  // namespace pintent

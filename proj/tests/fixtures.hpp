#pragma once

// Corpus builders and the held-out mutation shared by the unit and
// acceptance tests.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "pintent/eval.hpp"
#include "pintent/ingest.hpp"
#include "pintent/synthgen.hpp"

namespace fixture {

using namespace pintent;

/// Generate a corpus and sessionize it with default options.
inline std::vector<Session> synthetic_sessions(const GenConfig& cfg) {
  const auto log = generate(cfg);
  return sessionize(log.events).sessions;
}

/// Rewrite one session while keeping what decides pool membership and fold
/// placement: client token, customer id, first timestamp and the number of
/// page views. Page types, queries, prices, timings after the first event,
/// the purchase action, device and channel all change.
inline Session mutate(const Session& s, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> page(0, enum_size<PageType> - 1);
  std::uniform_int_distribution<std::int64_t> gap(1, 20 * kMinuteMs);
  std::uniform_int_distribution<int> price(1, 99999);
  const Device device = from_index<Device>((index_of(s.device()) + 1) % enum_size<Device>);
  const Channel channel = from_index<Channel>((index_of(s.channel()) + 1) % enum_size<Channel>);
  std::vector<RawEvent> out;
  std::int64_t t = s.start_ms();
  for (const auto& e : s.events()) {
    if (e.action == Action::Purchase) continue;
    RawEvent m = e;
    m.timestamp_ms = t;
    t += gap(rng);
    m.device = device;
    m.channel = channel;
    m.customer_id = s.customer_id();
    if (m.action == Action::PageView) {
      m.page_type = from_index<PageType>(page(rng));
      m.price_cents = price(rng);
    }
    if (m.action == Action::Query) m.query_text = "mutated" + std::to_string(rng() % 1000);
    out.push_back(m);
  }
  if (!s.purchase()) {
    RawEvent buy = out.back();
    buy.timestamp_ms = t;
    buy.action = Action::Purchase;
    out.push_back(buy);
  }
  return Session::from_events(std::move(out));
}

/// Serialized artifacts of every (step, variant, model) cell fitted on the
/// training part of fold `fold`.
inline std::vector<std::string> fold_artifacts(std::span<const Session> sessions, Setting setting,
                                               const std::vector<std::vector<std::size_t>>& folds, std::size_t fold,
                                               const ProtocolConfig& cfg) {
  const auto journeys = build_journeys(sessions);
  const auto pool = protocol_pool(sessions, setting, cfg.min_pages);
  const auto split = FoldSplit::make(pool, journeys, folds[fold]);
  std::vector<std::string> out;
  for (std::size_t step : cfg.steps) {
    for (Variant v : cfg.variants) {
      for (ml::ModelKind kind : cfg.models) {
        const auto a = train_fold(split.train, split.train_journeys, setting, step, v,
                                  cell_train_config(cfg, setting, fold, step, v, kind), cfg.extract_options());
        out.push_back(a.to_json().dump());
      }
    }
  }
  return out;
}

struct LeakageResult {
  std::size_t mutated = 0;
  std::size_t artifacts = 0;
  bool identical = true;
};

/// Mutate every held-out session of `fold` and compare the fold's fitted
/// artifacts byte for byte.
inline LeakageResult leakage_check(const std::vector<Session>& sessions, Setting setting, const ProtocolConfig& cfg,
                                   std::size_t fold, std::uint64_t seed) {
  const auto pool = protocol_pool(sessions, setting, cfg.min_pages);
  std::vector<int> labels;
  for (const auto* s : pool) labels.push_back(s->purchase() ? 1 : 0);
  const auto folds = kfold_split(labels, cfg.folds, seed);
  std::set<std::string> held;
  for (auto r : folds[fold]) held.insert(pool[r]->id());

  std::mt19937_64 rng(seed);
  std::vector<Session> changed;
  LeakageResult res;
  for (const auto& s : sessions) {
    if (held.count(s.id())) {
      changed.push_back(mutate(s, rng));
      ++res.mutated;
    } else {
      changed.push_back(s);
    }
  }
  const auto before = fold_artifacts(sessions, setting, folds, fold, cfg);
  const auto after = fold_artifacts(changed, setting, folds, fold, cfg);
  res.artifacts = before.size();
  res.identical = before == after;
  return res;
}

}  // namespace fixture

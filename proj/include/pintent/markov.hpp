#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/common.hpp"
#include "pintent/session.hpp"

namespace pintent {

using SymbolSequence = std::vector<std::size_t>;

/// First-order Markov chain over a finite, ordered alphabet with Laplace
/// smoothing: P(j | i) = (n_ij + alpha) / (n_i + alpha * |A|).
class MarkovChain {
 public:
  MarkovChain() = default;

  MarkovChain(std::vector<std::string> alphabet, double alpha)
      : alphabet_(std::move(alphabet)),
        alpha_(alpha),
        counts_(alphabet_.size() * alphabet_.size(), 0),
        row_totals_(alphabet_.size(), 0) {
    if (!(alpha > 0.0)) throw Error(Errc::InvalidConfig, "Markov smoothing alpha must be > 0");
    if (alphabet_.empty()) throw Error(Errc::InvalidConfig, "empty Markov alphabet");
  }

  static MarkovChain fit(std::span<const SymbolSequence> sequences,
                         std::vector<std::string> alphabet, double alpha = 1.0) {
    MarkovChain chain(std::move(alphabet), alpha);
    for (const auto& seq : sequences) chain.add_sequence(seq);
    return chain;
  }

  /// Count the adjacent pairs of one sequence.
  void add_sequence(std::span<const std::size_t> seq) {
    for (std::size_t s : seq) check_symbol(s);
    for (std::size_t t = 1; t < seq.size(); ++t) {
      ++counts_[seq[t - 1] * size() + seq[t]];
      ++row_totals_[seq[t - 1]];
    }
  }

  /// Merge counts from a chain over the same alphabet. Associative and
  /// commutative, so partial fits can be reduced in any order.
  void merge(const MarkovChain& other) {
    if (other.alphabet_ != alphabet_) throw Error(Errc::AlphabetMismatch, "merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    for (std::size_t i = 0; i < row_totals_.size(); ++i) row_totals_[i] += other.row_totals_[i];
  }

  std::size_t size() const { return alphabet_.size(); }
  const std::vector<std::string>& alphabet() const { return alphabet_; }
  double alpha() const { return alpha_; }
  std::uint64_t count(std::size_t from, std::size_t to) const { return counts_[from * size() + to]; }
  std::uint64_t row_total(std::size_t from) const { return row_totals_[from]; }

  double prob(std::size_t from, std::size_t to) const {
    return (static_cast<double>(count(from, to)) + alpha_) /
           (static_cast<double>(row_totals_[from]) + alpha_ * static_cast<double>(size()));
  }

  /// Mean log transition probability per transition; 0 below two symbols.
  double log_likelihood(std::span<const std::size_t> seq) const {
    for (std::size_t s : seq) check_symbol(s);
    if (seq.size() < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 1; t < seq.size(); ++t) sum += std::log(prob(seq[t - 1], seq[t]));
    return sum / static_cast<double>(seq.size() - 1);
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < size(); ++i) {
      rows.push_back(std::vector<std::uint64_t>(counts_.begin() + static_cast<long>(i * size()),
                                                counts_.begin() + static_cast<long>((i + 1) * size())));
    }
    return {{"alphabet", alphabet_}, {"alpha", alpha_}, {"counts", rows}};
  }

  static MarkovChain from_json(const nlohmann::json& j) {
    MarkovChain chain(j.at("alphabet").get<std::vector<std::string>>(), j.at("alpha").get<double>());
    const auto& rows = j.at("counts");
    if (rows.size() != chain.size()) throw Error(Errc::DimensionMismatch, "Markov count rows");
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const auto row = rows[i].get<std::vector<std::uint64_t>>();
      if (row.size() != chain.size()) throw Error(Errc::DimensionMismatch, "Markov count row");
      for (std::size_t k = 0; k < row.size(); ++k) {
        chain.counts_[i * chain.size() + k] = row[k];
        chain.row_totals_[i] += row[k];
      }
    }
    return chain;
  }

  bool operator==(const MarkovChain&) const = default;

 private:
  void check_symbol(std::size_t s) const {
    if (s >= size()) {
      throw Error(Errc::UnknownSymbol,
                  "symbol " + std::to_string(s) + " outside alphabet of " + std::to_string(size()));
    }
  }

  std::vector<std::string> alphabet_;
  double alpha_ = 1.0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> row_totals_;
};

template <class E>
std::vector<std::string> enum_alphabet() {
  std::vector<std::string> out;
  for (auto name : EnumTraits<E>::names) out.emplace_back(name);
  return out;
}

template <class E>
SymbolSequence encode_symbols(std::span<const E> values) {
  SymbolSequence out;
  out.reserve(values.size());
  for (E v : values) out.push_back(index_of(v));
  return out;
}

struct SequenceScore {
  double value = 0.0;
};

/// Per-transition log-likelihood ratio of `seq` under the purchase chain
/// versus the non-purchase chain. Positive means purchase-like.
inline SequenceScore class_score(const MarkovChain& purchase, const MarkovChain& non_purchase,
                                 std::span<const std::size_t> seq) {
  if (purchase.alphabet() != non_purchase.alphabet()) {
    throw Error(Errc::AlphabetMismatch, "class chains use different alphabets");
  }
  return {purchase.log_likelihood(seq) - non_purchase.log_likelihood(seq)};
}

/// A pair of class-conditional chains fitted from labelled sequences.
struct ClassChains {
  MarkovChain purchase;
  MarkovChain non_purchase;

  static ClassChains fit(std::span<const SymbolSequence> sequences, std::span<const bool> labels,
                         std::vector<std::string> alphabet, double alpha = 1.0) {
    if (sequences.size() != labels.size()) throw Error(Errc::LengthMismatch, "labels vs sequences");
    ClassChains c{MarkovChain(alphabet, alpha), MarkovChain(alphabet, alpha)};
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      (labels[i] ? c.purchase : c.non_purchase).add_sequence(sequences[i]);
    }
    return c;
  }

  double score(std::span<const std::size_t> seq) const {
    return class_score(purchase, non_purchase, seq).value;
  }

  nlohmann::json to_json() const {
    return {{"purchase", purchase.to_json()}, {"non_purchase", non_purchase.to_json()}};
  }
};

// ---------------------------------------------------------------------------
// Device transitions between consecutive sessions of a customer
// ---------------------------------------------------------------------------

enum class TransitionCondition { All, NextIsPurchase };

struct DeviceTransitionMatrix {
  static constexpr std::size_t kN = enum_size<Device>;
  std::array<std::array<std::uint64_t, kN>, kN> counts{};
  /// Row-stochastic probabilities; nullopt for rows without support.
  std::array<std::optional<std::array<double, kN>>, kN> rows{};

  std::optional<double> prob(Device from, Device to) const {
    const auto& r = rows[index_of(from)];
    if (!r) return std::nullopt;
    return (*r)[index_of(to)];
  }
};

inline DeviceTransitionMatrix transition_matrix(
    std::span<const Journey> journeys,
    TransitionCondition condition = TransitionCondition::NextIsPurchase) {
  DeviceTransitionMatrix m;
  for (const auto& j : journeys) {
    for (std::size_t i = 1; i < j.sessions.size(); ++i) {
      if (condition == TransitionCondition::NextIsPurchase && !j.sessions[i].purchase) continue;
      ++m.counts[index_of(j.sessions[i - 1].device)][index_of(j.sessions[i].device)];
    }
  }
  for (std::size_t r = 0; r < DeviceTransitionMatrix::kN; ++r) {
    std::uint64_t total = 0;
    for (auto c : m.counts[r]) total += c;
    if (total == 0) continue;
    std::array<double, DeviceTransitionMatrix::kN> row{};
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = static_cast<double>(m.counts[r][c]) / static_cast<double>(total);
    }
    m.rows[r] = row;
  }
  return m;
}

inline std::vector<Journey> journey_list(const std::map<std::string, Journey>& by_customer) {
  std::vector<Journey> out;
  out.reserve(by_customer.size());
  for (const auto& [id, j] : by_customer) out.push_back(j);
  return out;
}

}  // namespace pintent

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pintent/markov.hpp"

using namespace pintent;

namespace {

std::vector<std::string> letters(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(1, static_cast<char>('A' + i));
  return out;
}

std::vector<SymbolSequence> random_sequences(std::mt19937_64& rng, std::size_t states, std::size_t count) {
  std::uniform_int_distribution<std::size_t> len(0, 12), sym(0, states - 1);
  std::vector<SymbolSequence> out(count);
  for (auto& s : out) {
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) s.push_back(sym(rng));
  }
  return out;
}

}  // namespace

TEST(MarkovChain, HandWorkedProbabilities) {
  const std::vector<SymbolSequence> seqs = {{0, 1, 0, 1}};
  const auto c = MarkovChain::fit(seqs, letters(2), 1.0);
  // A->B twice out of two exits from A: (2+1)/(2+2).
  EXPECT_DOUBLE_EQ(c.prob(0, 1), 0.75);
  // B->A once out of one exit from B: (1+1)/(1+2).
  EXPECT_DOUBLE_EQ(c.prob(1, 0), 2.0 / 3.0);
  const std::vector<std::size_t> aba = {0, 1, 0};
  EXPECT_NEAR(c.log_likelihood(aba), (std::log(0.75) + std::log(2.0 / 3.0)) / 2.0, 1e-12);
  EXPECT_NEAR(c.log_likelihood(aba), -0.3466, 1e-4);
}

TEST(MarkovChain, RowsSumToOneAndUnseenRowIsUniform) {
  const std::vector<SymbolSequence> seqs = {{0, 1, 2, 2, 0}};
  const auto c = MarkovChain::fit(seqs, letters(4), 0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += c.prob(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(c.prob(3, j), 0.25);
}

TEST(MarkovChain, MatchesBruteForceOnRandomCorpora) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t states = 2 + static_cast<std::size_t>(trial % 4);
    const double alpha = 0.25 + 0.25 * (trial % 5);
    const auto train = random_sequences(rng, states, 8);
    const auto c = MarkovChain::fit(train, letters(states), alpha);
    for (std::size_t i = 0; i < states; ++i) {
      for (std::size_t j = 0; j < states; ++j) {
        EXPECT_NEAR(c.prob(i, j), oracle::transition(train, states, alpha, i, j), 1e-9);
      }
    }
    for (const auto& probe : random_sequences(rng, states, 5)) {
      EXPECT_NEAR(c.log_likelihood(probe), oracle::mean_log_likelihood(train, states, alpha, probe), 1e-9);
    }
  }
}

TEST(MarkovChain, MergeEqualsJointFit) {
  std::mt19937_64 rng(4);
  const auto a = random_sequences(rng, 4, 10), b = random_sequences(rng, 4, 10);
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  auto ca = MarkovChain::fit(a, letters(4));
  auto cb = MarkovChain::fit(b, letters(4));
  const auto joint = MarkovChain::fit(both, letters(4));
  auto ab = ca;
  ab.merge(cb);
  cb.merge(ca);
  EXPECT_EQ(ab, joint);
  EXPECT_EQ(cb, joint);
}

TEST(MarkovChain, ErrorsAndSerialization) {
  MarkovChain c(letters(3), 1.0);
  const std::vector<std::size_t> bad = {0, 3};
  try {
    c.add_sequence(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownSymbol);
  }
  MarkovChain other(letters(2), 1.0);
  try {
    c.merge(other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AlphabetMismatch);
  }
  EXPECT_THROW(MarkovChain(letters(2), 0.0), Error);
  const std::vector<std::size_t> seq = {0, 1, 2, 1};
  c.add_sequence(seq);
  EXPECT_EQ(MarkovChain::from_json(c.to_json()), c);
  EXPECT_DOUBLE_EQ(c.log_likelihood(std::vector<std::size_t>{2}), 0.0);
}

TEST(ClassScore, AntisymmetricAndZeroForEqualChains) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = MarkovChain::fit(random_sequences(rng, 5, 6), letters(5));
    const auto n = MarkovChain::fit(random_sequences(rng, 5, 6), letters(5));
    for (const auto& s : random_sequences(rng, 5, 4)) {
      EXPECT_EQ(class_score(p, n, s).value, -class_score(n, p, s).value);
      EXPECT_EQ(class_score(p, p, s).value, 0.0);
    }
  }
  EXPECT_THROW(class_score(MarkovChain(letters(2), 1), MarkovChain(letters(3), 1), std::vector<std::size_t>{0}), Error);
}

TEST(ClassChains, FitSplitsByLabel) {
  const std::vector<SymbolSequence> seqs = {{0, 1, 0, 1}, {1, 1, 1}};
  const bool labels[] = {true, false};
  const auto cc = ClassChains::fit(seqs, labels, letters(2));
  EXPECT_EQ(cc.purchase.count(0, 1), 2u);
  EXPECT_EQ(cc.non_purchase.count(1, 1), 2u);
  EXPECT_GT(cc.score(std::vector<std::size_t>{0, 1, 0}), 0.0);
  EXPECT_LT(cc.score(std::vector<std::size_t>{1, 1, 1}), 0.0);
}

TEST(TransitionMatrix, ConditionedOnPurchaseTarget) {
  auto e = [](std::string id, Device d, std::int64_t t, bool p) { return JourneyEntry{id, d, t, t + 1, p}; };
  const std::vector<Journey> js = {
      Journey::build("u1", {e("a", Device::TV, 0, false), e("b", Device::PC, kHourMs, true), e("c", Device::PC, 2 * kHourMs, false)}),
      Journey::build("u2", {e("d", Device::TV, 0, false), e("e", Device::Smartphone, kHourMs, false)}),
  };
  const auto all = transition_matrix(js, TransitionCondition::All);
  EXPECT_EQ(all.counts[index_of(Device::TV)][index_of(Device::PC)], 1u);
  EXPECT_DOUBLE_EQ(*all.prob(Device::TV, Device::PC), 0.5);
  EXPECT_DOUBLE_EQ(*all.prob(Device::PC, Device::PC), 1.0);
  const auto buy = transition_matrix(js, TransitionCondition::NextIsPurchase);
  EXPECT_DOUBLE_EQ(*buy.prob(Device::TV, Device::PC), 1.0);
  EXPECT_FALSE(buy.prob(Device::PC, Device::PC).has_value());
  EXPECT_FALSE(buy.prob(Device::Tablet, Device::PC).has_value());
}

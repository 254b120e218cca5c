#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "crowdbin/binning.hpp"

namespace crowdbin {
namespace {

using Entries = std::vector<CountHistogram::Entry>;

CountHistogram hist_of(Entries e) { return CountHistogram(std::move(e)); }

// Consecutive counts 0..m-1 with the given frequencies.
CountHistogram dense_hist(const std::vector<std::int64_t>& freqs) {
  Entries e;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    e.push_back({static_cast<Count>(i), freqs[i]});
  }
  return hist_of(std::move(e));
}

// Direct evaluation of the multinomial pmf with plug-in probabilities, in
// plain floating point. Only valid for small totals.
double multinomial_pmf_oracle(const std::vector<std::int64_t>& x) {
  const auto total = std::accumulate(x.begin(), x.end(), std::int64_t{0});
  auto fact = [](std::int64_t n) {
    double f = 1.0;
    for (std::int64_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
    return f;
  };
  double coef = fact(total);
  double prob = 1.0;
  for (auto xi : x) {
    coef /= fact(xi);
    prob *= std::pow(static_cast<double>(xi) / static_cast<double>(total),
                     static_cast<double>(xi));
  }
  return coef * prob;
}

double poisson_pmf_oracle(const std::vector<std::int64_t>& x) {
  const double rate =
      static_cast<double>(std::accumulate(x.begin(), x.end(), std::int64_t{0})) /
      static_cast<double>(x.size());
  double p = 1.0;
  for (auto xi : x) {
    double term = std::exp(-rate);
    for (std::int64_t i = 1; i <= xi; ++i) term *= rate / static_cast<double>(i);
    p *= term;
  }
  return p;
}

TEST(Smooth, FillsRangeAndAddsBeta) {
  const auto h = smooth(hist_of({{0, 3}, {2, 1}}), 1);
  EXPECT_EQ(h.entries(), (Entries{{0, 4}, {1, 1}, {2, 2}}));
  EXPECT_EQ(h.total(), 4 + 3);
}

TEST(Smooth, ZeroBetaIsIdentity) {
  const auto h = hist_of({{3, 2}, {9, 5}});
  EXPECT_EQ(smooth(h, 0), h);
}

TEST(Smooth, RangeStartsAtZero) {
  const auto h = smooth(hist_of({{5, 2}}), 1);
  EXPECT_EQ(h.entries(),
            (Entries{{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 3}}));
  EXPECT_EQ(h.total(), 2 + 6);
}

TEST(Smooth, RejectsNegativeBeta) {
  EXPECT_THROW(smooth(hist_of({{1, 1}}), -1), Error);
}

TEST(BinLogLikelihood, SingleCountIsZero) {
  const std::vector<std::int64_t> f{17};
  EXPECT_EQ(bin_log_likelihood(f, LikelihoodModel::multinomial), 0.0);
}

TEST(BinLogLikelihood, MultinomialMatchesDirectPmf) {
  const std::vector<std::int64_t> ones{1, 1};
  EXPECT_NEAR(bin_log_likelihood(ones, LikelihoodModel::multinomial),
              std::log(multinomial_pmf_oracle(ones)), 1e-12);
  EXPECT_NEAR(bin_log_likelihood(ones, LikelihoodModel::multinomial),
              -0.6931471805599453, 1e-12);

  const std::vector<std::int64_t> twos{2, 2};
  EXPECT_NEAR(bin_log_likelihood(twos, LikelihoodModel::multinomial),
              std::log(multinomial_pmf_oracle(twos)), 1e-12);
  EXPECT_NEAR(bin_log_likelihood(twos, LikelihoodModel::multinomial),
              -0.9808292530117262, 1e-12);

  const std::vector<std::int64_t> mixed{3, 1, 7, 2};
  EXPECT_NEAR(bin_log_likelihood(mixed, LikelihoodModel::multinomial),
              std::log(multinomial_pmf_oracle(mixed)), 1e-10);
}

TEST(BinLogLikelihood, PoissonMatchesDirectPmf) {
  for (const auto& x : std::vector<std::vector<std::int64_t>>{
           {4}, {1, 1}, {2, 5}, {3, 1, 7, 2}, {10, 12, 9}}) {
    EXPECT_NEAR(bin_log_likelihood(x, LikelihoodModel::poisson),
                std::log(poisson_pmf_oracle(x)), 1e-10);
  }
}

TEST(BinLogLikelihood, LargeFrequenciesStayFinite) {
  const std::vector<std::int64_t> big{1'000'000, 3'000'000, 5};
  EXPECT_TRUE(std::isfinite(bin_log_likelihood(big, LikelihoodModel::multinomial)));
  EXPECT_TRUE(std::isfinite(bin_log_likelihood(big, LikelihoodModel::poisson)));
}

TEST(BinLogLikelihood, RejectsZeroFrequencyAndEmpty) {
  const std::vector<std::int64_t> zero{0, 3};
  EXPECT_THROW(bin_log_likelihood(zero, LikelihoodModel::multinomial), Error);
  EXPECT_THROW(bin_log_likelihood({}, LikelihoodModel::multinomial), Error);
}

TEST(LogPrior, ZeroOutsideBound) {
  const PriorConfig p{0.5, 3};
  EXPECT_EQ(log_prior(4, p), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(log_prior(0, p), -std::numeric_limits<double>::infinity());
}

TEST(LogPrior, NormalizedHandValue) {
  // gamma = 0.5, alpha = 2: P(1) = 0.5 / (0.5 + 0.25) = 2/3.
  EXPECT_NEAR(log_prior(1, {0.5, 2}), std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(log_prior(2, {0.5, 2}), std::log(1.0 / 3.0), 1e-15);
}

TEST(LogPrior, SumsToOneOverGrid) {
  for (int g = 1; g <= 9; ++g) {
    for (std::int64_t alpha = 1; alpha <= 64; ++alpha) {
      const PriorConfig p{g / 10.0, alpha};
      double sum = 0.0;
      for (std::int64_t n = 1; n <= alpha; ++n) sum += std::exp(log_prior(n, p));
      EXPECT_NEAR(sum, 1.0, 1e-12) << "gamma=" << p.gamma << " alpha=" << alpha;
    }
  }
}

TEST(LogPrior, RejectsBadGamma) {
  EXPECT_THROW(log_prior(1, {1.0, 2}), Error);
  EXPECT_THROW(log_prior(1, {0.0, 2}), Error);
  EXPECT_THROW(log_prior(1, {0.5, 0}), Error);
}

TEST(EdgesFromStarts, StretchesOverGaps) {
  const auto h = hist_of({{2, 1}, {5, 1}, {9, 1}});
  const std::vector<std::size_t> starts{0, 1};
  EXPECT_EQ(edges_from_starts(h, starts), (std::vector<Bin>{{0, 4}, {5, 9}}));
}

TEST(OptimalBins, SingleDistinctCount) {
  const auto h = hist_of({{0, 5}});
  const PriorConfig p{0.5, 1};
  const auto r = optimal_bins(h, p, LikelihoodModel::multinomial);
  EXPECT_EQ(r.edges, (std::vector<Bin>{{0, 0}}));
  EXPECT_DOUBLE_EQ(r.log_posterior, log_prior(1, p));
}

TEST(OptimalBins, MatchesOracleOnTwoClusters) {
  const auto h = hist_of({{0, 100}, {1, 100}, {50, 100}, {51, 100}});
  const PriorConfig p{0.5, 4};
  for (auto model : {LikelihoodModel::multinomial, LikelihoodModel::poisson}) {
    const auto dp = optimal_bins(h, p, model);
    const auto bf = brute_force_bins(h, p, model);
    EXPECT_EQ(dp.edges, bf.edges);
    EXPECT_NEAR(dp.log_posterior, bf.log_posterior, 1e-9);
  }
}

TEST(OptimalBins, TinyGammaCollapsesToOneBin) {
  // gamma = 1e-6 costs ~13.8 nats per extra bin, which is not always enough
  // to outweigh merging frequencies as different as 1 and 50; the oracle
  // decides there. At 1e-300 (~690 nats per bin) one bin always wins.
  std::mt19937 gen(7);
  std::uniform_int_distribution<int> m_dist(1, 6), f_dist(1, 50);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int64_t> f(static_cast<std::size_t>(m_dist(gen)));
    for (auto& x : f) x = f_dist(gen);
    const auto h = dense_hist(f);
    const auto alpha = static_cast<std::int64_t>(f.size());
    for (auto model : {LikelihoodModel::multinomial, LikelihoodModel::poisson}) {
      const auto small = optimal_bins(h, {1e-6, alpha}, model);
      EXPECT_EQ(small.edges, brute_force_bins(h, {1e-6, alpha}, model).edges);

      const auto tiny = optimal_bins(h, {1e-300, alpha}, model);
      const auto bf = brute_force_bins(h, {1e-300, alpha}, model);
      EXPECT_EQ(tiny.edges.size(), 1u);
      EXPECT_EQ(tiny.edges, bf.edges);
    }
  }
}

TEST(OptimalBins, MatchesOracleOnRandomHistograms) {
  std::mt19937 gen(12345);
  std::uniform_int_distribution<int> m_dist(1, 12), f_dist(1, 50),
      gap_dist(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = static_cast<std::size_t>(m_dist(gen));
    Entries e;
    Count c = 0;
    for (std::size_t i = 0; i < m; ++i) {
      e.push_back({c, f_dist(gen)});
      c += trial % 2 == 0 ? 1 : gap_dist(gen);
    }
    const auto h = hist_of(e);
    for (double gamma : {0.1, 0.5, 0.9}) {
      // Unbounded and binding alpha.
      for (std::int64_t alpha :
           {static_cast<std::int64_t>(m), std::max<std::int64_t>(1, m / 3)}) {
        const PriorConfig p{gamma, alpha};
        for (auto model :
             {LikelihoodModel::multinomial, LikelihoodModel::poisson}) {
          const auto dp = optimal_bins(h, p, model);
          const auto bf = brute_force_bins(h, p, model);
          ASSERT_EQ(dp.edges, bf.edges) << "trial " << trial;
          ASSERT_NEAR(dp.log_posterior, bf.log_posterior, 1e-9);
          ASSERT_LE(static_cast<std::int64_t>(dp.edges.size()), alpha);
        }
      }
    }
  }
}

TEST(OptimalBins, TieGoesToEarliestLastSplit) {
  // Frequencies [1,1,1]: {0},{1,2} and {0,1},{2} score the same. With
  // log(gamma) in (-0.811, -0.693) two bins beat one and three bins.
  const auto h = dense_hist({1, 1, 1});
  const PriorConfig p{0.45, 3};
  const auto dp = optimal_bins(h, p, LikelihoodModel::multinomial);
  const auto bf = brute_force_bins(h, p, LikelihoodModel::multinomial);
  const std::vector<Bin> expected{{0, 0}, {1, 2}};
  EXPECT_EQ(dp.edges, expected);
  EXPECT_EQ(bf.edges, expected);
  EXPECT_NEAR(dp.log_posterior, bf.log_posterior, 1e-12);
}

TEST(OptimalBins, ScoreDecomposesOverReturnedBins) {
  std::mt19937 gen(99);
  std::uniform_int_distribution<int> f_dist(1, 200);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int64_t> f(60);
    for (auto& x : f) x = f_dist(gen);
    const auto h = dense_hist(f);
    const PriorConfig p{0.3, 60};
    for (auto model : {LikelihoodModel::multinomial, LikelihoodModel::poisson}) {
      const auto r = optimal_bins(h, p, model);
      double recomputed = log_prior(static_cast<std::int64_t>(r.edges.size()), p);
      for (const auto& b : r.edges) {
        std::vector<std::int64_t> freqs;
        for (Count c = b.lo; c <= b.hi; ++c) freqs.push_back(f[static_cast<std::size_t>(c)]);
        recomputed += bin_log_likelihood(freqs, model);
      }
      EXPECT_NEAR(r.log_posterior, recomputed, 1e-9);
    }
  }
}

TEST(OptimalBins, ReturnsValidPartitionAndFiniteTable) {
  const auto h = smooth(hist_of({{0, 40}, {3, 25}, {10, 5}, {80, 1}}), 1);
  const auto table = solve_partition_dp(h, {0.6, 81}, LikelihoodModel::multinomial);
  for (double v : table.best.back()) EXPECT_TRUE(std::isfinite(v));
  const auto r = optimal_bins(h, {0.6, 81}, LikelihoodModel::multinomial);
  EXPECT_NO_THROW(validate_edges(r.edges));
  EXPECT_EQ(r.edges.back().hi, 80);
}

TEST(OptimalBins, InvariantToRecordOrder) {
  std::mt19937 gen(3);
  std::lognormal_distribution<double> counts(2.0, 0.8);
  std::vector<CountRecord> records;
  for (int i = 0; i < 500; ++i) {
    records.push_back({"img" + std::to_string(i),
                       static_cast<Count>(std::floor(counts(gen)))});
  }
  const auto h1 = build_histogram(records);
  std::shuffle(records.begin(), records.end(), gen);
  const auto h2 = build_histogram(records);
  EXPECT_EQ(h1, h2);
  const auto s = smooth(h1, 1);
  const PriorConfig p{0.5, static_cast<std::int64_t>(s.distinct())};
  const auto a = optimal_bins(s, p, LikelihoodModel::multinomial);
  const auto b = optimal_bins(smooth(h2, 1), p, LikelihoodModel::multinomial);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.log_posterior, b.log_posterior);
}

TEST(OptimalBins, RejectsEmptyHistogram) {
  EXPECT_THROW(optimal_bins(CountHistogram{}, {0.5, 1}, LikelihoodModel::multinomial),
               Error);
}

TEST(BruteForceBins, SingleCountMatchesDp) {
  const auto h = hist_of({{4, 9}});
  const PriorConfig p{0.3, 1};
  const auto dp = optimal_bins(h, p, LikelihoodModel::poisson);
  const auto bf = brute_force_bins(h, p, LikelihoodModel::poisson);
  EXPECT_EQ(dp.edges, bf.edges);
  EXPECT_EQ(dp.log_posterior, bf.log_posterior);
}

TEST(BruteForceBins, RejectsLargeHistograms) {
  EXPECT_THROW(brute_force_bins(dense_hist(std::vector<std::int64_t>(21, 1)),
                                {0.5, 21}, LikelihoodModel::multinomial),
               Error);
}

TEST(PartitionLogLikelihood, ClampsOverflowIntoLastBin) {
  const std::vector<Bin> edges{{0, 4}, {5, 9}};
  const auto h = hist_of({{1, 2}, {7, 3}, {20, 3}});
  const std::vector<std::int64_t> last{3, 3};
  EXPECT_NEAR(partition_log_likelihood(h, edges, LikelihoodModel::multinomial),
              bin_log_likelihood(last, LikelihoodModel::multinomial), 1e-12);
}

TEST(HeldOutLikelihood, SingleValueInOneBinContributesZero) {
  const std::vector<Bin> edges{{0, 4}, {5, 9}};
  const auto train = hist_of({{0, 1}, {6, 1}});
  const auto test = hist_of({{7, 12}});
  HeldOutConfig cfg;
  cfg.beta = 0;
  EXPECT_EQ(held_out_likelihood(train, test, edges, cfg), 0.0);
}

TEST(HeldOutLikelihood, DegenerateSplitThrows) {
  const auto h = hist_of({{0, 3}});
  EXPECT_THROW(held_out_likelihood(h, 0.1, 0.5, 0), Error);
  EXPECT_THROW(held_out_likelihood(h, 0.0, 0.5, 0), Error);
}

TEST(HeldOutLikelihood, DeterministicForSeed) {
  std::mt19937 gen(1);
  std::lognormal_distribution<double> counts(3.0, 1.0);
  std::vector<Count> c(400);
  for (auto& x : c) x = static_cast<Count>(std::floor(counts(gen)));
  const auto h = build_histogram(c);
  const double a = held_out_likelihood(h, 0.2, 0.5, 4);
  const double b = held_out_likelihood(h, 0.2, 0.5, 4);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_NE(a, held_out_likelihood(h, 0.2, 0.5, 5));
}

TEST(HeldOutLikelihood, TrainSideProbabilitiesAreFinite) {
  std::vector<Count> c;
  for (int i = 0; i < 200; ++i) c.push_back(i % 37 + (i % 5 == 0 ? 60 : 0));
  const auto h = build_histogram(c);
  HeldOutConfig cfg;
  cfg.probabilities = HeldOutProbabilities::train;
  for (auto model : {LikelihoodModel::multinomial, LikelihoodModel::poisson}) {
    cfg.model = model;
    EXPECT_TRUE(std::isfinite(held_out_likelihood(h, 0.25, 0.4, 2, cfg)));
  }
}

TEST(SplitCounts, PreservesMultiset) {
  const auto h = hist_of({{0, 10}, {3, 5}, {9, 5}});
  const auto s = split_counts(h, 0.25, 11);
  EXPECT_EQ(s.test.total(), 5);
  EXPECT_EQ(s.train.total(), 15);
  auto all = s.train.expand();
  const auto t = s.test.expand();
  all.insert(all.end(), t.begin(), t.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, h.expand());
}

TEST(FitBins, SmoothsBeforeFitting) {
  const auto spec = fit_bins(hist_of({{0, 30}, {40, 2}}), 0.5, std::nullopt, 1,
                             LikelihoodModel::multinomial);
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(spec.max_count(), 40);
  EXPECT_EQ(spec.alpha, 41);
  EXPECT_EQ(spec.beta, 1);
}

}  // namespace
}  // namespace crowdbin

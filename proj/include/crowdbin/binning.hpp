#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crowdbin/data_model.hpp"

namespace crowdbin {

/// Per-bin likelihood family used to score candidate bins.
enum class LikelihoodModel { multinomial, poisson };

LikelihoodModel parse_likelihood_model(const std::string& name);
const char* to_string(LikelihoodModel model);

/// Geometric prior over the number of bins:
///   P(n) = P0 * gamma^n  for 1 <= n <= alpha, 0 otherwise,
/// with P0 = (1 - gamma) / (gamma (1 - gamma^alpha)) so that the
/// probabilities over 1..alpha sum to one.
struct PriorConfig {
  double gamma = 0.5;
  std::int64_t alpha = 1;

  /// log P0.
  double log_normalizer() const;
  void validate() const;
};

/// Adds `beta` to the frequency of every integer in [0, C]. Integers absent
/// from the histogram enter with frequency `beta`; with beta = 0 the input
/// is returned unchanged.
CountHistogram smooth(const CountHistogram& hist, std::int64_t beta);

/// Log-likelihood of one bin given the frequencies of its distinct counts.
///
/// multinomial: log(X!) - sum log(x_j!) + sum x_j log(x_j / X), i.e. the
///   multinomial with plug-in probabilities p_j = x_j / X.
/// poisson: sum [x_j log(lambda) - lambda - log(x_j!)] with lambda the mean
///   frequency in the bin.
///
/// All factorials go through lgamma. Every frequency must be >= 1.
double bin_log_likelihood(std::span<const std::int64_t> freqs,
                          LikelihoodModel model);

/// log P(num_bins); -infinity when num_bins is outside [1, alpha].
double log_prior(std::int64_t num_bins, const PriorConfig& prior);

struct BinningResult {
  std::vector<Bin> edges;
  /// Sum of bin log-likelihoods plus log_prior(edges.size()).
  double log_posterior = 0.0;
};

/// Converts a partition given as start indices into the histogram's entries
/// into count-range edges covering [0, C]. Bin k spans from the previous
/// bin's upper edge + 1 up to one below the next bin's first distinct count.
std::vector<Bin> edges_from_starts(const CountHistogram& hist,
                                   std::span<const std::size_t> starts);

/// Memo for the optimal-partition recursion over distinct counts.
///
/// best[k][r] is the best score of a partition of the first r distinct
/// counts into at most k bins (excluding the prior's normalizer);
/// last_change[k][r] is the 0-based index where that partition's last bin
/// starts. Without a binding alpha only one layer is kept.
struct DpTable {
  std::vector<std::vector<double>> best;
  std::vector<std::vector<std::size_t>> last_change;
  /// Prefix sums over the distinct counts standing in for the expanded
  /// sample sequence: frequencies, log(f!) and f log f.
  std::vector<std::int64_t> freq_prefix;
  std::vector<double> log_factorial_prefix;
  std::vector<double> f_log_f_prefix;

  /// Start indices of the optimal partition, recovered by backtracking.
  std::vector<std::size_t> backtrack() const;
};

/// Fills the DP table for `hist`. Ties between split points within a
/// relative 1e-12 go to the smaller split index.
DpTable solve_partition_dp(const CountHistogram& hist, const PriorConfig& prior,
                           LikelihoodModel model);

/// MAP partition of the count range under `prior` and `model`. Candidate
/// change points are the boundaries between distinct counts. Expects a
/// smoothed histogram but accepts gaps (edges then stretch over them).
BinningResult optimal_bins(const CountHistogram& hist, const PriorConfig& prior,
                           LikelihoodModel model);

/// Exhaustive search over all 2^(m-1) contiguous partitions. For m <= 20;
/// used as the reference for optimal_bins.
BinningResult brute_force_bins(const CountHistogram& hist,
                               const PriorConfig& prior, LikelihoodModel model);

/// Sum of bin log-likelihoods of `hist` grouped by `edges`. Counts above the
/// last edge are clamped into the last bin. Empty bins contribute zero.
double partition_log_likelihood(const CountHistogram& hist,
                                std::span<const Bin> edges,
                                LikelihoodModel model);

/// Where the held-out likelihood takes its bin probabilities from.
enum class HeldOutProbabilities {
  /// Plug-in estimates from the held-out frequencies.
  test,
  /// Estimates from the smoothed training frequencies.
  train,
};

struct HeldOutConfig {
  LikelihoodModel model = LikelihoodModel::multinomial;
  /// Additive smoothing applied independently to each side of the split.
  std::int64_t beta = 1;
  /// Upper bound on the bin count; defaults to the number of distinct counts
  /// in the smoothed training part.
  std::optional<std::int64_t> alpha;
  HeldOutProbabilities probabilities = HeldOutProbabilities::test;
};

struct CountSplit {
  CountHistogram train;
  CountHistogram test;
};

/// Shuffles the sorted sample multiset with `seed` and moves the first
/// round(ratio * N) samples to the test side.
CountSplit split_counts(const CountHistogram& data, double ratio,
                        std::uint64_t seed);

/// Fits bins on the training part of a seeded split and scores the test
/// part against them.
double held_out_likelihood(const CountHistogram& data, double ratio,
                           double gamma, std::uint64_t seed,
                           const HeldOutConfig& cfg = {});

/// Scores `test` against bins fitted on `train`; `train` must already be
/// smoothed if probabilities come from it.
double held_out_likelihood(const CountHistogram& train,
                           const CountHistogram& test,
                           std::span<const Bin> edges,
                           const HeldOutConfig& cfg);

struct GridSearchConfig {
  std::vector<double> gammas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> ratios{0.1, 0.2, 0.25};
  /// Repeats per (gamma, ratio); seeds first_seed .. first_seed + seeds - 1.
  int seeds = 10;
  std::uint64_t first_seed = 0;
  std::int64_t beta = 1;
  LikelihoodModel model = LikelihoodModel::multinomial;
  /// Bin-count bound for the final fit; defaults to m after smoothing.
  std::optional<std::int64_t> alpha;
  HeldOutProbabilities probabilities = HeldOutProbabilities::test;
  /// Worker threads; 0 picks the hardware concurrency.
  unsigned threads = 0;
};

struct GridSearchResult {
  double best_gamma = 0.0;
  std::size_t best_index = 0;
  /// The gamma grid in ascending order; rows of mean_likelihood follow it.
  std::vector<double> gammas;
  std::vector<double> ratios;
  /// mean_likelihood[g][r]: held-out likelihood averaged over seeds.
  std::vector<std::vector<double>> mean_likelihood;
  std::vector<std::int64_t> index_sums;
  BinSpec bins;
  double log_posterior = 0.0;
};

/// For each ratio, ranks gammas by descending mean likelihood (ties keep
/// the smaller gamma first) and sums each gamma's 0-based rank over ratios.
std::vector<std::int64_t> rank_index_sums(
    const std::vector<std::vector<double>>& mean_likelihood);

/// Index of the smallest index sum; ties go to the earlier gamma.
std::size_t select_best_gamma(std::span<const std::int64_t> index_sums);

/// Cross-validated choice of gamma followed by a final fit on all records.
GridSearchResult grid_search_gamma(std::span<const CountRecord> records,
                                   const GridSearchConfig& cfg = {});
GridSearchResult grid_search_gamma(const CountHistogram& data,
                                   const GridSearchConfig& cfg = {});

/// Smooths `hist` with `beta`, fits the MAP partition and packs it into a
/// BinSpec. `alpha` defaults to the smoothed distinct-count total.
BinSpec fit_bins(const CountHistogram& hist, double gamma,
                 std::optional<std::int64_t> alpha, std::int64_t beta,
                 LikelihoodModel model, double* log_posterior = nullptr);

}  // namespace crowdbin

#include "crowdbin/binning.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <map>

#include "crowdbin/rng.hpp"

namespace crowdbin {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Candidates within this relative distance of the maximum count as ties.
constexpr double kTieRelTol = 1e-12;

double tie_tolerance(double best) {
  return kTieRelTol * std::max(1.0, std::fabs(best));
}

// Constant-time bin scores over a contiguous run of distinct counts, from
// prefix sums of f, log(f!) and f log f plus lookup tables for log(X!) and
// log X up to the histogram total.
class BinScorer {
 public:
  BinScorer(const CountHistogram& hist, LikelihoodModel model)
      : model_(model) {
    const auto& e = hist.entries();
    const std::size_t m = e.size();
    freq_.assign(m + 1, 0);
    log_fact_.assign(m + 1, 0.0);
    f_log_f_.assign(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto f = e[i].frequency;
      const double fd = static_cast<double>(f);
      freq_[i + 1] = freq_[i] + f;
      log_fact_[i + 1] = log_fact_[i] + std::lgamma(fd + 1.0);
      f_log_f_[i + 1] = f_log_f_[i] + fd * std::log(fd);
    }
    const auto n = static_cast<std::size_t>(hist.total());
    lgamma_table_.resize(n + 1);
    log_table_.resize(n + 1);
    for (std::size_t x = 0; x <= n; ++x) {
      lgamma_table_[x] = std::lgamma(static_cast<double>(x) + 1.0);
      log_table_[x] = x == 0 ? kNegInf : std::log(static_cast<double>(x));
    }
  }

  // Log-likelihood of the bin holding distinct counts first..last
  // (0-based, inclusive).
  double operator()(std::size_t first, std::size_t last) const {
    const auto total = static_cast<std::size_t>(freq_[last + 1] - freq_[first]);
    const double x = static_cast<double>(total);
    const double log_fact = log_fact_[last + 1] - log_fact_[first];
    if (model_ == LikelihoodModel::multinomial) {
      if (first == last) return 0.0;
      const double f_log_f = f_log_f_[last + 1] - f_log_f_[first];
      return lgamma_table_[total] - log_fact + f_log_f - x * log_table_[total];
    }
    const std::size_t width = last - first + 1;
    return x * (log_table_[total] - log_table_[width]) - x - log_fact;
  }

  const std::vector<std::int64_t>& freq_prefix() const { return freq_; }
  const std::vector<double>& log_fact_prefix() const { return log_fact_; }
  const std::vector<double>& f_log_f_prefix() const { return f_log_f_; }

 private:
  LikelihoodModel model_;
  std::vector<std::int64_t> freq_;
  std::vector<double> log_fact_;
  std::vector<double> f_log_f_;
  std::vector<double> lgamma_table_;
  std::vector<double> log_table_;
};

}  // namespace

LikelihoodModel parse_likelihood_model(const std::string& name) {
  if (name == "multinomial") return LikelihoodModel::multinomial;
  if (name == "poisson") return LikelihoodModel::poisson;
  throw Error("unknown likelihood model '" + name +
              "' (expected multinomial or poisson)");
}

const char* to_string(LikelihoodModel model) {
  return model == LikelihoodModel::multinomial ? "multinomial" : "poisson";
}

void PriorConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0, 1)");
  if (alpha < 1) throw Error("alpha must be >= 1");
}

double PriorConfig::log_normalizer() const {
  // P0 makes sum_{n=1..alpha} P0 gamma^n equal one.
  return std::log1p(-gamma) - std::log1p(-std::pow(gamma, alpha)) -
         std::log(gamma);
}

CountHistogram smooth(const CountHistogram& hist, std::int64_t beta) {
  if (beta < 0) throw Error("smoothing factor beta must be >= 0");
  if (beta == 0 || hist.empty()) return hist;
  std::vector<CountHistogram::Entry> out;
  out.reserve(static_cast<std::size_t>(hist.max_count()) + 1);
  auto it = hist.entries().begin();
  for (Count c = 0; c <= hist.max_count(); ++c) {
    std::int64_t f = beta;
    if (it != hist.entries().end() && it->count == c) {
      f += it->frequency;
      ++it;
    }
    out.push_back({c, f});
  }
  return CountHistogram(std::move(out));
}

double bin_log_likelihood(std::span<const std::int64_t> freqs,
                          LikelihoodModel model) {
  if (freqs.empty()) throw Error("bin has no counts");
  double total = 0.0;
  double log_fact = 0.0;
  for (auto f : freqs) {
    if (f < 1) throw Error("bin frequencies must be >= 1");
    total += static_cast<double>(f);
    log_fact += std::lgamma(static_cast<double>(f) + 1.0);
  }
  if (model == LikelihoodModel::multinomial) {
    double ll = std::lgamma(total + 1.0) - log_fact;
    for (auto f : freqs) {
      const double x = static_cast<double>(f);
      ll += x * std::log(x / total);
    }
    return ll;
  }
  const double rate = total / static_cast<double>(freqs.size());
  const double log_rate = std::log(rate);
  double ll = 0.0;
  for (auto f : freqs) {
    const double x = static_cast<double>(f);
    ll += x * log_rate - rate - std::lgamma(x + 1.0);
  }
  return ll;
}

double log_prior(std::int64_t num_bins, const PriorConfig& prior) {
  prior.validate();
  if (num_bins < 1 || num_bins > prior.alpha) return kNegInf;
  return prior.log_normalizer() +
         static_cast<double>(num_bins) * std::log(prior.gamma);
}

std::vector<Bin> edges_from_starts(const CountHistogram& hist,
                                   std::span<const std::size_t> starts) {
  const auto& e = hist.entries();
  if (starts.empty() || starts.front() != 0) {
    throw Error("partition must start at the first distinct count");
  }
  std::vector<Bin> edges;
  edges.reserve(starts.size());
  Count lo = 0;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const Count hi = k + 1 < starts.size() ? e.at(starts[k + 1]).count - 1
                                           : hist.max_count();
    edges.push_back({lo, hi});
    lo = hi + 1;
  }
  return edges;
}

std::vector<std::size_t> DpTable::backtrack() const {
  std::vector<std::size_t> starts;
  if (best.empty()) return starts;
  const bool bounded = best.size() > 1;
  std::size_t layer = best.size() - 1;
  std::size_t r = best[layer].size() - 1;
  while (r > 0) {
    const std::size_t j = last_change[layer][r];
    starts.push_back(j);
    r = j;
    if (bounded) --layer;
  }
  std::reverse(starts.begin(), starts.end());
  return starts;
}

DpTable solve_partition_dp(const CountHistogram& hist, const PriorConfig& prior,
                           LikelihoodModel model) {
  prior.validate();
  if (hist.empty()) throw Error("cannot bin an empty histogram");

  const BinScorer score(hist, model);
  const std::size_t m = hist.distinct();
  const double log_gamma = std::log(prior.gamma);
  const bool bounded = static_cast<std::size_t>(prior.alpha) < m;
  // Layer k holds partitions with at most k bins; layer 0 is the empty
  // partition. An unbounded search needs a single self-referencing layer.
  const std::size_t layers = bounded ? static_cast<std::size_t>(prior.alpha) : 1;

  DpTable table;
  table.best.assign(layers + (bounded ? 1 : 0),
                    std::vector<double>(m + 1, kNegInf));
  table.last_change.assign(table.best.size(),
                           std::vector<std::size_t>(m + 1, 0));
  for (auto& layer : table.best) layer[0] = 0.0;

  std::vector<double> candidates(m);
  const std::size_t first_layer = bounded ? 1 : 0;
  for (std::size_t k = first_layer; k < table.best.size(); ++k) {
    const auto& prev = bounded ? table.best[k - 1] : table.best[k];
    auto& cur = table.best[k];
    for (std::size_t r = 1; r <= m; ++r) {
      // Last bin covers distinct counts j..r-1 (0-based).
      double max_cand = kNegInf;
      for (std::size_t j = 0; j < r; ++j) {
        if (prev[j] == kNegInf) {
          candidates[j] = kNegInf;
          continue;
        }
        const double lik = score(j, r - 1);
        assert(std::isfinite(lik));
        candidates[j] = prev[j] + (lik + log_gamma);
        max_cand = std::max(max_cand, candidates[j]);
      }
      if (max_cand == kNegInf) continue;
      const double floor = max_cand - tie_tolerance(max_cand);
      for (std::size_t j = 0; j < r; ++j) {
        if (candidates[j] >= floor) {
          cur[r] = candidates[j];
          table.last_change[k][r] = j;
          break;
        }
      }
    }
  }

  table.freq_prefix = score.freq_prefix();
  table.log_factorial_prefix = score.log_fact_prefix();
  table.f_log_f_prefix = score.f_log_f_prefix();
  return table;
}

BinningResult optimal_bins(const CountHistogram& hist, const PriorConfig& prior,
                           LikelihoodModel model) {
  const DpTable table = solve_partition_dp(hist, prior, model);
  const auto starts = table.backtrack();
  BinningResult result;
  result.edges = edges_from_starts(hist, starts);
  result.log_posterior = table.best.back().back() + prior.log_normalizer();
  return result;
}

BinningResult brute_force_bins(const CountHistogram& hist,
                               const PriorConfig& prior,
                               LikelihoodModel model) {
  prior.validate();
  if (hist.empty()) throw Error("cannot bin an empty histogram");
  const std::size_t m = hist.distinct();
  if (m > 20) throw Error("brute-force binning supports at most 20 counts");

  const auto& e = hist.entries();
  const double log_gamma = std::log(prior.gamma);

  struct Candidate {
    std::vector<std::size_t> starts;
    double score;
  };
  std::vector<Candidate> all;
  all.reserve(std::size_t{1} << (m - 1));

  // Bit i of the mask set means a new bin starts at distinct count i + 1.
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << (m - 1)); ++mask) {
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i + 1 < m; ++i) {
      if (mask & (std::uint32_t{1} << i)) starts.push_back(i + 1);
    }
    if (static_cast<std::int64_t>(starts.size()) > prior.alpha) continue;
    double total = 0.0;
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : m;
      std::vector<std::int64_t> freqs;
      for (std::size_t i = starts[k]; i < end; ++i) {
        freqs.push_back(e[i].frequency);
      }
      total = total + (bin_log_likelihood(freqs, model) + log_gamma);
    }
    all.push_back({std::move(starts), total});
  }

  double best = kNegInf;
  for (const auto& c : all) best = std::max(best, c.score);
  const double floor = best - tie_tolerance(best);

  // Among near-ties prefer the earliest last split, then the earliest
  // split before it, and so on.
  const auto later_splits_first = [](const std::vector<std::size_t>& a,
                                     const std::vector<std::size_t>& b) {
    return std::lexicographical_compare(a.rbegin(), a.rend(), b.rbegin(),
                                        b.rend());
  };
  const Candidate* chosen = nullptr;
  for (const auto& c : all) {
    if (c.score < floor) continue;
    if (!chosen || later_splits_first(c.starts, chosen->starts)) chosen = &c;
  }

  BinningResult result;
  result.edges = edges_from_starts(hist, chosen->starts);
  result.log_posterior = chosen->score + prior.log_normalizer();
  return result;
}

double partition_log_likelihood(const CountHistogram& hist,
                                std::span<const Bin> edges,
                                LikelihoodModel model) {
  validate_edges(edges);
  std::vector<std::vector<std::int64_t>> grouped(edges.size());
  BinSpec spec;
  spec.edges.assign(edges.begin(), edges.end());
  for (const auto& entry : hist.entries()) {
    grouped[assign_bin(entry.count, spec)].push_back(entry.frequency);
  }
  double total = 0.0;
  for (const auto& freqs : grouped) {
    if (!freqs.empty()) total += bin_log_likelihood(freqs, model);
  }
  return total;
}

CountSplit split_counts(const CountHistogram& data, double ratio,
                        std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("ratio must lie in (0, 1)");
  auto samples = data.expand();
  const auto n = static_cast<double>(samples.size());
  const auto n_test = static_cast<std::size_t>(std::llround(ratio * n));
  if (n_test == 0 || n_test >= samples.size()) {
    throw Error("degenerate train/test split: one side is empty");
  }
  Rng rng(seed);
  rng.shuffle(std::span<Count>(samples));
  const std::span<const Count> all(samples);
  return {build_histogram(all.subspan(n_test)),
          build_histogram(all.first(n_test))};
}

double held_out_likelihood(const CountHistogram& data, double ratio,
                           double gamma, std::uint64_t seed,
                           const HeldOutConfig& cfg) {
  const auto split = split_counts(data, ratio, seed);
  const auto train = smooth(split.train, cfg.beta);
  PriorConfig prior{gamma, cfg.alpha.value_or(
                               static_cast<std::int64_t>(train.distinct()))};
  const auto fitted = optimal_bins(train, prior, cfg.model);
  return held_out_likelihood(train, split.test, fitted.edges, cfg);
}

double held_out_likelihood(const CountHistogram& train,
                           const CountHistogram& test,
                           std::span<const Bin> edges,
                           const HeldOutConfig& cfg) {
  const auto test_smoothed = smooth(test, cfg.beta);
  if (cfg.probabilities == HeldOutProbabilities::test) {
    return partition_log_likelihood(test_smoothed, edges, cfg.model);
  }

  // Train-side probabilities: test counts beyond the fitted range are
  // treated as the range maximum.
  validate_edges(edges);
  BinSpec spec;
  spec.edges.assign(edges.begin(), edges.end());
  const Count top = spec.max_count();

  std::map<Count, std::int64_t> train_freq;
  for (const auto& e : train.entries()) train_freq[e.count] = e.frequency;
  std::vector<double> train_bin_total(edges.size(), 0.0);
  for (const auto& e : train.entries()) {
    train_bin_total[assign_bin(e.count, spec)] +=
        static_cast<double>(e.frequency);
  }

  std::map<Count, std::int64_t> test_freq;
  for (const auto& e : test_smoothed.entries()) {
    test_freq[std::min(e.count, top)] += e.frequency;
  }
  std::vector<std::vector<std::pair<Count, std::int64_t>>> grouped(edges.size());
  for (const auto& [c, f] : test_freq) {
    grouped[assign_bin(c, spec)].emplace_back(c, f);
  }

  const double size_ratio = static_cast<double>(test_smoothed.total()) /
                            static_cast<double>(train.total());
  double total = 0.0;
  for (std::size_t k = 0; k < grouped.size(); ++k) {
    const auto& bin = grouped[k];
    if (bin.empty()) continue;
    if (cfg.model == LikelihoodModel::multinomial) {
      double x_total = 0.0;
      double ll = 0.0;
      for (const auto& [c, f] : bin) {
        const double x = static_cast<double>(f);
        x_total += x;
        ll -= std::lgamma(x + 1.0);
        const auto it = train_freq.find(c);
        const double p = it == train_freq.end()
                             ? 0.0
                             : static_cast<double>(it->second) /
                                   train_bin_total[k];
        ll += x * std::log(p);
      }
      total += ll + std::lgamma(x_total + 1.0);
    } else {
      const double rate = train_bin_total[k] /
                          static_cast<double>(edges[k].width()) * size_ratio;
      for (const auto& [c, f] : bin) {
        const double x = static_cast<double>(f);
        total += x * std::log(rate) - rate - std::lgamma(x + 1.0);
      }
    }
  }
  return total;
}

BinSpec fit_bins(const CountHistogram& hist, double gamma,
                 std::optional<std::int64_t> alpha, std::int64_t beta,
                 LikelihoodModel model, double* log_posterior) {
  const auto smoothed = smooth(hist, beta);
  const PriorConfig prior{
      gamma, alpha.value_or(static_cast<std::int64_t>(smoothed.distinct()))};
  auto result = optimal_bins(smoothed, prior, model);
  if (log_posterior) *log_posterior = result.log_posterior;
  BinSpec spec;
  spec.edges = std::move(result.edges);
  spec.gamma = gamma;
  spec.alpha = prior.alpha;
  spec.beta = beta;
  spec.meta.extra["model"] = to_string(model);
  spec.meta.extra["log_posterior"] = result.log_posterior;
  return spec;
}

}  // namespace crowdbin

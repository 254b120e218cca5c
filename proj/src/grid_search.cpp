#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "crowdbin/binning.hpp"

namespace crowdbin {

namespace {

// Runs body(i) for i in [0, n) on `threads` workers. Each call writes only
// its own output slot, so results do not depend on scheduling. The first
// failing index (lowest i) is rethrown.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<std::int64_t> rank_index_sums(
    const std::vector<std::vector<double>>& mean_likelihood) {
  const std::size_t n_gamma = mean_likelihood.size();
  std::vector<std::int64_t> sums(n_gamma, 0);
  if (n_gamma == 0) return sums;
  const std::size_t n_ratio = mean_likelihood.front().size();
  for (const auto& row : mean_likelihood) {
    if (row.size() != n_ratio) throw Error("ragged likelihood table");
  }

  std::vector<std::size_t> order(n_gamma);
  for (std::size_t r = 0; r < n_ratio; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      const double la = mean_likelihood[a][r];
      const double lb = mean_likelihood[b][r];
      // NaN sorts last.
      if (std::isnan(la)) return false;
      if (std::isnan(lb)) return true;
      return la > lb;
    });
    for (std::size_t pos = 0; pos < n_gamma; ++pos) {
      sums[order[pos]] += static_cast<std::int64_t>(pos);
    }
  }
  return sums;
}

std::size_t select_best_gamma(std::span<const std::int64_t> index_sums) {
  if (index_sums.empty()) throw Error("no gamma candidates");
  return static_cast<std::size_t>(
      std::min_element(index_sums.begin(), index_sums.end()) -
      index_sums.begin());
}

GridSearchResult grid_search_gamma(std::span<const CountRecord> records,
                                   const GridSearchConfig& cfg) {
  if (records.size() < 10) {
    throw Error("grid search needs at least 10 records, got " +
                std::to_string(records.size()));
  }
  return grid_search_gamma(build_histogram(records), cfg);
}

GridSearchResult grid_search_gamma(const CountHistogram& data,
                                   const GridSearchConfig& config) {
  // Ranking ties resolve towards the smaller gamma, which relies on order.
  GridSearchConfig cfg = config;
  std::sort(cfg.gammas.begin(), cfg.gammas.end());
  cfg.gammas.erase(std::unique(cfg.gammas.begin(), cfg.gammas.end()),
                   cfg.gammas.end());

  if (data.total() < 10) {
    throw Error("grid search needs at least 10 records, got " +
                std::to_string(data.total()));
  }
  if (cfg.gammas.empty()) throw Error("gamma grid is empty");
  if (cfg.ratios.empty()) throw Error("ratio grid is empty");
  if (cfg.seeds < 1) throw Error("seed count must be >= 1");
  for (double g : cfg.gammas) PriorConfig{g, 1}.validate();

  const std::size_t n_gamma = cfg.gammas.size();
  const std::size_t n_ratio = cfg.ratios.size();
  const auto n_seed = static_cast<std::size_t>(cfg.seeds);

  HeldOutConfig held_out;
  held_out.model = cfg.model;
  held_out.beta = cfg.beta;
  held_out.alpha = cfg.alpha;
  held_out.probabilities = cfg.probabilities;

  std::vector<double> cells(n_gamma * n_ratio * n_seed);
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const std::size_t s = i % n_seed;
    const std::size_t r = (i / n_seed) % n_ratio;
    const std::size_t g = i / (n_seed * n_ratio);
    cells[i] = held_out_likelihood(data, cfg.ratios[r], cfg.gammas[g],
                                   cfg.first_seed + s, held_out);
  });

  GridSearchResult result;
  result.gammas = cfg.gammas;
  result.ratios = cfg.ratios;
  result.mean_likelihood.assign(n_gamma, std::vector<double>(n_ratio, 0.0));
  for (std::size_t g = 0; g < n_gamma; ++g) {
    for (std::size_t r = 0; r < n_ratio; ++r) {
      double sum = 0.0;
      for (std::size_t s = 0; s < n_seed; ++s) {
        sum += cells[(g * n_ratio + r) * n_seed + s];
      }
      result.mean_likelihood[g][r] = sum / static_cast<double>(n_seed);
    }
  }
  result.index_sums = rank_index_sums(result.mean_likelihood);
  result.best_index = select_best_gamma(result.index_sums);
  result.best_gamma = cfg.gammas[result.best_index];
  result.bins = fit_bins(data, result.best_gamma, cfg.alpha, cfg.beta,
                         cfg.model, &result.log_posterior);
  return result;
}

}  // namespace crowdbin

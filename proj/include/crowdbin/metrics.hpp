#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "crowdbin/data_model.hpp"

namespace crowdbin {

/// Divisor used for standard deviations.
enum class StdConvention {
  /// Divide by n. Consistent with pooling bin variances weighted by n.
  population,
  /// Divide by n - 1; a single sample then has zero spread.
  sample,
};

/// Neumaier-compensated running sum. Order changes move the result by at
/// most a few ulps of the total.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

struct BinStats {
  std::size_t bin_index = 0;
  std::size_t n = 0;
  /// Sum of absolute errors, n * mu.
  double abs_error_sum = 0.0;
  /// Mean and std of |y - y_hat|; empty for bins without samples.
  std::optional<double> mu;
  std::optional<double> sigma;

  bool empty() const { return n == 0; }
};

struct PooledStats {
  double mu_pool = 0.0;
  double sigma_pool = 0.0;
  std::size_t total_n = 0;
};

struct GlobalStats {
  double mae = 0.0;
  double mse = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct TperOptions {
  /// Leave images with zero error out of the numerator. By default they
  /// count whenever 0 >= theta * y, which includes every y = 0 image.
  bool skip_exact = false;
};

/// Thresholded percentage error ratio: the fraction of images with
/// |y - y_hat| >= theta * y, per theta. Theta is a multiplier of the
/// ground truth, so theta = 1 means an error at least as large as y.
struct TperCurve {
  std::vector<double> thetas;
  std::vector<double> values;
  /// Trapezoidal area divided by the theta span; lies in [0, 1].
  double auc_normalized = 0.0;
  double auc_raw = 0.0;
  std::size_t T = 0;
};

struct GameResult {
  unsigned level = 0;
  double value = 0.0;
  /// Sum over the 4^L cells of |gt - pred| for each image, in input order.
  std::vector<double> per_image;
};

/// Absolute errors grouped by the ground truth's bin. Every bin of `bins`
/// is reported, including empty ones.
std::vector<BinStats> per_bin_stats(
    std::span<const PredictionRecord> preds, const BinSpec& bins,
    StdConvention convention = StdConvention::population);

/// n-weighted mean of bin means and of bin variances over non-empty bins.
PooledStats pooled_stats(std::span<const BinStats> bin_stats);

GlobalStats global_stats(std::span<const PredictionRecord> preds,
                         StdConvention convention = StdConvention::population);

/// 0, 5, ..., 100.
std::vector<double> default_thetas();

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
std::vector<double> theta_grid(double lo, double hi, double step);

TperCurve tper_curve(std::span<const PredictionRecord> preds,
                     std::span<const double> thetas,
                     const TperOptions& options = {});

/// Grid average mean absolute error. Each image is cut into a 2^L x 2^L
/// grid of half-open cells (each axis split evenly); cell errors are summed
/// per image and averaged over images.
GameResult game(std::span<const PointAnnotatedRecord> records, unsigned level);

inline constexpr unsigned kMaxGameLevel = 6;

}  // namespace crowdbin

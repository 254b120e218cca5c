#include "crowdbin/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace crowdbin {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

namespace {

struct ErrorMoments {
  std::size_t n = 0;
  CompensatedSum abs_sum;
  CompensatedSum sq_sum;
  std::vector<double> errors;

  void add(double abs_err) {
    ++n;
    abs_sum.add(abs_err);
    sq_sum.add(abs_err * abs_err);
    errors.push_back(abs_err);
  }

  double mean() const { return abs_sum.value() / static_cast<double>(n); }

  // Second pass around the mean.
  double stddev(StdConvention convention) const {
    const double mu = mean();
    CompensatedSum ss;
    for (double e : errors) ss.add((e - mu) * (e - mu));
    const double dn = static_cast<double>(n);
    if (convention == StdConvention::sample) {
      return n > 1 ? std::sqrt(ss.value() / (dn - 1.0)) : 0.0;
    }
    return std::sqrt(ss.value() / dn);
  }
};

}  // namespace

std::vector<BinStats> per_bin_stats(std::span<const PredictionRecord> preds,
                                    const BinSpec& bins,
                                    StdConvention convention) {
  if (preds.empty()) throw Error("no predictions to evaluate");
  std::vector<ErrorMoments> moments(bins.size());
  for (const auto& p : preds) {
    moments[assign_bin(p.gt_count, bins)].add(p.abs_error());
  }
  std::vector<BinStats> out(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    out[k].bin_index = k;
    out[k].n = moments[k].n;
    out[k].abs_error_sum = moments[k].abs_sum.value();
    if (moments[k].n > 0) {
      out[k].mu = moments[k].mean();
      out[k].sigma = moments[k].stddev(convention);
    }
  }
  return out;
}

PooledStats pooled_stats(std::span<const BinStats> bin_stats) {
  CompensatedSum weighted_mean;
  CompensatedSum weighted_var;
  std::size_t total = 0;
  for (const auto& b : bin_stats) {
    if (b.empty()) continue;
    const double n = static_cast<double>(b.n);
    weighted_mean.add(n * *b.mu);
    weighted_var.add(n * *b.sigma * *b.sigma);
    total += b.n;
  }
  if (total == 0) throw Error("all bins are empty");
  const double dn = static_cast<double>(total);
  return {weighted_mean.value() / dn, std::sqrt(weighted_var.value() / dn),
          total};
}

GlobalStats global_stats(std::span<const PredictionRecord> preds,
                         StdConvention convention) {
  if (preds.empty()) throw Error("no predictions to evaluate");
  ErrorMoments m;
  for (const auto& p : preds) m.add(p.abs_error());
  GlobalStats g;
  g.n = m.n;
  g.mae = m.mean();
  // (y - y_hat)^2 equals |y - y_hat|^2.
  g.mse = m.sq_sum.value() / static_cast<double>(m.n);
  g.std = m.stddev(convention);
  return g;
}

std::vector<double> default_thetas() { return theta_grid(0.0, 100.0, 5.0); }

std::vector<double> theta_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw Error("invalid theta grid");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    out.push_back(lo + static_cast<double>(i) * step);
  }
  return out;
}

TperCurve tper_curve(std::span<const PredictionRecord> preds,
                     std::span<const double> thetas,
                     const TperOptions& options) {
  if (thetas.empty()) throw Error("theta grid is empty");
  if (preds.empty()) throw Error("no predictions to evaluate");
  if (!std::is_sorted(thetas.begin(), thetas.end())) {
    throw Error("thetas must be sorted ascending");
  }
  TperCurve curve;
  curve.thetas.assign(thetas.begin(), thetas.end());
  curve.T = preds.size();
  for (double theta : thetas) {
    std::size_t hits = 0;
    for (const auto& p : preds) {
      const double err = p.abs_error();
      if (options.skip_exact && err == 0.0) continue;
      if (err >= theta * static_cast<double>(p.gt_count)) ++hits;
    }
    curve.values.push_back(static_cast<double>(hits) /
                           static_cast<double>(curve.T));
  }
  for (std::size_t i = 1; i < thetas.size(); ++i) {
    curve.auc_raw += (thetas[i] - thetas[i - 1]) *
                     (curve.values[i] + curve.values[i - 1]) / 2.0;
  }
  const double span = thetas.back() - thetas.front();
  curve.auc_normalized = span > 0.0 ? curve.auc_raw / span : curve.values[0];
  return curve;
}

GameResult game(std::span<const PointAnnotatedRecord> records,
                unsigned level) {
  if (level > kMaxGameLevel) {
    throw Error("GAME level must be <= " + std::to_string(kMaxGameLevel));
  }
  if (records.empty()) throw Error("no point annotations to evaluate");
  const std::size_t side = std::size_t{1} << level;

  GameResult result;
  result.level = level;
  result.per_image.reserve(records.size());
  std::vector<long> cells(side * side);
  CompensatedSum total;
  for (const auto& rec : records) {
    std::fill(cells.begin(), cells.end(), 0);
    // Scaling by the power-of-two side before dividing keeps level L+1
    // cells nested inside level L cells in floating point.
    const auto cell_of = [&](const Point& p) {
      if (!(p.x >= 0.0 && p.x < rec.width && p.y >= 0.0 && p.y < rec.height)) {
        throw Error("point outside image bounds in '" + rec.image_id + "'");
      }
      const double ds = static_cast<double>(side);
      const auto col = std::min(
          side - 1, static_cast<std::size_t>(std::floor(p.x * ds / rec.width)));
      const auto row = std::min(
          side - 1, static_cast<std::size_t>(std::floor(p.y * ds / rec.height)));
      return row * side + col;
    };
    for (const auto& p : rec.gt_points) ++cells[cell_of(p)];
    for (const auto& p : rec.pred_points) --cells[cell_of(p)];
    double err = 0.0;
    for (long c : cells) err += static_cast<double>(std::labs(c));
    result.per_image.push_back(err);
    total.add(err);
  }
  result.value = total.value() / static_cast<double>(records.size());
  return result;
}

}  // namespace crowdbin

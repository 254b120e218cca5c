#include "crowdbin/bin_loss.hpp"

#include <cmath>

namespace crowdbin {

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) {
    throw Error("lambda1 must be a non-negative number");
  }
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) {
    throw Error("lambda2 must be a non-negative number");
  }
}

Reduction parse_reduction(const std::string& name) {
  if (name == "mean") return Reduction::mean;
  if (name == "sum") return Reduction::sum;
  throw Error("unknown reduction '" + name + "' (expected mean or sum)");
}

double bin_loss(Count y, double y_hat, const Bin& bin, const LossConfig& cfg) {
  const double err = std::fabs(static_cast<double>(y) - y_hat);
  if (bin.contains(y_hat)) return cfg.lambda1 * std::log1p(err);
  return err;
}

double bin_loss(Count y, double y_hat, const BinSpec& bins,
                const LossConfig& cfg) {
  return bin_loss(y, y_hat, bins.edges[assign_bin(y, bins)], cfg);
}

double combined_loss(double model_loss, Count y, double y_hat,
                     const BinSpec& bins, const LossConfig& cfg) {
  return model_loss + cfg.lambda2 * bin_loss(y, y_hat, bins, cfg);
}

double batch_bin_loss(std::span<const PredictionRecord> batch,
                      const BinSpec& bins, const LossConfig& cfg,
                      Reduction reduction) {
  if (batch.empty()) throw Error("empty minibatch");
  double total = 0.0;
  for (const auto& p : batch) total += bin_loss(p.gt_count, p.pred_count, bins, cfg);
  return reduction == Reduction::mean
             ? total / static_cast<double>(batch.size())
             : total;
}

}  // namespace crowdbin

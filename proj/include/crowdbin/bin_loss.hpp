#pragma once

#include <span>
#include <string>

#include "crowdbin/data_model.hpp"

namespace crowdbin {

struct LossConfig {
  /// Weight of the logarithmic (in-bin) branch.
  double lambda1 = 1.0;
  /// Weight of the bin loss when added to a model loss.
  double lambda2 = 1.0;

  void validate() const;
};

enum class Reduction { mean, sum };

Reduction parse_reduction(const std::string& name);

/// Strata-aware loss for one sample.
///
/// Let [lo, hi] be the bin holding the ground truth y. Then
///   lambda1 * ln(1 + |y - y_hat|)   if lo <= y_hat <= hi,
///   |y - y_hat|                      otherwise.
/// The natural log is used; a different base only rescales lambda1.
///
/// For trainers that need gradients: d/dy_hat is
/// -lambda1 * sign(y - y_hat) / (1 + |y - y_hat|) inside the bin and
/// -sign(y - y_hat) outside; the loss jumps at the bin edges.
double bin_loss(Count y, double y_hat, const BinSpec& bins,
                const LossConfig& cfg = {});
double bin_loss(Count y, double y_hat, const Bin& bin,
                const LossConfig& cfg = {});

/// model_loss + lambda2 * bin_loss(y, y_hat).
double combined_loss(double model_loss, Count y, double y_hat,
                     const BinSpec& bins, const LossConfig& cfg = {});

/// Mean (or sum) of bin_loss over a minibatch.
double batch_bin_loss(std::span<const PredictionRecord> batch,
                      const BinSpec& bins, const LossConfig& cfg = {},
                      Reduction reduction = Reduction::mean);

}  // namespace crowdbin

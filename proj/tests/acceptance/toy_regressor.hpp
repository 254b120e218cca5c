#pragma once

#include <cstdint>
#include <vector>

#include "crowdbin/bin_loss.hpp"
#include "crowdbin/data_model.hpp"

namespace crowdbin::acceptance {

// One image of the toy fixture: a noisy scalar feature and its count.
struct ToySample {
  CountRecord record;
  double feature = 0.0;
};

std::vector<ToySample> make_toy_dataset(int n, std::uint64_t seed);

// y_hat = w * feature + b, trained by minibatch subgradient descent on
// |y - y_hat| + lambda2 * bin_loss with round-robin batches.
class ToyRegressor {
 public:
  double predict(double feature) const { return w_ * feature + b_; }

  void train(const std::vector<ToySample>& data, const BinSpec& bins,
             const LossConfig& cfg, int epochs, std::size_t batch_size,
             std::uint64_t seed);

 private:
  double w_ = 0.0;
  double b_ = 0.0;
};

std::vector<PredictionRecord> predict_all(const ToyRegressor& model,
                                          const std::vector<ToySample>& data);

}  // namespace crowdbin::acceptance

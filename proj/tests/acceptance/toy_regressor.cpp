#include "acceptance/toy_regressor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "crowdbin/sampling.hpp"

namespace crowdbin::acceptance {

std::vector<ToySample> make_toy_dataset(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::lognormal_distribution<double> count(3.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.15);
  std::vector<ToySample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto y = static_cast<Count>(std::floor(count(gen)));
    const double x = std::max(0.0, static_cast<double>(y) * (1.0 + noise(gen)) + 2.0 * noise(gen));
    out.push_back({{"toy" + std::to_string(i), y}, x / 100.0});
  }
  return out;
}

void ToyRegressor::train(const std::vector<ToySample>& data, const BinSpec& bins,
                         const LossConfig& cfg, int epochs,
                         std::size_t batch_size, std::uint64_t seed) {
  std::vector<CountRecord> records;
  std::map<std::string, const ToySample*> by_id;
  for (const auto& s : data) {
    records.push_back(s.record);
    by_id[s.record.image_id] = &s;
  }
  constexpr double kClip = 10.0;
  long step = 0;
  for (int e = 1; e <= epochs; ++e) {
    const auto sched = schedule_rr(records, bins, batch_size, e, seed);
    for (std::size_t start = 0; start < sched.steps.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, sched.steps.size());
      double gw = 0.0, gb = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = *by_id.at(sched.steps[i].image_id);
        const double y = static_cast<double>(s.record.count);
        const double yh = predict(s.feature);
        const double sign = yh > y ? 1.0 : (yh < y ? -1.0 : 0.0);
        const Bin& bin = bins.edges[sched.steps[i].bin_index];
        const double dbin = bin.contains(yh)
                                ? cfg.lambda1 * sign / (1.0 + std::fabs(y - yh))
                                : sign;
        const double g = std::clamp(sign + cfg.lambda2 * dbin, -kClip, kClip);
        gw += g * s.feature;
        gb += g;
      }
      const double n = static_cast<double>(end - start);
      const double lr = 20.0 / (1.0 + static_cast<double>(step++) / 200.0);
      w_ -= lr * gw / n;
      b_ -= 0.05 * lr * gb / n;
    }
  }
}

std::vector<PredictionRecord> predict_all(const ToyRegressor& model,
                                          const std::vector<ToySample>& data) {
  std::vector<PredictionRecord> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    out.push_back({s.record.image_id, s.record.count,
                   std::max(0.0, model.predict(s.feature))});
  }
  return out;
}

}  // namespace crowdbin::acceptance

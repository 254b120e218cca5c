#include "crowdbin/report.hpp"

#include <charconv>
#include <ostream>

#include "csv.hpp"

namespace crowdbin {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("failed to format number");
  return std::string(buf, ptr);
}

json to_json(const BinStats& stats, const Bin& bin) {
  return {{"bin", stats.bin_index},
          {"lo", bin.lo},
          {"hi", bin.hi},
          {"n", stats.n},
          {"mae", stats.mu ? json(*stats.mu) : json(nullptr)},
          {"std", stats.sigma ? json(*stats.sigma) : json(nullptr)}};
}

json to_json(const PooledStats& stats) {
  return {{"mae", stats.mu_pool}, {"std", stats.sigma_pool},
          {"n", stats.total_n}};
}

json to_json(const GlobalStats& stats) {
  return {{"mae", stats.mae}, {"mse", stats.mse}, {"std", stats.std},
          {"n", stats.n}};
}

json to_json(const TperCurve& curve) {
  return {{"thetas", curve.thetas},
          {"values", curve.values},
          {"auc_normalized", curve.auc_normalized},
          {"auc_raw", curve.auc_raw},
          {"T", curve.T}};
}

json to_json(std::span<const GameResult> results) {
  json out = json::array();
  for (const auto& r : results) out.push_back({{"L", r.level}, {"value", r.value}});
  return out;
}

json to_json(const EvalReport& report) {
  json bins = json::array();
  for (const auto& b : report.bins) bins.push_back({b.lo, b.hi});
  json per_bin = json::array();
  for (std::size_t k = 0; k < report.per_bin.size(); ++k) {
    per_bin.push_back(to_json(report.per_bin[k], report.bins.at(k)));
  }
  return {{"bins", std::move(bins)},
          {"per_bin", std::move(per_bin)},
          {"pooled", to_json(report.pooled)},
          {"global", to_json(report.global)},
          {"tper", report.tper ? to_json(*report.tper) : json(nullptr)},
          {"game", to_json(report.game)}};
}

void write_tper_csv(std::ostream& out, const TperCurve& curve) {
  out << "theta,tper\n";
  for (std::size_t i = 0; i < curve.thetas.size(); ++i) {
    out << format_double(curve.thetas[i]) << ','
        << format_double(curve.values[i]) << '\n';
  }
}

void write_schedule_csv_header(std::ostream& out) {
  out << "epoch,step,batch,image_id,bin_index\n";
}

void write_schedule_csv_rows(std::ostream& out, const Schedule& schedule) {
  for (std::size_t i = 0; i < schedule.steps.size(); ++i) {
    const auto& s = schedule.steps[i];
    out << schedule.epoch << ',' << i << ',' << schedule.batch_of(i) << ','
        << detail::csv_escape(s.image_id) << ',' << s.bin_index << '\n';
  }
}

}  // namespace crowdbin

#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "crowdbin/metrics.hpp"
#include "crowdbin/sampling.hpp"

namespace crowdbin {

/// Everything the evaluation stage reports for one prediction set.
struct EvalReport {
  std::vector<Bin> bins;
  std::vector<BinStats> per_bin;
  PooledStats pooled;
  GlobalStats global;
  std::optional<TperCurve> tper;
  std::vector<GameResult> game;
};

nlohmann::json to_json(const BinStats& stats, const Bin& bin);
nlohmann::json to_json(const PooledStats& stats);
nlohmann::json to_json(const GlobalStats& stats);
nlohmann::json to_json(const TperCurve& curve);
nlohmann::json to_json(std::span<const GameResult> results);

/// Layout: {bins, per_bin, pooled, global, tper, game}. Empty bins carry
/// null statistics; a missing TPER curve is null.
nlohmann::json to_json(const EvalReport& report);

/// Header `theta,tper`.
void write_tper_csv(std::ostream& out, const TperCurve& curve);

/// Header `epoch,step,batch,image_id,bin_index`; steps and batches are
/// 0-based within the epoch.
void write_schedule_csv_header(std::ostream& out);
void write_schedule_csv_rows(std::ostream& out, const Schedule& schedule);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace crowdbin

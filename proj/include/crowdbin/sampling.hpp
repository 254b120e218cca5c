#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crowdbin/data_model.hpp"

namespace crowdbin {

/// Bin-selection rule for balanced minibatches.
enum class SamplingScheme {
  /// Visit bins cyclically starting at bin 0, drawing one sample per visit.
  round_robin,
  /// Pick a non-exhausted bin uniformly at random, then a sample from it.
  random_bin,
};

SamplingScheme parse_sampling_scheme(const std::string& name);
const char* to_string(SamplingScheme scheme);

struct ScheduleStep {
  std::string image_id;
  std::size_t bin_index = 0;

  friend bool operator==(const ScheduleStep&, const ScheduleStep&) = default;
};

/// One epoch's ordering of the training set. Every record appears exactly
/// once; samples are drawn without replacement.
struct Schedule {
  std::int64_t epoch = 0;
  std::vector<ScheduleStep> steps;
  std::size_t batch_size = 1;
  SamplingScheme scheme = SamplingScheme::round_robin;
  std::uint64_t seed = 0;

  std::size_t batch_of(std::size_t step) const { return step / batch_size; }
  std::size_t num_batches() const {
    return (steps.size() + batch_size - 1) / batch_size;
  }
};

// The draw order depends on (records order, bins, seed, epoch) only;
// batch_size segments the stream without changing it. Counts above the
// fitted range follow `overflow`.
Schedule schedule_rr(std::span<const CountRecord> records, const BinSpec& bins,
                     std::size_t batch_size, std::int64_t epoch,
                     std::uint64_t seed,
                     OverflowPolicy overflow = OverflowPolicy::clamp);
Schedule schedule_rs(std::span<const CountRecord> records, const BinSpec& bins,
                     std::size_t batch_size, std::int64_t epoch,
                     std::uint64_t seed,
                     OverflowPolicy overflow = OverflowPolicy::clamp);
Schedule make_schedule(SamplingScheme scheme,
                       std::span<const CountRecord> records,
                       const BinSpec& bins, std::size_t batch_size,
                       std::int64_t epoch, std::uint64_t seed,
                       OverflowPolicy overflow = OverflowPolicy::clamp);

}  // namespace crowdbin

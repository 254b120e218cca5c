#include "crowdbin/sampling.hpp"

#include "crowdbin/rng.hpp"

namespace crowdbin {

namespace {

// Per-bin pools of record indices in input order. Draws swap the chosen
// element with the pool's tail and pop it.
class BinPools {
 public:
  BinPools(std::span<const CountRecord> records, const BinSpec& bins,
           OverflowPolicy overflow)
      : pools_(bins.size()) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      pools_[assign_bin(records[i].count, bins, overflow)].push_back(i);
    }
  }

  std::size_t size() const { return pools_.size(); }
  bool exhausted(std::size_t bin) const { return pools_[bin].empty(); }

  std::size_t draw(std::size_t bin, Rng& rng) {
    auto& pool = pools_[bin];
    const auto pick = static_cast<std::size_t>(rng.uniform_below(pool.size()));
    const std::size_t id = pool[pick];
    pool[pick] = pool.back();
    pool.pop_back();
    return id;
  }

 private:
  std::vector<std::vector<std::size_t>> pools_;
};

Schedule start_schedule(std::span<const CountRecord> records,
                        const BinSpec& bins, std::size_t batch_size,
                        std::int64_t epoch, std::uint64_t seed,
                        SamplingScheme scheme) {
  if (records.empty()) throw Error("cannot schedule an empty record list");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  validate_edges(bins.edges);
  Schedule s;
  s.epoch = epoch;
  s.batch_size = batch_size;
  s.scheme = scheme;
  s.seed = seed;
  s.steps.reserve(records.size());
  return s;
}

}  // namespace

SamplingScheme parse_sampling_scheme(const std::string& name) {
  if (name == "rr") return SamplingScheme::round_robin;
  if (name == "rs") return SamplingScheme::random_bin;
  throw Error("unknown sampling scheme '" + name + "' (expected rr or rs)");
}

const char* to_string(SamplingScheme scheme) {
  return scheme == SamplingScheme::round_robin ? "rr" : "rs";
}

Schedule schedule_rr(std::span<const CountRecord> records, const BinSpec& bins,
                     std::size_t batch_size, std::int64_t epoch,
                     std::uint64_t seed, OverflowPolicy overflow) {
  auto s = start_schedule(records, bins, batch_size, epoch, seed,
                          SamplingScheme::round_robin);
  BinPools pools(records, bins, overflow);
  Rng rng(stream_seed(seed, static_cast<std::uint64_t>(epoch)));
  while (s.steps.size() < records.size()) {
    for (std::size_t b = 0; b < pools.size(); ++b) {
      if (pools.exhausted(b)) continue;
      s.steps.push_back({records[pools.draw(b, rng)].image_id, b});
    }
  }
  return s;
}

Schedule schedule_rs(std::span<const CountRecord> records, const BinSpec& bins,
                     std::size_t batch_size, std::int64_t epoch,
                     std::uint64_t seed, OverflowPolicy overflow) {
  auto s = start_schedule(records, bins, batch_size, epoch, seed,
                          SamplingScheme::random_bin);
  BinPools pools(records, bins, overflow);
  Rng rng(stream_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> live;
  for (std::size_t b = 0; b < pools.size(); ++b) {
    if (!pools.exhausted(b)) live.push_back(b);
  }
  while (!live.empty()) {
    // `live` stays in ascending bin order so draws are reproducible.
    const auto slot = static_cast<std::size_t>(rng.uniform_below(live.size()));
    const std::size_t b = live[slot];
    s.steps.push_back({records[pools.draw(b, rng)].image_id, b});
    if (pools.exhausted(b)) live.erase(live.begin() + static_cast<long>(slot));
  }
  return s;
}

Schedule make_schedule(SamplingScheme scheme,
                       std::span<const CountRecord> records,
                       const BinSpec& bins, std::size_t batch_size,
                       std::int64_t epoch, std::uint64_t seed,
                       OverflowPolicy overflow) {
  return scheme == SamplingScheme::round_robin
             ? schedule_rr(records, bins, batch_size, epoch, seed, overflow)
             : schedule_rs(records, bins, batch_size, epoch, seed, overflow);
}

}  // namespace crowdbin

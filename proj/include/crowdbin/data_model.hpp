#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace crowdbin {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input. `line()` is 1-based and counts the header line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " at line " + std::to_string(line)), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using Count = std::int64_t;

struct CountRecord {
  std::string image_id;
  Count count = 0;
};

struct PredictionRecord {
  std::string image_id;
  Count gt_count = 0;
  double pred_count = 0.0;

  double abs_error() const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct PointAnnotatedRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Point> gt_points;
  std::vector<Point> pred_points;
};

enum class InputFormat { csv, jsonl };

InputFormat parse_input_format(const std::string& name);
/// Guesses the format from a file extension; `.jsonl`/`.ndjson` map to
/// jsonl, everything else to csv.
InputFormat format_from_path(const std::string& path);

// Loaders read line by line. CSV inputs require a header row; JSON-lines
// inputs carry one object per line and skip blank lines.
std::vector<CountRecord> load_counts(std::istream& in, InputFormat format);
std::vector<PredictionRecord> load_predictions(std::istream& in,
                                               InputFormat format);
std::vector<PointAnnotatedRecord> load_points(std::istream& in);

/// Count-frequency view of a dataset: distinct counts in increasing order,
/// each with a positive frequency.
class CountHistogram {
 public:
  struct Entry {
    Count count = 0;
    std::int64_t frequency = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  CountHistogram() = default;
  /// Validates that counts are non-negative and strictly increasing and that
  /// every frequency is at least one.
  explicit CountHistogram(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  /// N, the total number of samples.
  std::int64_t total() const noexcept { return total_; }
  /// C, the largest observed count. Zero for an empty histogram.
  Count max_count() const noexcept {
    return entries_.empty() ? 0 : entries_.back().count;
  }
  /// m, the number of distinct counts.
  std::size_t distinct() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Expands back into a sorted multiset of counts.
  std::vector<Count> expand() const;

  friend bool operator==(const CountHistogram&, const CountHistogram&) =
      default;

 private:
  std::vector<Entry> entries_;
  std::int64_t total_ = 0;
};

CountHistogram build_histogram(std::span<const CountRecord> records);
CountHistogram build_histogram(std::span<const Count> counts);

/// Inclusive integer interval of counts.
struct Bin {
  Count lo = 0;
  Count hi = 0;

  bool contains(Count c) const noexcept { return lo <= c && c <= hi; }
  bool contains(double v) const noexcept {
    return static_cast<double>(lo) <= v && v <= static_cast<double>(hi);
  }
  Count width() const noexcept { return hi - lo + 1; }

  friend bool operator==(const Bin&, const Bin&) = default;
};

struct BinProvenance {
  std::string dataset;
  std::string fitted_at;
  std::optional<std::uint64_t> seed;
  /// Free-form extras, e.g. the resolved run configuration.
  nlohmann::json extra = nlohmann::json::object();
};

/// A fitted partition of [0, C] plus the prior parameters that produced it.
struct BinSpec {
  std::vector<Bin> edges;
  double gamma = 0.5;
  std::int64_t alpha = 1;
  std::int64_t beta = 1;
  BinProvenance meta;

  std::size_t size() const noexcept { return edges.size(); }
  Count max_count() const { return edges.back().hi; }

  /// Throws Error unless the edges are contiguous, start at zero, and the
  /// prior parameters are in range.
  void validate() const;
};

/// Checks edges alone: non-empty, lo_1 = 0, lo_{k+1} = hi_k + 1, lo <= hi.
void validate_edges(std::span<const Bin> edges);

/// What to do with a count above the last bin's upper edge.
enum class OverflowPolicy { clamp, reject };

/// Index of the bin holding `count`. Counts above the fitted maximum land
/// in the last bin.
std::size_t assign_bin(Count count, const BinSpec& bins);
/// Same as above, but throws Error for overflowing counts under
/// OverflowPolicy::reject.
std::size_t assign_bin(Count count, const BinSpec& bins, OverflowPolicy policy);

nlohmann::json to_json(const BinSpec& bins);
BinSpec bin_spec_from_json(const nlohmann::json& j);

}  // namespace crowdbin

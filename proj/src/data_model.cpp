#include "crowdbin/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <istream>
#include <map>
#include <unordered_set>

#include "csv.hpp"

namespace crowdbin {

using nlohmann::json;

double PredictionRecord::abs_error() const {
  return std::fabs(static_cast<double>(gt_count) - pred_count);
}

InputFormat parse_input_format(const std::string& name) {
  if (name == "csv") return InputFormat::csv;
  if (name == "jsonl") return InputFormat::jsonl;
  throw Error("unknown input format '" + name + "' (expected csv or jsonl)");
}

InputFormat format_from_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".jsonl" || ext == ".ndjson") return InputFormat::jsonl;
  return InputFormat::csv;
}

namespace {

Count parse_count(std::string_view text, std::size_t line, const char* what) {
  text = detail::trim(text);
  Count value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(std::string("invalid ") + what + " '" +
                         std::string(text) + "'",
                     line);
  }
  if (value < 0) throw ParseError(std::string("negative ") + what, line);
  return value;
}

double parse_real(std::string_view text, std::size_t line, const char* what) {
  text = detail::trim(text);
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last ||
      !std::isfinite(value)) {
    throw ParseError(std::string("invalid ") + what + " '" +
                         std::string(text) + "'",
                     line);
  }
  if (value < 0.0) throw ParseError(std::string("negative ") + what, line);
  return value;
}

// Maps required column names to their positions in the header row.
class CsvHeader {
 public:
  CsvHeader(const std::string& line, std::size_t line_no,
            std::initializer_list<const char*> required) {
    const auto fields = detail::split_csv_line(line);
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      pos.emplace(std::string(detail::trim(fields[i])), i);
    }
    for (const char* name : required) {
      auto it = pos.find(name);
      if (it == pos.end()) {
        throw ParseError(std::string("missing column '") + name + "'",
                         line_no);
      }
      columns_.push_back(it->second);
    }
    width_ = fields.size();
  }

  std::vector<std::string> row(const std::string& line,
                               std::size_t line_no) const {
    auto fields = detail::split_csv_line(line);
    if (fields.size() != width_) {
      throw ParseError("expected " + std::to_string(width_) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (auto c : columns_) out.push_back(std::move(fields[c]));
    return out;
  }

 private:
  std::vector<std::size_t> columns_;
  std::size_t width_ = 0;
};

class IdRegistry {
 public:
  void add(const std::string& id, std::size_t line) {
    if (id.empty()) throw ParseError("empty image_id", line);
    if (!seen_.insert(id).second) {
      throw ParseError("duplicate image_id '" + id + "'", line);
    }
  }

 private:
  std::unordered_set<std::string> seen_;
};

bool is_blank(const std::string& line) { return detail::trim(line).empty(); }

// Invokes `on_row(fields, line_no)` for every data row of a CSV stream.
template <typename OnRow>
void for_each_csv_row(std::istream& in,
                      std::initializer_list<const char*> columns,
                      OnRow&& on_row) {
  detail::LineReader reader(in);
  std::string line;
  bool have_header = false;
  while (reader.next(line)) {
    if (!is_blank(line)) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw ParseError("missing header", 1);
  try {
    const CsvHeader header(line, reader.line_number(), columns);
    while (reader.next(line)) {
      if (is_blank(line)) continue;
      on_row(header.row(line, reader.line_number()), reader.line_number());
    }
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), reader.line_number());
  }
}

template <typename OnObject>
void for_each_jsonl_object(std::istream& in, OnObject&& on_object) {
  detail::LineReader reader(in);
  std::string line;
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(),
                       reader.line_number());
    }
    if (!obj.is_object()) {
      throw ParseError("expected a JSON object", reader.line_number());
    }
    on_object(obj, reader.line_number());
  }
}

std::string json_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(std::string("missing string key '") + key + "'", line);
  }
  return it->get<std::string>();
}

Count json_count(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw ParseError(std::string("missing numeric key '") + key + "'", line);
  }
  if (it->is_number_float()) {
    throw ParseError(std::string("non-integer ") + key, line);
  }
  if (it->is_number_integer() && !it->is_number_unsigned() &&
      it->get<std::int64_t>() < 0) {
    throw ParseError(std::string("negative ") + key, line);
  }
  return it->get<Count>();
}

double json_real(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw ParseError(std::string("missing numeric key '") + key + "'", line);
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ParseError(std::string("invalid ") + key, line);
  return v;
}

std::vector<Point> json_points(const json& obj, const char* key,
                               std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) {
    throw ParseError(std::string("missing array key '") + key + "'", line);
  }
  std::vector<Point> points;
  points.reserve(it->size());
  for (const auto& p : *it) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() ||
        !p[1].is_number()) {
      throw ParseError(std::string("malformed point in '") + key + "'", line);
    }
    points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return points;
}

}  // namespace

std::vector<CountRecord> load_counts(std::istream& in, InputFormat format) {
  std::vector<CountRecord> records;
  IdRegistry ids;
  if (format == InputFormat::csv) {
    for_each_csv_row(in, {"image_id", "count"},
                     [&](std::vector<std::string> f, std::size_t line) {
                       std::string id(detail::trim(f[0]));
                       const Count c = parse_count(f[1], line, "count");
                       ids.add(id, line);
                       records.push_back({std::move(id), c});
                     });
  } else {
    for_each_jsonl_object(in, [&](const json& obj, std::size_t line) {
      auto id = json_string(obj, "image_id", line);
      const Count c = json_count(obj, "count", line);
      ids.add(id, line);
      records.push_back({std::move(id), c});
    });
  }
  return records;
}

std::vector<PredictionRecord> load_predictions(std::istream& in,
                                               InputFormat format) {
  std::vector<PredictionRecord> records;
  IdRegistry ids;
  if (format == InputFormat::csv) {
    for_each_csv_row(
        in, {"image_id", "gt_count", "pred_count"},
        [&](std::vector<std::string> f, std::size_t line) {
          std::string id(detail::trim(f[0]));
          const Count gt = parse_count(f[1], line, "gt_count");
          const double pred = parse_real(f[2], line, "pred_count");
          ids.add(id, line);
          records.push_back({std::move(id), gt, pred});
        });
  } else {
    for_each_jsonl_object(in, [&](const json& obj, std::size_t line) {
      auto id = json_string(obj, "image_id", line);
      const Count gt = json_count(obj, "gt_count", line);
      const double pred = json_real(obj, "pred_count", line);
      if (pred < 0.0) throw ParseError("negative pred_count", line);
      ids.add(id, line);
      records.push_back({std::move(id), gt, pred});
    });
  }
  return records;
}

std::vector<PointAnnotatedRecord> load_points(std::istream& in) {
  std::vector<PointAnnotatedRecord> records;
  IdRegistry ids;
  for_each_jsonl_object(in, [&](const json& obj, std::size_t line) {
    PointAnnotatedRecord rec;
    rec.image_id = json_string(obj, "image_id", line);
    rec.width = json_real(obj, "width", line);
    rec.height = json_real(obj, "height", line);
    if (!(rec.width > 0.0) || !(rec.height > 0.0)) {
      throw ParseError("image dimensions must be positive", line);
    }
    rec.gt_points = json_points(obj, "gt_points", line);
    rec.pred_points = json_points(obj, "pred_points", line);
    for (const auto* pts : {&rec.gt_points, &rec.pred_points}) {
      for (const auto& p : *pts) {
        if (!(p.x >= 0.0 && p.x < rec.width && p.y >= 0.0 &&
              p.y < rec.height)) {
          throw ParseError("point outside image bounds", line);
        }
      }
    }
    ids.add(rec.image_id, line);
    records.push_back(std::move(rec));
  });
  return records;
}

CountHistogram::CountHistogram(std::vector<Entry> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.count < 0) throw Error("histogram count must be non-negative");
    if (e.frequency < 1) throw Error("histogram frequency must be >= 1");
    if (i > 0 && entries_[i - 1].count >= e.count) {
      throw Error("histogram counts must be strictly increasing");
    }
    total_ += e.frequency;
  }
}

std::vector<Count> CountHistogram::expand() const {
  std::vector<Count> out;
  out.reserve(static_cast<std::size_t>(total_));
  for (const auto& e : entries_) out.insert(out.end(), e.frequency, e.count);
  return out;
}

CountHistogram build_histogram(std::span<const Count> counts) {
  if (counts.empty()) throw Error("cannot build a histogram from no records");
  std::map<Count, std::int64_t> freq;
  for (Count c : counts) {
    if (c < 0) throw Error("negative count");
    ++freq[c];
  }
  std::vector<CountHistogram::Entry> entries;
  entries.reserve(freq.size());
  for (const auto& [c, f] : freq) entries.push_back({c, f});
  return CountHistogram(std::move(entries));
}

CountHistogram build_histogram(std::span<const CountRecord> records) {
  std::vector<Count> counts;
  counts.reserve(records.size());
  for (const auto& r : records) counts.push_back(r.count);
  return build_histogram(counts);
}

void validate_edges(std::span<const Bin> edges) {
  if (edges.empty()) throw Error("bin edges are empty");
  if (edges.front().lo != 0) throw Error("first bin must start at 0");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges[k].lo > edges[k].hi) {
      throw Error("bin " + std::to_string(k) + " has lo > hi");
    }
    if (k > 0 && edges[k].lo != edges[k - 1].hi + 1) {
      throw Error("bins " + std::to_string(k - 1) + " and " +
                  std::to_string(k) + " are not contiguous");
    }
  }
}

void BinSpec::validate() const {
  validate_edges(edges);
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0, 1)");
  if (alpha < 1) throw Error("alpha must be >= 1");
  if (beta < 0) throw Error("beta must be >= 0");
  if (static_cast<std::int64_t>(edges.size()) > alpha) {
    throw Error("number of bins exceeds alpha");
  }
}

std::size_t assign_bin(Count count, const BinSpec& bins) {
  return assign_bin(count, bins, OverflowPolicy::clamp);
}

std::size_t assign_bin(Count count, const BinSpec& bins,
                       OverflowPolicy policy) {
  if (count < 0) throw Error("negative count");
  const auto& e = bins.edges;
  if (count > e.back().hi) {
    if (policy == OverflowPolicy::reject) {
      throw Error("count " + std::to_string(count) +
                  " exceeds the fitted range [0, " +
                  std::to_string(e.back().hi) + "]");
    }
    return e.size() - 1;
  }
  // First bin whose upper edge is >= count.
  auto it = std::lower_bound(
      e.begin(), e.end(), count,
      [](const Bin& b, Count c) { return b.hi < c; });
  return static_cast<std::size_t>(it - e.begin());
}

json to_json(const BinSpec& bins) {
  json edges = json::array();
  for (const auto& b : bins.edges) edges.push_back({b.lo, b.hi});
  json meta = {{"dataset", bins.meta.dataset},
               {"fitted_at", bins.meta.fitted_at}};
  meta["seed"] = bins.meta.seed ? json(*bins.meta.seed) : json(nullptr);
  for (const auto& [k, v] : bins.meta.extra.items()) meta[k] = v;
  return {{"edges", std::move(edges)},
          {"gamma", bins.gamma},
          {"alpha", bins.alpha},
          {"beta", bins.beta},
          {"meta", std::move(meta)}};
}

BinSpec bin_spec_from_json(const json& j) {
  try {
    BinSpec spec;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error("malformed bin edge");
      spec.edges.push_back({e[0].get<Count>(), e[1].get<Count>()});
    }
    spec.gamma = j.at("gamma").get<double>();
    spec.alpha = j.at("alpha").get<std::int64_t>();
    spec.beta = j.value("beta", std::int64_t{1});
    if (auto it = j.find("meta"); it != j.end() && it->is_object()) {
      for (const auto& [k, v] : it->items()) {
        if (k == "dataset" && v.is_string()) {
          spec.meta.dataset = v.get<std::string>();
        } else if (k == "fitted_at" && v.is_string()) {
          spec.meta.fitted_at = v.get<std::string>();
        } else if (k == "seed") {
          if (v.is_number_integer()) spec.meta.seed = v.get<std::uint64_t>();
        } else {
          spec.meta.extra[k] = v;
        }
      }
    }
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed bins JSON: ") + e.what());
  }
}

}  // namespace crowdbin

#include "crowdbin/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "crowdbin/bin_loss.hpp"
#include "crowdbin/binning.hpp"
#include "crowdbin/data_model.hpp"
#include "crowdbin/metrics.hpp"
#include "crowdbin/report.hpp"
#include "crowdbin/sampling.hpp"
#include "csv.hpp"

namespace crowdbin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Output files are written next to their destination under a temporary
// name and renamed only once every output of the command is complete.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  ~OutputSet() {
    for (auto& f : files_) {
      f.stream.reset();
      std::error_code ec;
      if (!committed_) fs::remove(f.temp, ec);
    }
  }

  std::ostream& open(const std::string& path) {
    auto& f = files_.emplace_back();
    f.final_path = path;
    f.temp = path + ".tmp";
    f.stream = std::make_unique<std::ofstream>(f.temp, std::ios::binary);
    if (!*f.stream) throw Error("cannot open '" + path + "' for writing");
    return *f.stream;
  }

  void commit() {
    for (auto& f : files_) {
      f.stream->flush();
      if (!*f.stream) throw Error("failed writing '" + f.final_path + "'");
      f.stream.reset();
    }
    for (auto& f : files_) fs::rename(f.temp, f.final_path);
    committed_ = true;
  }

 private:
  struct File {
    std::string final_path;
    std::string temp;
    std::unique_ptr<std::ofstream> stream;
  };
  std::vector<File> files_;
  bool committed_ = false;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

// Re-raises loader errors with the offending file name in front.
template <typename Fn>
auto with_file_context(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

InputFormat resolve_format(const std::string& flag, const std::string& path) {
  return flag.empty() ? format_from_path(path) : parse_input_format(flag);
}

std::vector<CountRecord> read_counts(const std::string& path,
                                     const std::string& format) {
  auto in = open_input(path);
  return with_file_context(
      path, [&] { return load_counts(in, resolve_format(format, path)); });
}

std::vector<PredictionRecord> read_predictions(const std::string& path,
                                               const std::string& format) {
  auto in = open_input(path);
  return with_file_context(
      path, [&] { return load_predictions(in, resolve_format(format, path)); });
}

std::vector<PointAnnotatedRecord> read_points(const std::string& path) {
  auto in = open_input(path);
  return with_file_context(path, [&] { return load_points(in); });
}

BinSpec read_bins(const std::string& path) {
  auto in = open_input(path);
  return with_file_context(path, [&] {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(std::string("invalid JSON: ") + e.what());
    }
    return bin_spec_from_json(j);
  });
}

void write_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(std::string(kSeedEnv) + " is not an unsigned integer");
    }
  }
  return 0;
}

struct ThetaFlags {
  double min = 0.0;
  double max = 100.0;
  double step = 5.0;
  bool skip_exact = false;

  void add_to(CLI::App& app) {
    app.add_option("--theta-min", min, "Smallest TPER threshold")
        ->capture_default_str();
    app.add_option("--theta-max", max, "Largest TPER threshold")
        ->capture_default_str();
    app.add_option("--theta-step", step, "TPER threshold spacing")
        ->capture_default_str();
    app.add_flag("--tper-skip-exact", skip_exact,
                 "Leave zero-error images out of the TPER numerator");
  }

  json to_json() const {
    return {{"theta_min", min},
            {"theta_max", max},
            {"theta_step", step},
            {"tper_skip_exact", skip_exact}};
  }
};

struct BinsFitCommand {
  std::string counts;
  std::string format;
  std::string out;
  std::optional<double> gamma;
  bool grid_search = false;
  std::optional<std::int64_t> alpha;
  std::int64_t beta = 1;
  std::string model = "multinomial";
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::vector<double> gammas = GridSearchConfig{}.gammas;
  std::vector<double> ratios = GridSearchConfig{}.ratios;
  int repeats = GridSearchConfig{}.seeds;
  std::string heldout_probs = "test";
  std::string dataset;

  void add_to(CLI::App& app) {
    app.add_option("--counts", counts, "Counts file (image_id,count)")
        ->required();
    app.add_option("--format", format, "csv or jsonl (default: by extension)");
    app.add_option("--out", out, "Bins JSON to write")->required();
    app.add_option("--gamma", gamma, "Prior parameter gamma in (0,1)");
    app.add_flag("--grid-search", grid_search,
                 "Choose gamma by cross-validated grid search");
    app.add_option("--alpha", alpha,
                   "Upper bound on the number of bins (default: number of "
                   "distinct counts after smoothing)");
    app.add_option("--beta", beta, "Additive smoothing factor")
        ->capture_default_str();
    app.add_option("--model", model, "multinomial or poisson")
        ->capture_default_str();
    app.add_option("--seed", seed, "First cross-validation seed")
        ->capture_default_str();
    app.add_option("--threads", threads, "Grid search workers (0 = all cores)")
        ->capture_default_str();
    app.add_option("--gammas", gammas, "Gamma grid")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--ratios", ratios, "Held-out ratios")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--repeats", repeats, "Seeds per (gamma, ratio)")
        ->capture_default_str();
    app.add_option("--heldout-probs", heldout_probs,
                   "Held-out bin probabilities from 'test' or 'train'")
        ->capture_default_str();
    app.add_option("--dataset-id", dataset,
                   "Dataset name stored in the output (default: file stem)");
  }

  json config() const {
    return {{"subcommand", "bins fit"},
            {"counts", counts},
            {"format", format},
            {"gamma", gamma ? json(*gamma) : json(nullptr)},
            {"grid_search", grid_search},
            {"alpha", alpha ? json(*alpha) : json(nullptr)},
            {"beta", beta},
            {"model", model},
            {"seed", seed},
            {"gammas", gammas},
            {"ratios", ratios},
            {"repeats", repeats},
            {"heldout_probs", heldout_probs}};
  }

  int run(std::ostream& log) const {
    if (!grid_search && !gamma) {
      throw Error("either --gamma or --grid-search is required");
    }
    if (grid_search && gamma) {
      throw Error("--gamma and --grid-search are mutually exclusive");
    }
    const auto likelihood = parse_likelihood_model(model);
    HeldOutProbabilities probs;
    if (heldout_probs == "test") {
      probs = HeldOutProbabilities::test;
    } else if (heldout_probs == "train") {
      probs = HeldOutProbabilities::train;
    } else {
      throw Error("--heldout-probs must be 'test' or 'train'");
    }

    const auto records = read_counts(counts, format);
    BinSpec spec;
    double log_posterior = 0.0;
    json grid = nullptr;
    if (grid_search) {
      GridSearchConfig cfg;
      cfg.gammas = gammas;
      cfg.ratios = ratios;
      cfg.seeds = repeats;
      cfg.first_seed = seed;
      cfg.beta = beta;
      cfg.model = likelihood;
      cfg.alpha = alpha;
      cfg.probabilities = probs;
      cfg.threads = threads;
      auto result = grid_search_gamma(records, cfg);
      spec = std::move(result.bins);
      log_posterior = result.log_posterior;
      grid = {{"gammas", result.gammas},
              {"ratios", result.ratios},
              {"mean_likelihood", result.mean_likelihood},
              {"index_sums", result.index_sums},
              {"best_gamma", result.best_gamma}};
    } else {
      if (records.empty()) throw Error(counts + ": no records");
      spec = fit_bins(build_histogram(records), *gamma, alpha, beta,
                      likelihood, &log_posterior);
    }

    spec.meta.dataset =
        dataset.empty() ? fs::path(counts).stem().string() : dataset;
    spec.meta.fitted_at = utc_timestamp();
    spec.meta.seed = seed;
    spec.meta.extra["model"] = model;
    spec.meta.extra["log_posterior"] = log_posterior;
    spec.meta.extra["n_records"] = records.size();
    if (!grid.is_null()) spec.meta.extra["grid_search"] = std::move(grid);
    spec.meta.extra["config"] = config();

    OutputSet outputs;
    write_json(outputs.open(out), to_json(spec));
    outputs.commit();
    log << "wrote " << spec.size() << " bins (gamma=" << spec.gamma
        << ") to " << out << '\n';
    return 0;
  }
};

struct ScheduleCommand {
  std::string counts;
  std::string format;
  std::string bins;
  std::string out;
  std::string scheme = "rr";
  std::size_t batch_size = 32;
  std::int64_t epochs = 1;
  std::uint64_t seed = 0;
  std::string overflow = "clamp";

  void add_to(CLI::App& app) {
    app.add_option("--counts", counts, "Counts file (image_id,count)")
        ->required();
    app.add_option("--format", format, "csv or jsonl (default: by extension)");
    app.add_option("--bins", bins, "Bins JSON from 'bins fit'")->required();
    app.add_option("--out", out, "Schedule CSV to write")->required();
    app.add_option("--scheme", scheme, "rr (round robin) or rs (random bin)")
        ->capture_default_str();
    app.add_option("--batch-size", batch_size, "Minibatch size")
        ->capture_default_str();
    app.add_option("--epochs", epochs, "Number of epochs")
        ->capture_default_str();
    app.add_option("--seed", seed, "Sampler seed")->capture_default_str();
    app.add_option("--overflow", overflow,
                   "Counts above the fitted range: clamp or reject")
        ->capture_default_str();
  }

  json config() const {
    return {{"subcommand", "schedule"}, {"counts", counts},
            {"format", format},         {"bins", bins},
            {"scheme", scheme},         {"batch_size", batch_size},
            {"epochs", epochs},         {"seed", seed},
            {"overflow", overflow}};
  }

  int run(std::ostream& log) const {
    const auto sampling = parse_sampling_scheme(scheme);
    if (batch_size < 1) throw Error("--batch-size must be >= 1");
    if (epochs < 1) throw Error("--epochs must be >= 1");
    OverflowPolicy policy;
    if (overflow == "clamp") {
      policy = OverflowPolicy::clamp;
    } else if (overflow == "reject") {
      policy = OverflowPolicy::reject;
    } else {
      throw Error("--overflow must be 'clamp' or 'reject'");
    }
    const auto spec = read_bins(bins);
    const auto records = read_counts(counts, format);

    OutputSet outputs;
    auto& csv = outputs.open(out);
    write_schedule_csv_header(csv);
    for (std::int64_t e = 1; e <= epochs; ++e) {
      write_schedule_csv_rows(csv, make_schedule(sampling, records, spec,
                                                 batch_size, e, seed, policy));
    }
    write_json(outputs.open(out + ".meta.json"), {{"config", config()}});
    outputs.commit();
    log << "wrote " << epochs << " epoch(s) of " << records.size()
        << " steps to " << out << '\n';
    return 0;
  }
};

struct LossCommand {
  std::string predictions;
  std::string format;
  std::string bins;
  std::string out;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::string reduction = "mean";

  void add_to(CLI::App& app) {
    app.add_option("--predictions", predictions,
                   "Predictions file (image_id,gt_count,pred_count)")
        ->required();
    app.add_option("--format", format, "csv or jsonl (default: by extension)");
    app.add_option("--bins", bins, "Bins JSON from 'bins fit'")->required();
    app.add_option("--out", out, "Per-image loss CSV to write")->required();
    app.add_option("--lambda1", lambda1, "Weight of the in-bin log branch")
        ->capture_default_str();
    app.add_option("--lambda2", lambda2, "Weight of the bin loss in L + l2*Lb")
        ->capture_default_str();
    app.add_option("--reduction", reduction, "Batch reduction: mean or sum")
        ->capture_default_str();
  }

  json config() const {
    return {{"subcommand", "loss"}, {"predictions", predictions},
            {"format", format},     {"bins", bins},
            {"lambda1", lambda1},   {"lambda2", lambda2},
            {"reduction", reduction}};
  }

  int run(std::ostream& log) const {
    const LossConfig cfg{lambda1, lambda2};
    cfg.validate();
    const auto reduce = parse_reduction(reduction);
    const auto spec = read_bins(bins);
    const auto preds = read_predictions(predictions, format);
    if (preds.empty()) throw Error(predictions + ": no records");

    OutputSet outputs;
    auto& csv = outputs.open(out);
    csv << "image_id,gt_count,pred_count,bin_index,bin_loss,weighted_bin_loss\n";
    for (const auto& p : preds) {
      const double l = bin_loss(p.gt_count, p.pred_count, spec, cfg);
      csv << detail::csv_escape(p.image_id) << ',' << p.gt_count << ','
          << format_double(p.pred_count) << ','
          << assign_bin(p.gt_count, spec) << ',' << format_double(l) << ','
          << format_double(cfg.lambda2 * l) << '\n';
    }
    const double batch = batch_bin_loss(preds, spec, cfg, reduce);
    write_json(outputs.open(out + ".meta.json"),
               {{"config", config()},
                {"batch_bin_loss", batch},
                {"reduction", reduction},
                {"n", preds.size()}});
    outputs.commit();
    log << "batch bin loss (" << reduction << "): " << format_double(batch)
        << '\n';
    return 0;
  }
};

std::vector<GameResult> game_levels(std::span<const PointAnnotatedRecord> pts,
                                    const std::vector<unsigned>& levels) {
  std::vector<GameResult> out;
  for (unsigned l : levels) {
    auto r = game(pts, l);
    r.per_image.clear();
    out.push_back(std::move(r));
  }
  return out;
}

struct EvalCommand {
  std::string predictions;
  std::string format;
  std::string bins;
  std::string points;
  std::string out;
  std::string tper_csv;
  std::vector<unsigned> levels{0, 1, 2, 3};
  bool sample_std = false;
  ThetaFlags theta;

  void add_to(CLI::App& app) {
    app.add_option("--predictions", predictions,
                   "Predictions file (image_id,gt_count,pred_count)")
        ->required();
    app.add_option("--format", format, "csv or jsonl (default: by extension)");
    app.add_option("--bins", bins, "Bins JSON from 'bins fit'")->required();
    app.add_option("--points", points, "Point annotations JSONL for GAME");
    app.add_option("--out", out, "Evaluation report JSON")->required();
    app.add_option("--tper-csv", tper_csv, "Also write the TPER curve as CSV");
    app.add_option("--game-levels", levels, "GAME levels")
        ->delimiter(',')
        ->capture_default_str();
    app.add_flag("--sample-std", sample_std,
                 "Use n-1 instead of n for standard deviations");
    theta.add_to(app);
  }

  json config() const {
    json c = {{"subcommand", "eval"}, {"predictions", predictions},
              {"format", format},     {"bins", bins},
              {"points", points},     {"game_levels", levels},
              {"sample_std", sample_std}};
    c.update(theta.to_json());
    return c;
  }

  int run(std::ostream& log) const {
    const auto convention =
        sample_std ? StdConvention::sample : StdConvention::population;
    const auto thetas = theta_grid(theta.min, theta.max, theta.step);
    const auto spec = read_bins(bins);
    const auto preds = read_predictions(predictions, format);
    if (preds.empty()) throw Error(predictions + ": no records");

    EvalReport report;
    report.bins = spec.edges;
    report.per_bin = per_bin_stats(preds, spec, convention);
    report.pooled = pooled_stats(report.per_bin);
    report.global = global_stats(preds, convention);
    report.tper = tper_curve(preds, thetas, {theta.skip_exact});
    if (!points.empty()) {
      const auto pts = read_points(points);
      if (pts.empty()) throw Error(points + ": no records");
      report.game = game_levels(pts, levels);
    }

    auto j = to_json(report);
    j["config"] = config();
    OutputSet outputs;
    write_json(outputs.open(out), j);
    if (!tper_csv.empty()) write_tper_csv(outputs.open(tper_csv), *report.tper);
    outputs.commit();
    log << "pooled MAE " << format_double(report.pooled.mu_pool) << " +/- "
        << format_double(report.pooled.sigma_pool) << ", global MAE "
        << format_double(report.global.mae) << '\n';
    return 0;
  }
};

struct TperCommand {
  std::string predictions;
  std::string format;
  std::string out;
  std::string csv;
  ThetaFlags theta;

  void add_to(CLI::App& app) {
    app.add_option("--predictions", predictions,
                   "Predictions file (image_id,gt_count,pred_count)")
        ->required();
    app.add_option("--format", format, "csv or jsonl (default: by extension)");
    app.add_option("--out", out, "TPER JSON to write")->required();
    app.add_option("--csv", csv, "Also write the curve as CSV (theta,tper)");
    theta.add_to(app);
  }

  json config() const {
    json c = {{"subcommand", "tper"},
              {"predictions", predictions},
              {"format", format}};
    c.update(theta.to_json());
    return c;
  }

  int run(std::ostream& log) const {
    const auto thetas = theta_grid(theta.min, theta.max, theta.step);
    const auto preds = read_predictions(predictions, format);
    if (preds.empty()) throw Error(predictions + ": no records");
    const auto curve = tper_curve(preds, thetas, {theta.skip_exact});
    OutputSet outputs;
    write_json(outputs.open(out),
               {{"tper", to_json(curve)}, {"config", config()}});
    if (!csv.empty()) write_tper_csv(outputs.open(csv), curve);
    outputs.commit();
    log << "TPER AUC (normalized) " << format_double(curve.auc_normalized)
        << '\n';
    return 0;
  }
};

struct GameCommand {
  std::string points;
  std::string out;
  std::vector<unsigned> levels{0, 1, 2, 3};

  void add_to(CLI::App& app) {
    app.add_option("--points", points, "Point annotations JSONL")->required();
    app.add_option("--out", out, "GAME JSON to write")->required();
    app.add_option("--levels", levels, "GAME levels")
        ->delimiter(',')
        ->capture_default_str();
  }

  json config() const {
    return {{"subcommand", "game"}, {"points", points}, {"levels", levels}};
  }

  int run(std::ostream& log) const {
    const auto pts = read_points(points);
    if (pts.empty()) throw Error(points + ": no records");
    const auto results = game_levels(pts, levels);
    OutputSet outputs;
    write_json(outputs.open(out),
               {{"game", to_json(results)}, {"config", config()}});
    outputs.commit();
    for (const auto& r : results) {
      log << "GAME(" << r.level << ") " << format_double(r.value) << '\n';
    }
    return 0;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Skew-aware binning, balanced sampling, bin loss and "
               "evaluation for count regression"};
  app.name(args.empty() ? "crowdbin" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  BinsFitCommand bins_fit;
  ScheduleCommand schedule;
  LossCommand loss;
  EvalCommand eval;
  TperCommand tper;
  GameCommand game_cmd;

  std::uint64_t seed = 0;
  try {
    seed = default_seed();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  bins_fit.seed = seed;
  schedule.seed = seed;

  auto* bins = app.add_subcommand("bins", "Fit count bins");
  bins->require_subcommand(1);
  auto* fit = bins->add_subcommand(
      "fit", "Fit the MAP partition of the count range and write bins JSON");
  bins_fit.add_to(*fit);
  auto* sched = app.add_subcommand(
      "schedule", "Write balanced per-epoch minibatch schedules");
  schedule.add_to(*sched);
  auto* loss_app = app.add_subcommand(
      "loss", "Evaluate the bin loss over a predictions file");
  loss.add_to(*loss_app);
  auto* eval_app = app.add_subcommand(
      "eval", "Per-bin, pooled and global errors, TPER and GAME");
  eval.add_to(*eval_app);
  auto* tper_app = app.add_subcommand("tper", "Thresholded percentage error ratio curve");
  tper.add_to(*tper_app);
  auto* game_app = app.add_subcommand("game", "Grid average mean absolute error");
  game_cmd.add_to(*game_app);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("crowdbin");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*fit) return bins_fit.run(out);
    if (*sched) return schedule.run(out);
    if (*loss_app) return loss.run(out);
    if (*eval_app) return eval.run(out);
    if (*tper_app) return tper.run(out);
    if (*game_app) return game_cmd.run(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace crowdbin::cli

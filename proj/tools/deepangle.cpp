// deepangle command-line tool: dataset generation, training, prediction,
// benchmarking and time-series analysis.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "deepangle/deepangle.hpp"

namespace fs = std::filesystem;
using namespace deepangle;
using json = nlohmann::ordered_json;

namespace {

struct Global {
  unsigned workers = default_workers();
  std::uint64_t seed = 1;
  std::string out = ".";
};

std::string file_checksum(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open " + p.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    h = fnv1a64(buf.data(), std::size_t(in.gcount()), h);
  }
  return hex64(h);
}

void write_text(const fs::path& p, const std::string& s) { write_bytes(p, s.data(), s.size()); }

/// Per-run record: command, resolved configuration, input/output checksums, and timing.
class Manifest {
 public:
  Manifest(std::string command, const Global& g) : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["config"]["seed"] = g.seed;
    j_["config"]["workers"] = g.workers;
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }
  json& config() { return j_["config"]; }
  void input(const fs::path& p) { j_["inputs"].push_back({{"path", p.string()}, {"checksum", file_checksum(p)}}); }
  void output(const fs::path& p) {
    j_["outputs"].push_back({{"path", p.filename().string()}, {"checksum", file_checksum(p)}});
  }
  void timing(const std::string& key, double seconds) { timing_[key] = seconds; }
  void write(const fs::path& dir) {
    timing_["total_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["timing"] = timing_;
    write_text(dir / "manifest.json", j_.dump(2) + "\n");
  }

 private:
  json j_;
  json timing_ = json::object();
  std::chrono::steady_clock::time_point start_;
};

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) fail(ErrorKind::data, "cannot create output directory " + out);
  return p;
}

fs::path meta_for(const std::string& raw, const std::string& meta) {
  if (!meta.empty()) return meta;
  return fs::path(raw).replace_extension(".json");
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Convexity convexity_from(const std::string& s) {
  if (s == "convex") return Convexity::convex;
  if (s == "concave") return Convexity::concave;
  fail(ErrorKind::precondition, "convexity must be convex or concave, got " + s);
}

// ---------------------------------------------------------------------------
// gen-train

struct GenTrainArgs {
  std::vector<int> radii{4, 8};
  std::size_t count = 10000;
  double theta_min = 5, theta_max = 175;
};

void cmd_gen_train(const Global& g, const GenTrainArgs& a) {
  for (int r : a.radii) require(r >= 2, "sub-sample radius must be at least 2, got " + std::to_string(r));
  fs::path out = prepare_out(g.out);
  Manifest m("gen-train", g);
  m.config()["radii"] = a.radii;
  m.config()["count"] = a.count;
  m.config()["theta_range"] = {a.theta_min, a.theta_max};
  for (int r : a.radii) {
    FlatDatasetConfig c;
    c.count = a.count;
    c.radius = r;
    c.theta_min = a.theta_min;
    c.theta_max = a.theta_max;
    c.seed = derive_seed(g.seed, std::uint64_t(r));
    c.workers = g.workers;
    auto t0 = std::chrono::steady_clock::now();
    Dataset ds = generate_flat_dataset(c);
    m.timing("generate_r" + std::to_string(r) + "_s", seconds_since(t0));
    fs::path data = out / ("dataset_r" + std::to_string(r) + ".bin");
    fs::path truth = out / ("truth_r" + std::to_string(r) + ".csv");
    write_dataset(ds, data);
    std::ostringstream os;
    os << "index,angle_deg\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i, 180.0 * ds.targets[i]);
      os << buf;
    }
    write_text(truth, os.str());
    m.output(data);
    m.output(truth);
    std::cout << "radius " << r << ": " << ds.size() << " samples -> " << data.string() << "\n";
  }
  m.write(out);
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  int arch = 2;
  int radius = 8;
  int epochs = 200;
  int batch = 32;
  double lr = 2e-4;
  double dropout = 0.2;
  std::string model_name;
};

void cmd_train(const Global& g, const TrainArgs& a) {
  ModelSpec spec = build_arch(a.arch, a.radius, a.dropout);
  fs::path data = a.data;
  if (fs::is_directory(data)) data /= "dataset_r" + std::to_string(a.radius) + ".bin";
  fs::path out = prepare_out(g.out);
  Manifest m("train", g);
  m.input(data);
  Dataset ds = read_dataset(data);
  if (ds.radius != a.radius)
    fail(ErrorKind::data, "dataset " + data.string() + " has radius " + std::to_string(ds.radius) +
                              " but --radius is " + std::to_string(a.radius));
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.initial_lr = a.lr;
  tc.seed = g.seed;
  Split sp = split_dataset(ds.size(), 0.8, 0.1, 0.1, g.seed);
  Dataset tr = subset(ds, sp.train), va = subset(ds, sp.val), te = subset(ds, sp.test);
  m.config()["architecture"] = a.arch;
  m.config()["radius"] = a.radius;
  m.config()["epochs"] = a.epochs;
  m.config()["batch_size"] = a.batch;
  m.config()["initial_lr"] = a.lr;
  m.config()["decay_rate"] = tc.decay_rate;
  m.config()["decay_steps"] = tc.decay_steps;
  m.config()["dropout"] = a.dropout;
  m.config()["split"] = {sp.train.size(), sp.val.size(), sp.test.size()};

  auto t0 = std::chrono::steady_clock::now();
  auto res = train(spec, tr, va, tc, [](const EpochReport& e) {
    std::fprintf(stderr, "epoch %d train_mse %.6f val_mse %.6f\n", e.epoch, e.train_mse, e.val_mse);
  });
  m.timing("train_s", seconds_since(t0));

  std::string name = a.model_name.empty()
                         ? "model_a" + std::to_string(a.arch) + "_r" + std::to_string(a.radius) + ".weights"
                         : a.model_name;
  fs::path wpath = out / name;
  save_weights(res.net, wpath);
  std::ostringstream hist;
  hist << "epoch\ttrain_mse\tval_mse\tlearning_rate\n";
  for (const auto& e : res.history) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d\t%.8f\t%.8f\t%.8g\n", e.epoch, e.train_mse, e.val_mse, e.learning_rate);
    hist << buf;
  }
  write_text(out / "training.tsv", hist.str());

  json rep;
  rep["architecture"] = a.arch;
  rep["radius"] = a.radius;
  rep["trainable_parameters"] = spec.trainable_count();
  rep["weights"] = name;
  rep["checksum"] = load_weights(wpath).checksum;
  if (te.size() > 0) {
    Metrics mt = evaluate(res.net, te);
    rep["test"] = {{"samples", te.size()},
                   {"mse", mt.mse},
                   {"mae_deg", mt.mae_deg},
                   {"r2", mt.r2_defined ? json(mt.r2) : json(nullptr)}};
  }
  write_text(out / "metrics.json", rep.dump(2) + "\n");
  m.output(wpath);
  m.output(out / "training.tsv");
  m.output(out / "metrics.json");
  m.write(out);
  std::cout << "trained arch " << a.arch << " r=" << a.radius << " (" << spec.trainable_count()
            << " trainable parameters) -> " << wpath.string() << "\n";
}

// ---------------------------------------------------------------------------
// predict / timeseries shared options

struct PipelineArgs {
  std::string small, large;
  std::size_t max_samples = 5000;
  int chunk_side = 128;
  int halo = 8;
  double merger_radius = 16;
};

PipelineConfig pipeline_config(const Global& g, const PipelineArgs& a) {
  PipelineConfig c;
  c.max_samples_per_chunk = a.max_samples;
  c.chunk_side = a.chunk_side;
  c.halo = a.halo;
  c.merger_radius = a.merger_radius;
  c.seed = g.seed;
  c.workers = g.workers;
  return c;
}

struct Models {
  LoadedModel small, large;
};

Models load_models(const PipelineArgs& a, const PipelineConfig& c, Manifest& m) {
  if (a.small.empty() || a.large.empty()) fail(ErrorKind::precondition, "--small and --large weight files are required");
  m.input(a.small);
  m.input(a.large);
  return {load_weights(a.small, c.small_radius), load_weights(a.large, c.large_radius)};
}

void add_pipeline_options(CLI::App* sub, PipelineArgs& a) {
  sub->add_option("--small", a.small, "radius-4 weight file");
  sub->add_option("--large", a.large, "radius-8 weight file");
  sub->add_option("--max-samples", a.max_samples, "sub-samples per chunk")->capture_default_str();
  sub->add_option("--chunk-side", a.chunk_side, "chunk edge length (voxels)")->capture_default_str();
  sub->add_option("--halo", a.halo, "chunk halo (voxels)")->capture_default_str();
  sub->add_option("--merger-radius", a.merger_radius, "merger neighborhood (voxels)")->capture_default_str();
}

std::vector<std::array<double, 3>> read_truth_centers(const fs::path& p) {
  std::istringstream in(read_text_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::array<double, 3>> c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 3> v{};
    if (std::sscanf(line.c_str(), "%*d,%lf,%lf,%lf", &v[0], &v[1], &v[2]) != 3)
      fail(ErrorKind::data, "malformed truth row in " + p.string() + ": " + line);
    c.push_back(v);
  }
  return c;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string volume, meta, truth;
  bool interpolate = false;
  PipelineArgs pipe;
};

void cmd_predict(const Global& g, const PredictArgs& a) {
  fs::path out = prepare_out(g.out);
  Manifest m("predict", g);
  PipelineConfig cfg = pipeline_config(g, a.pipe);
  fs::path meta = meta_for(a.volume, a.meta);
  m.input(a.volume);
  m.input(meta);
  Volume vol = load_volume(a.volume, meta);
  Models models = load_models(a.pipe, cfg, m);
  auto t0 = std::chrono::steady_clock::now();
  AngleField f = run_pipeline(vol, cfg, models.small.net, models.large.net);
  m.timing("pipeline_s", seconds_since(t0));
  f.model_checksums[0] = models.small.checksum;
  f.model_checksums[1] = models.large.checksum;

  std::ostringstream table;
  write_points_table(table, f.points);
  write_text(out / "points.csv", table.str());
  json summary = summary_json(f);
  if (!a.truth.empty()) {
    m.input(a.truth);
    auto centers = read_truth_centers(a.truth);
    std::map<std::size_t, std::size_t> clusters;
    for (const auto& p : f.points) {
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t k = 0; k < centers.size(); ++k) {
        double dx = p.position.x - centers[k][0], dy = p.position.y - centers[k][1], dz = p.position.z - centers[k][2];
        if (dx * dx + dy * dy + dz * dz < bd) bd = dx * dx + dy * dy + dz * dz, best = k;
      }
      ++clusters[best];
    }
    summary["droplet_clusters"] = clusters.size();
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");
  m.output(out / "points.csv");
  m.output(out / "summary.json");
  if (a.interpolate && !f.points.empty()) {
    auto t1 = std::chrono::steady_clock::now();
    auto field = interpolate_volumetric(f.points, phase_mask(vol, Phase::solid));
    save_angle_volume(field, out / "angles.raw", out / "angles.json");
    m.timing("interpolate_s", seconds_since(t1));
    m.output(out / "angles.raw");
    m.output(out / "angles.json");
  }
  m.config()["pipeline"] = to_json(cfg);
  m.write(out);
  if (f.summary.empty)
    std::cout << "no contact points found\n";
  else
    std::printf("%zu points, mean %.2f deg, std %.2f deg\n", f.summary.count, f.summary.stats.mean,
                f.summary.stats.std);
}

// ---------------------------------------------------------------------------
// gen-bench

struct GenBenchArgs {
  double radius = 10;
  std::vector<double> angles{90};
  std::string convexity = "convex";
  int side = 0;
};

void cmd_gen_bench(const Global& g, const GenBenchArgs& a) {
  fs::path out = prepare_out(g.out);
  Manifest m("gen-bench", g);
  auto b = generate_curved_benchmark(a.radius, a.angles, convexity_from(a.convexity), g.seed, a.side);
  save_volume(b.volume, out / "bench.raw", out / "bench.json");
  write_text(out / "truth.csv", benchmark_truth_table(b));
  m.config()["radius"] = a.radius;
  m.config()["angles"] = a.angles;
  m.config()["convexity"] = a.convexity;
  m.config()["side"] = b.volume.dims().nx;
  m.output(out / "bench.raw");
  m.output(out / "bench.json");
  m.output(out / "truth.csv");
  m.write(out);
  std::cout << "benchmark volume " << b.volume.dims().nx << "^3 with " << b.droplets.size() << " droplets\n";
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchArgs {
  PipelineArgs pipe;
  double radius = 10;
  std::vector<double> angles{30, 60, 90, 120, 150};
  std::string convexity = "both";
  bool train_first = false;
  std::size_t train_count = 2000;
  int train_epochs = 50;
  double sigma = 1.0;
};

void cmd_benchmark(const Global& g, const BenchArgs& a) {
  fs::path out = prepare_out(g.out);
  Manifest m("benchmark", g);
  BenchmarkConfig bc;
  bc.droplet_radius = a.radius;
  bc.angles = a.angles;
  bc.seed = g.seed;
  bc.pipeline = pipeline_config(g, a.pipe);
  bc.direct.sigma = a.sigma;
  if (a.convexity != "both") bc.convexities = {convexity_from(a.convexity)};

  Model small, large;
  if (a.train_first) {
    auto t0 = std::chrono::steady_clock::now();
    auto fit = [&](int r) {
      FlatDatasetConfig c;
      c.count = a.train_count;
      c.radius = r;
      c.seed = derive_seed(g.seed, std::uint64_t(r));
      c.workers = g.workers;
      Dataset ds = generate_flat_dataset(c);
      TrainConfig tc;
      tc.epochs = a.train_epochs;
      tc.seed = g.seed;
      auto net = train(build_arch(2, r), ds, Dataset{}, tc).net;
      save_weights(net, out / ("model_a2_r" + std::to_string(r) + ".weights"));
      m.output(out / ("model_a2_r" + std::to_string(r) + ".weights"));
      return net;
    };
    small = fit(bc.pipeline.small_radius);
    large = fit(bc.pipeline.large_radius);
    m.timing("train_s", seconds_since(t0));
    m.config()["train_first"] = {{"count", a.train_count}, {"epochs", a.train_epochs}};
  } else {
    Models models = load_models(a.pipe, bc.pipeline, m);
    small = std::move(models.small.net);
    large = std::move(models.large.net);
  }
  auto rep = run_benchmark(bc, small, large);
  json j = benchmark_json(rep);
  json timing = j["timing"];
  j.erase("timing");
  for (auto& [k, v] : timing.items()) {
    m.timing(k + "_pipeline_s", v["pipeline_s"]);
    m.timing(k + "_direct_s", v["direct_s"]);
  }
  write_text(out / "benchmark.json", j.dump(2) + "\n");
  write_text(out / "timing.json", timing.dump(2) + "\n");
  std::ostringstream drops;
  write_droplet_errors(drops, rep);
  write_text(out / "droplets.csv", drops.str());
  m.config()["radius"] = a.radius;
  m.config()["angles"] = a.angles;
  m.config()["convexity"] = a.convexity;
  m.config()["direct_sigma"] = a.sigma;
  m.config()["pipeline"] = to_json(bc.pipeline);
  m.output(out / "benchmark.json");
  m.output(out / "droplets.csv");
  m.write(out);
  for (const auto& r : rep.results)
    std::printf("%s: R2 pipeline %.4f direct %.4f | time pipeline %.3fs direct %.3fs | speedup %.2f\n",
                to_string(r.convexity), r.pipeline.r2, r.direct.r2, r.pipeline.seconds, r.direct.seconds,
                r.direct.seconds / r.pipeline.seconds);
}

// ---------------------------------------------------------------------------
// timeseries

struct SeriesArgs {
  std::vector<std::string> volumes;
  PipelineArgs pipe;
  bool interpolate = false;
  double bin_width = 1;
  double max_lag = 40;
};

void cmd_timeseries(const Global& g, const SeriesArgs& a) {
  if (a.volumes.empty()) fail(ErrorKind::precondition, "timeseries needs at least one volume");
  fs::path out = prepare_out(g.out);
  Manifest m("timeseries", g);
  PipelineConfig cfg = pipeline_config(g, a.pipe);
  Models models = load_models(a.pipe, cfg, m);
  std::vector<AngleField> fields;
  std::optional<Dims> dims;
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t t = 0; t < a.volumes.size(); ++t) {
    fs::path raw = a.volumes[t], meta = meta_for(a.volumes[t], "");
    m.input(raw);
    m.input(meta);
    Volume vol = load_volume(raw, meta);
    if (dims && !(vol.dims() == *dims))
      fail(ErrorKind::data, "volume " + raw.string() + " has dimensions " + std::to_string(vol.dims().nx) + "x" +
                                std::to_string(vol.dims().ny) + "x" + std::to_string(vol.dims().nz) +
                                " unlike the first step");
    dims = vol.dims();
    AngleField f = run_pipeline(vol, cfg, models.small.net, models.large.net);
    f.volume_id = raw.string();
    std::ostringstream table;
    write_points_table(table, f.points);
    fs::path pts = out / ("points_step" + std::to_string(t) + ".csv");
    write_text(pts, table.str());
    m.output(pts);
    if (a.interpolate && !f.points.empty()) {
      auto field = interpolate_volumetric(f.points, phase_mask(vol, Phase::solid));
      fs::path r = out / ("angles_step" + std::to_string(t) + ".raw"), j = out / ("angles_step" + std::to_string(t) + ".json");
      save_angle_volume(field, r, j);
      m.output(r);
      m.output(j);
    }
    fields.push_back(std::move(f));
  }
  m.timing("pipeline_s", seconds_since(t0));
  TimeseriesConfig tc;
  tc.bin_width = a.bin_width;
  tc.max_lag = a.max_lag;
  tc.workers = g.workers;
  auto rep = timeseries_report(fields, tc);
  std::ostringstream os;
  write_timeseries_report(os, rep);
  write_text(out / "timeseries.tsv", os.str());
  m.output(out / "timeseries.tsv");
  m.config()["pipeline"] = to_json(cfg);
  m.config()["bin_width"] = a.bin_width;
  m.config()["max_lag"] = a.max_lag;
  m.config()["steps"] = a.volumes.size();
  m.write(out);
  std::cout << a.volumes.size() << " steps -> " << (out / "timeseries.tsv").string() << "\n";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::precondition: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-angle estimation from segmented 3-D volumes"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file (flags override)");
  Global g;
  app.add_option("--workers", g.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->envname("DEEPANGLE_OUT")->capture_default_str();

  GenTrainArgs gt;
  auto* s_gt = app.add_subcommand("gen-train", "generate flat-droplet training datasets");
  s_gt->add_option("--radius", gt.radii, "sub-sample radii")->capture_default_str();
  s_gt->add_option("--count", gt.count, "samples per radius")->capture_default_str();
  s_gt->add_option("--theta-min", gt.theta_min)->capture_default_str();
  s_gt->add_option("--theta-max", gt.theta_max)->capture_default_str();

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "train a model on a generated dataset");
  s_tr->add_option("--data", tr.data, "dataset file or gen-train output directory")->required();
  s_tr->add_option("--arch", tr.arch, "architecture 1, 2 or 3")->capture_default_str();
  s_tr->add_option("--radius", tr.radius)->capture_default_str();
  s_tr->add_option("--epochs", tr.epochs)->capture_default_str();
  s_tr->add_option("--batch", tr.batch)->capture_default_str();
  s_tr->add_option("--lr", tr.lr, "initial learning rate")->capture_default_str();
  s_tr->add_option("--dropout", tr.dropout)->capture_default_str();
  s_tr->add_option("--name", tr.model_name, "weight file name");

  PredictArgs pr;
  auto* s_pr = app.add_subcommand("predict", "predict contact angles on a volume");
  s_pr->add_option("--volume", pr.volume, "RAW volume")->required();
  s_pr->add_option("--meta", pr.meta, "meta sidecar (default: volume path with .json)");
  s_pr->add_option("--truth", pr.truth, "benchmark truth table; adds droplet cluster count");
  s_pr->add_flag("--interpolate", pr.interpolate, "export a volumetric angle field");
  add_pipeline_options(s_pr, pr.pipe);

  GenBenchArgs gb;
  auto* s_gb = app.add_subcommand("gen-bench", "write a curved benchmark volume");
  s_gb->add_option("--radius", gb.radius, "droplet radius")->capture_default_str();
  s_gb->add_option("--angles", gb.angles, "one angle or 24")->capture_default_str();
  s_gb->add_option("--convexity", gb.convexity)->capture_default_str();
  s_gb->add_option("--side", gb.side, "cubic domain side (0 = automatic)")->capture_default_str();

  BenchArgs bn;
  auto* s_bn = app.add_subcommand("benchmark", "compare pipeline and direct method on curved benchmarks");
  add_pipeline_options(s_bn, bn.pipe);
  s_bn->add_option("--radius", bn.radius, "droplet radius")->capture_default_str();
  s_bn->add_option("--angles", bn.angles)->capture_default_str();
  s_bn->add_option("--convexity", bn.convexity, "convex, concave or both")->capture_default_str();
  s_bn->add_option("--sigma", bn.sigma, "direct-method smoothing")->capture_default_str();
  s_bn->add_flag("--train-first", bn.train_first, "train arch-2 models before benchmarking");
  s_bn->add_option("--train-count", bn.train_count)->capture_default_str();
  s_bn->add_option("--train-epochs", bn.train_epochs)->capture_default_str();

  SeriesArgs ts;
  auto* s_ts = app.add_subcommand("timeseries", "spatio-temporal analysis over ordered volumes");
  s_ts->add_option("volumes", ts.volumes, "RAW volumes in time order (meta beside each as .json)")->required();
  add_pipeline_options(s_ts, ts.pipe);
  s_ts->add_flag("--interpolate", ts.interpolate, "export per-step volumetric angle fields");
  s_ts->add_option("--bin-width", ts.bin_width)->capture_default_str();
  s_ts->add_option("--max-lag", ts.max_lag)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s_gt) cmd_gen_train(g, gt);
    else if (*s_tr) cmd_train(g, tr);
    else if (*s_pr) cmd_predict(g, pr);
    else if (*s_gb) cmd_gen_bench(g, gb);
    else if (*s_bn) cmd_benchmark(g, bn);
    else if (*s_ts) cmd_timeseries(g, ts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

// glyphforge: train and inspect stroke-based glyph communication models.
//
// Subcommands:
//   train      joint generator/classifier training; writes checkpoint,
//              metrics log, and a sample grid of every symbol
//   sample     render a symbol x temperature grid from a checkpoint
//   bench      accuracy-vs-N benchmark over multiple seeds
//   gradcheck  finite-difference validation of every gradient path

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "glyphforge/checkpoint.hpp"
#include "glyphforge/evaluator.hpp"
#include "glyphforge/gradcheck.hpp"
#include "glyphforge/image.hpp"
#include "glyphforge/trainer.hpp"

namespace gf = glyphforge;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_real_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::vector<int64_t> parse_int_list(const std::string& csv) {
  std::vector<int64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoll(item));
  }
  return out;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metrics(const std::vector<gf::MetricsRecord>& metrics, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw gf::io_error("cannot open " + path + " for writing");
  for (const auto& m : metrics)
    f << m.step << "," << fmt_real(m.loss) << "," << fmt_real(m.val_accuracy) << "\n";
}

/// Fig.-2-style grid: one row per symbol, `columns` fresh samples at T=1.
void write_sample_grid(const gf::Checkpoint& ckpt, int64_t columns, const std::string& path,
                       uint64_t seed) {
  const gf::RasterConfig rc = ckpt.config.raster();
  gf::Rng rng(seed);
  std::vector<std::vector<gf::real>> cells;
  for (int64_t sym = 0; sym < ckpt.config.n; ++sym) {
    std::vector<int64_t> idx(static_cast<size_t>(columns), sym);
    auto actions = gf::sample_actions(ckpt.state.gen, idx, 1.0, rng);
    for (const auto& seq : actions) cells.push_back(gf::render_symbol(seq, rc));
  }
  gf::Image grid =
      gf::compose_grid(cells, ckpt.config.n, columns, ckpt.config.canvas, ckpt.config.canvas);
  gf::write_pgm(grid, path);
}

struct TrainFlags {
  gf::TrainConfig cfg;
  std::string out;
  std::string config_path;
};

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// key=value config file; keys mirror the train flags. Values only apply to
/// options the command line left unset, so flags always take precedence.
bool apply_train_config(const std::string& path, const CLI::App* train, gf::TrainConfig& cfg) {
  std::ifstream f(path);
  if (!f) {
    std::fprintf(stderr, "error: cannot open config file %s\n", path.c_str());
    return false;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: %s:%d: expected key=value\n", path.c_str(), lineno);
      return false;
    }
    const std::string key = trimmed(line.substr(0, eq));
    const std::string val = trimmed(line.substr(eq + 1));
    static const std::vector<std::string> known = {"n",      "strokes",   "batch",
                                                   "steps",  "canvas",    "val-every",
                                                   "val-samples", "lr",   "sigma", "seed"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      std::fprintf(stderr, "error: %s:%d: unknown config key '%s'\n", path.c_str(), lineno,
                   key.c_str());
      return false;
    }
    if (train->count("--" + key) > 0) continue;  // command-line flag wins
    try {
      if (key == "n") cfg.n = std::stoll(val);
      else if (key == "strokes") cfg.strokes = std::stoll(val);
      else if (key == "batch") cfg.batch = std::stoll(val);
      else if (key == "steps") cfg.steps = std::stoll(val);
      else if (key == "canvas") cfg.canvas = std::stoll(val);
      else if (key == "val-every") cfg.val_every = std::stoll(val);
      else if (key == "val-samples") cfg.val_samples = std::stoll(val);
      else if (key == "lr") cfg.lr = static_cast<gf::real>(std::stod(val));
      else if (key == "sigma") cfg.sigma = static_cast<gf::real>(std::stod(val));
      else if (key == "seed") cfg.seed = std::stoull(val);
    } catch (const std::exception&) {
      std::fprintf(stderr, "error: %s:%d: bad value '%s' for key '%s'\n", path.c_str(), lineno,
                   val.c_str(), key.c_str());
      return false;
    }
  }
  return true;
}

int cmd_train(const TrainFlags& flags) {
  fs::create_directories(flags.out);
  std::printf("training: n=%" PRId64 " steps=%" PRId64 " seed=%" PRIu64 " canvas=%" PRId64 "\n",
              flags.cfg.n, flags.cfg.steps, flags.cfg.seed, flags.cfg.canvas);
  gf::TrainResult res = gf::train(flags.cfg, [](int64_t step, gf::real loss, gf::real acc) {
    std::printf("step %6" PRId64 "  loss %.4f  val_acc %.4f\n", step, loss, acc);
    std::fflush(stdout);
  });
  if (res.aborted) {
    std::fprintf(stderr, "training aborted on persistent non-finite loss; "
                         "keeping best checkpoint (step %" PRId64 ")\n", res.best.step);
  }
  const std::string ckpt_path = (fs::path(flags.out) / "checkpoint.bin").string();
  gf::save_checkpoint(res.best, ckpt_path);
  write_metrics(res.metrics, (fs::path(flags.out) / "metrics.csv").string());
  write_sample_grid(res.best, 4, (fs::path(flags.out) / "glyphs.pgm").string(),
                    flags.cfg.seed ^ 0x9f1dull);
  std::printf("best: step %" PRId64 "  val_acc %.4f -> %s\n", res.best.step,
              res.best.val_accuracy, ckpt_path.c_str());
  return res.aborted ? 1 : 0;
}

struct SampleFlags {
  std::string ckpt;
  std::string temps = "0,0.25,0.5,1,1.5,2,4";
  std::string symbols;
  int64_t rows = 4;
  std::string out = "samples.pgm";
  std::string format = "pgm";
  uint64_t seed = 0;
};

int cmd_sample(const SampleFlags& flags) {
  gf::Checkpoint ckpt = gf::load_checkpoint(flags.ckpt);
  auto temps_d = parse_real_list(flags.temps);
  std::vector<gf::real> temps(temps_d.begin(), temps_d.end());
  std::vector<int64_t> symbols =
      flags.symbols.empty() ? std::vector<int64_t>{} : parse_int_list(flags.symbols);
  gf::TemperatureSweep sweep =
      gf::temperature_sweep(ckpt, temps, symbols, flags.rows, flags.seed);

  std::vector<std::vector<gf::real>> cells;
  for (size_t s = 0; s < sweep.symbols.size(); ++s)
    for (size_t t = 0; t < sweep.temperatures.size(); ++t)
      for (int64_t k = 0; k < flags.rows; ++k)
        cells.push_back(sweep.canvases[s][t][static_cast<size_t>(k)]);
  const int64_t cols = static_cast<int64_t>(sweep.temperatures.size()) * flags.rows;
  gf::Image grid = gf::compose_grid(cells, static_cast<int64_t>(sweep.symbols.size()), cols,
                                    sweep.canvas, sweep.canvas);
  gf::write_image(grid, flags.out, flags.format);

  std::printf("symbol");
  for (gf::real T : sweep.temperatures) std::printf(",T=%g", static_cast<double>(T));
  std::printf("  (mean pairwise pixel L2)\n");
  for (size_t s = 0; s < sweep.symbols.size(); ++s) {
    std::printf("%" PRId64, sweep.symbols[s]);
    for (gf::real v : sweep.stochasticity[s]) std::printf(",%.5f", static_cast<double>(v));
    std::printf("\n");
  }
  std::printf("wrote %s\n", flags.out.c_str());
  return 0;
}

struct BenchFlags {
  gf::TrainConfig cfg;
  std::string n_list = "4,16,64";
  int64_t seeds = 3;
  int64_t eval_samples = 10000;
  bool full_grid = false;
  std::string out = "bench.csv";
};

int cmd_bench(const BenchFlags& flags) {
  std::vector<int64_t> ns = parse_int_list(flags.n_list);
  int64_t seeds = flags.seeds;
  if (flags.full_grid) {
    ns = {4, 8, 16, 32, 64, 128, 256, 512};
    seeds = 7;
  }
  gf::NSweepReport report = gf::n_sweep(
      ns, seeds, flags.cfg, flags.eval_samples, [](int64_t n, int64_t seed, gf::real acc) {
        std::printf("n=%" PRId64 " seed=%" PRId64 " accuracy=%.4f\n", n, seed,
                    static_cast<double>(acc));
        std::fflush(stdout);
      });

  bool trend = true;
  for (size_t i = 1; i < report.rows.size(); ++i)
    if (!(report.rows[i].mean < report.rows[i - 1].mean)) trend = false;

  std::ofstream f(flags.out, std::ios::trunc);
  if (!f) throw gf::io_error("cannot open " + flags.out + " for writing");
  f << "# accuracy vs number of symbols; eval_samples=" << report.eval_samples
    << "; eval temperature=1 (training condition, assumed)\n";
  f << "n,seeds,mean,std,raw\n";
  for (const auto& row : report.rows) {
    f << row.n << "," << row.seeds_requested << "," << fmt_real(row.mean) << ","
      << fmt_real(row.stddev) << ",";
    for (size_t i = 0; i < row.raw.size(); ++i) f << (i ? ";" : "") << fmt_real(row.raw[i]);
    f << "\n";
  }
  f << "# trend (mean strictly decreasing in n): " << (trend ? "PASS" : "FAIL") << "\n";

  for (const auto& row : report.rows)
    std::printf("n=%-4" PRId64 " mean=%.4f std=%.4f (%zu/%" PRId64 " cells)\n", row.n,
                static_cast<double>(row.mean), static_cast<double>(row.stddev), row.raw.size(),
                row.seeds_requested);
  std::printf("trend: %s\nwrote %s\n", trend ? "PASS" : "FAIL", flags.out.c_str());
  return 0;
}

struct GradcheckFlags {
  double tol = -1;
  uint64_t seed = 0;
  bool inject_fault = false;
  int raster_configs = 50;
  int e2e_params = 50;
};

int cmd_gradcheck(const GradcheckFlags& flags) {
  gf::GradCheckOptions opt;
  opt.seed = flags.seed;
  opt.inject_fault = flags.inject_fault;
  opt.tol_override = static_cast<gf::real>(flags.tol);
  opt.raster_configs = flags.raster_configs;
  opt.e2e_params = flags.e2e_params;
  auto results = gf::run_gradcheck(opt);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-32s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(),
                static_cast<double>(r.max_rel_err), static_cast<double>(r.tolerance),
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyph communication model: training, sampling, benchmarks"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train a model and write its artifacts");
  train->add_option("--config", train_flags.config_path,
                    "key=value config file; flags take precedence");
  train->add_option("--n", train_flags.cfg.n, "number of symbol classes");
  train->add_option("--strokes", train_flags.cfg.strokes, "strokes per glyph");
  train->add_option("--batch", train_flags.cfg.batch, "batch size");
  train->add_option("--lr", train_flags.cfg.lr, "Adam learning rate");
  train->add_option("--steps", train_flags.cfg.steps, "training steps");
  train->add_option("--canvas", train_flags.cfg.canvas, "canvas edge in pixels");
  train->add_option("--sigma", train_flags.cfg.sigma, "stroke softness");
  train->add_option("--seed", train_flags.cfg.seed, "rng seed");
  train->add_option("--val-every", train_flags.cfg.val_every, "validation interval");
  train->add_option("--val-samples", train_flags.cfg.val_samples, "validation sample count");
  train->add_option("--out", train_flags.out, "output directory")->required();

  SampleFlags sample_flags;
  auto* sample = app.add_subcommand("sample", "render a symbol x temperature grid");
  sample->add_option("--ckpt", sample_flags.ckpt, "checkpoint path")->required();
  sample->add_option("--temps", sample_flags.temps, "comma-separated temperatures");
  sample->add_option("--symbols", sample_flags.symbols, "comma-separated symbol indices (default: all)");
  sample->add_option("--rows", sample_flags.rows, "samples per (symbol, temperature) cell");
  sample->add_option("--out", sample_flags.out, "output image path");
  sample->add_option("--format", sample_flags.format, "image format (pgm)");
  sample->add_option("--seed", sample_flags.seed, "rng seed");

  BenchFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "accuracy-vs-N benchmark");
  bench->add_option("--n", bench_flags.n_list, "comma-separated N values");
  bench->add_option("--seeds", bench_flags.seeds, "seeds per N");
  bench->add_option("--steps", bench_flags.cfg.steps, "training steps per cell");
  bench->add_option("--batch", bench_flags.cfg.batch, "batch size");
  bench->add_option("--lr", bench_flags.cfg.lr, "Adam learning rate");
  bench->add_option("--canvas", bench_flags.cfg.canvas, "canvas edge in pixels");
  bench->add_option("--sigma", bench_flags.cfg.sigma, "stroke softness");
  bench->add_option("--seed", bench_flags.cfg.seed, "base rng seed");
  bench->add_option("--eval-samples", bench_flags.eval_samples, "evaluation sample count");
  bench->add_flag("--full-grid", bench_flags.full_grid,
                  "use the full N in {4..512} x 7 seeds grid (hours of CPU)");
  bench->add_option("--out", bench_flags.out, "report path");

  GradcheckFlags gc_flags;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient validation");
  gradcheck->add_option("--tol", gc_flags.tol, "override every tolerance");
  gradcheck->add_option("--seed", gc_flags.seed, "rng seed");
  gradcheck->add_flag("--inject-fault", gc_flags.inject_fault,
                      "test fixture: include a known-broken backward kernel");
  gradcheck->add_option("--raster-configs", gc_flags.raster_configs,
                        "random stroke configurations to sweep");
  gradcheck->add_option("--e2e-params", gc_flags.e2e_params,
                        "random parameters to probe end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (train->parsed() && !train_flags.config_path.empty() &&
      !apply_train_config(train_flags.config_path, train, train_flags.cfg))
    return 2;

  try {
    if (train->parsed()) return cmd_train(train_flags);
    if (sample->parsed()) return cmd_sample(sample_flags);
    if (bench->parsed()) return cmd_bench(bench_flags);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

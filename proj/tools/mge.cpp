// Command-line front end: training runs, verification suites, and the
// analysis experiments, all driven by a flat key = value configuration with
// flag overrides.

#include <CLI11.hpp>

#include <chrono>
#include <climits>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mge/csv.hpp"
#include "mge/estimator.hpp"
#include "mge/experiments.hpp"
#include "mge/models.hpp"
#include "mge/tasks.hpp"
#include "mge/trainer.hpp"
#include "mge/verify.hpp"
#include "mge/workunits.hpp"

namespace fs = std::filesystem;

namespace {

struct CliError {
  int code;
  std::string message;
};

using ConfigMap = std::map<std::string, std::string>;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "train.strategy",
      "train.iters",
      "train.schedule",
      "train.optimizer",
      "train.lr",
      "train.lr_schedule",
      "train.metric",
      "train.eval_every",
      "train.reset_adam_per_level",
      "mge.levels",
      "mge.n1",
      "task.kind",
      "task.size",
      "task.train_images",
      "task.eval_images",
      "task.sigma",
      "task.eps",
      "model.kind",
      "model.channels",
      "model.depth",
      "model.kernel_size",
      "model.zero_init_final",
      "example1.n",
      "example1.sigmas",
      "example1.levels",
      "coarsen_crop.data",
      "coarsen_crop.sizes",
      "coarsen_crop.images",
      "coarsen_crop.crop_fraction",
      "coarsen_crop.repeats",
      "variance.data",
      "variance.size",
      "variance.images",
      "variance.levels",
      "variance.n1",
      "variance.batch",
      "variance.repeats",
  };
  return keys;
}

ConfigMap defaults() {
  return {
      {"seed", "0"},
      {"train.strategy", "multiscale"},
      {"train.iters", "2000"},
      {"train.schedule", ""},
      {"train.optimizer", "adam"},
      {"train.lr", "0.0005"},
      {"train.lr_schedule", "cosine"},
      {"train.metric", "mse"},
      {"train.eval_every", "25"},
      {"train.reset_adam_per_level", "1"},
      {"mge.levels", "4"},
      {"mge.n1", "16"},
      {"task.kind", "denoise"},
      {"task.size", "32"},
      {"task.train_images", "128"},
      {"task.eval_images", "32"},
      {"task.sigma", "3"},
      {"task.eps", "0.01"},
      {"model.kind", "convstack"},
      {"model.channels", ""},
      {"model.depth", "2"},
      {"model.kernel_size", "3"},
      {"model.zero_init_final", "1"},
      {"example1.n", "256"},
      {"example1.sigmas", "0,0.1,0.5,1.0"},
      {"example1.levels", "5"},
      {"coarsen_crop.data", "smooth"},
      {"coarsen_crop.sizes", "128,64,32"},
      {"coarsen_crop.images", "8"},
      {"coarsen_crop.crop_fraction", "0.25"},
      {"coarsen_crop.repeats", "8"},
      {"variance.data", "smooth"},
      {"variance.size", "32"},
      {"variance.images", "256"},
      {"variance.levels", "2"},
      {"variance.n1", "8"},
      {"variance.batch", "4"},
      {"variance.repeats", "96"},
  };
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Flat `key = value` lines, # comments, no sections.
void apply_config_file(ConfigMap& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{2, "cannot open config file: " + path};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno += 1;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw CliError{2, path + ":" + std::to_string(lineno) + ": expected key = value"};
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw CliError{2, path + ":" + std::to_string(lineno) + ": empty key"};
    if (known_keys().count(key) == 0)
      throw CliError{2, path + ":" + std::to_string(lineno) + ": unknown configuration key '" +
                            key + "'"};
    cfg[key] = value;
  }
}

const std::string& cfg_str(const ConfigMap& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw CliError{2, "missing configuration key '" + key + "'"};
  return it->second;
}

long long cfg_ll(const ConfigMap& cfg, const std::string& key) {
  const std::string& s = cfg_str(cfg, key);
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw CliError{2, "key '" + key + "': not an integer: '" + s + "'"};
  }
}

int cfg_int(const ConfigMap& cfg, const std::string& key) {
  const long long v = cfg_ll(cfg, key);
  if (v < INT_MIN || v > INT_MAX) throw CliError{2, "key '" + key + "': out of range"};
  return static_cast<int>(v);
}

double cfg_double(const ConfigMap& cfg, const std::string& key) {
  const std::string& s = cfg_str(cfg, key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw CliError{2, "key '" + key + "': not a number: '" + s + "'"};
  }
}

bool cfg_bool(const ConfigMap& cfg, const std::string& key) {
  const std::string& s = cfg_str(cfg, key);
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw CliError{2, "key '" + key + "': expected 0/1/true/false, got '" + s + "'"};
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& s, const std::string& key, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw CliError{2, "key '" + key + "': empty list element"};
    try {
      std::size_t pos = 0;
      out.push_back(parse(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const CliError&) {
      throw;
    } catch (const std::exception&) {
      throw CliError{2, "key '" + key + "': bad list element '" + item + "'"};
    }
  }
  return out;
}

std::vector<long long> cfg_ll_list(const ConfigMap& cfg, const std::string& key) {
  return parse_list<long long>(cfg_str(cfg, key), key,
                               [](const std::string& s, std::size_t* pos) {
                                 return std::stoll(s, pos);
                               });
}

std::vector<int> cfg_int_list(const ConfigMap& cfg, const std::string& key) {
  std::vector<int> out;
  for (long long v : cfg_ll_list(cfg, key)) {
    if (v < INT_MIN || v > INT_MAX) throw CliError{2, "key '" + key + "': out of range"};
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> cfg_double_list(const ConfigMap& cfg, const std::string& key) {
  return parse_list<double>(cfg_str(cfg, key), key,
                            [](const std::string& s, std::size_t* pos) {
                              return std::stod(s, pos);
                            });
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Creates the run directory. A fresh timestamped directory is used unless
// one is given; existing artifacts are never overwritten without --force.
fs::path prepare_out_dir(const std::string& given, const std::string& cmd, bool force,
                         const std::vector<std::string>& artifacts) {
  fs::path dir;
  if (given.empty()) {
    const std::string base = "runs/" + cmd + "-" + timestamp();
    dir = base;
    for (int i = 1; fs::exists(dir); ++i) dir = base + "-" + std::to_string(i);
  } else {
    dir = given;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError{2, "cannot create output directory " + dir.string() + ": " + ec.message()};
  if (!force) {
    for (const std::string& name : artifacts)
      if (fs::exists(dir / name))
        throw CliError{2, dir.string() + "/" + name + " exists; pass --force to overwrite"};
  }
  return dir;
}

void write_effective_config(const fs::path& dir, const std::string& cmd, const ConfigMap& cfg,
                            const std::vector<std::string>& extra_comments) {
  std::ofstream out(dir / "effective_config");
  if (!out) throw CliError{2, "cannot write " + (dir / "effective_config").string()};
  out << "# " << cmd << " effective configuration\n";
  for (const std::string& c : extra_comments) out << "# " << c << "\n";
  for (const auto& [k, v] : cfg) out << k << " = " << v << "\n";
}

// ---- train ----

mge::TrainConfig build_train_config(const ConfigMap& cfg) {
  mge::TrainConfig tc;
  try {
    tc.strategy = mge::parse_strategy(cfg_str(cfg, "train.strategy"));
    tc.optimizer = mge::parse_optimizer(cfg_str(cfg, "train.optimizer"));
    tc.lr_schedule = mge::parse_lr_schedule(cfg_str(cfg, "train.lr_schedule"));
    tc.metric = mge::parse_metric(cfg_str(cfg, "train.metric"));
  } catch (const std::exception& e) {
    throw CliError{2, e.what()};
  }
  tc.levels = cfg_int(cfg, "mge.levels");
  tc.n1 = cfg_ll(cfg, "mge.n1");
  tc.lr = cfg_double(cfg, "train.lr");
  tc.eval_every = cfg_ll(cfg, "train.eval_every");
  tc.reset_adam_per_level = cfg_bool(cfg, "train.reset_adam_per_level");
  tc.seed = static_cast<std::uint64_t>(cfg_ll(cfg, "seed"));
  if (tc.strategy == mge::Strategy::full_multiscale) {
    const std::string sched = cfg_str(cfg, "train.schedule");
    if (sched.empty()) {
      // Halving schedule, coarsest level first.
      const long long iters = cfg_ll(cfg, "train.iters");
      tc.iters_per_level.clear();
      for (int i = 0; i < tc.levels; ++i)
        tc.iters_per_level.push_back(std::max(1LL, iters >> i));
    } else {
      tc.iters_per_level = cfg_ll_list(cfg, "train.schedule");
    }
  } else {
    tc.iters_per_level = {cfg_ll(cfg, "train.iters")};
  }
  try {
    tc.validate();
  } catch (const std::exception& e) {
    throw CliError{2, e.what()};
  }
  return tc;
}

mge::Task build_task(const ConfigMap& cfg) {
  mge::TaskKind kind;
  try {
    kind = mge::parse_task_kind(cfg_str(cfg, "task.kind"));
  } catch (const std::exception& e) {
    throw CliError{2, e.what()};
  }
  const int n_train = cfg_int(cfg, "task.train_images");
  const int n_eval = cfg_int(cfg, "task.eval_images");
  const int size = cfg_int(cfg, "task.size");
  mge::Rng rng = mge::Rng::derive(static_cast<std::uint64_t>(cfg_ll(cfg, "seed")), 2);
  if (kind == mge::TaskKind::denoise) return mge::gen_denoise(n_train, n_eval, size, rng);
  return mge::gen_deblur(n_train, n_eval, size, rng, cfg_double(cfg, "task.sigma"),
                         cfg_double(cfg, "task.eps"));
}

mge::Model build_model(const ConfigMap& cfg, int in_channels, int out_channels) {
  mge::ModelKind kind;
  try {
    kind = mge::parse_model_kind(cfg_str(cfg, "model.kind"));
  } catch (const std::exception& e) {
    throw CliError{2, e.what()};
  }
  mge::ModelConfig mc = mge::default_model_config(kind, in_channels, out_channels);
  const std::string channels = cfg_str(cfg, "model.channels");
  if (!channels.empty()) {
    mc.channels = cfg_int_list(cfg, "model.channels");
    if (mc.channels.size() < 2 || mc.channels.front() != in_channels ||
        mc.channels.back() != out_channels)
      throw CliError{2, "model.channels must run from " + std::to_string(in_channels) +
                            " input channels to " + std::to_string(out_channels) + " output"};
  }
  mc.depth = cfg_int(cfg, "model.depth");
  mc.kernel_size = cfg_int(cfg, "model.kernel_size");
  mc.zero_init_final = cfg_bool(cfg, "model.zero_init_final");
  return mge::Model(mc);
}

void write_ledger_csv(const fs::path& path, const mge::WorkUnitLedger& ledger) {
  std::map<int, long long> images_by_level;
  for (const mge::LedgerEntry& e : ledger.entries()) images_by_level[e.level] += e.images;
  std::vector<std::vector<std::string>> rows;
  for (const auto& [level, images] : images_by_level) {
    const mge::Rational wu = mge::Rational(images) * mge::level_weight(level);
    rows.push_back({std::to_string(level), std::to_string(images), wu.num().str(),
                    wu.den().str()});
  }
  mge::emit_csv(path.string(), {"level", "images", "wu_numerator", "wu_denominator"}, rows);
}

int cmd_train(const ConfigMap& cfg, const std::string& out_dir, bool force, bool dry_run,
              bool timing) {
  mge::TrainConfig tc = build_train_config(cfg);
  std::vector<std::string> comments;
  if (dry_run) comments.push_back("flags: --dry-run");
  if (timing) comments.push_back("flags: --timing");

  if (dry_run) {
    const mge::WorkUnitLedger ledger = mge::dry_run_ledger(tc);
    const fs::path dir = prepare_out_dir(out_dir, "train", force, {"ledger.csv"});
    write_effective_config(dir, "train", cfg, comments);
    write_ledger_csv(dir / "ledger.csv", ledger);
    std::printf("dry run: no training performed\n");
    std::printf("work units: %s (%.6g)\n", ledger.total().str().c_str(),
                ledger.total().to_double());
    std::printf("artifacts: %s\n", dir.string().c_str());
    return 0;
  }

  mge::Task task = build_task(cfg);
  mge::Model model = build_model(cfg, task.in_channels, task.image_channels);
  mge::TrainHistory history = mge::train(tc, task, model);

  const std::vector<std::string> artifacts = {"history.csv", "ledger.csv", "checkpoint.bin"};
  const fs::path dir = prepare_out_dir(out_dir, "train", force, artifacts);
  write_effective_config(dir, "train", cfg, comments);

  std::vector<std::vector<std::string>> rows;
  for (const mge::EvalRecord& rec : history.evals) {
    rows.push_back({std::to_string(rec.step), std::to_string(rec.level),
                    mge::fmt_double(rec.train_loss), mge::fmt_double(rec.metric),
                    rec.wu.num().str(), rec.wu.den().str(),
                    timing ? mge::fmt_double(rec.seconds) : "0"});
  }
  mge::emit_csv((dir / "history.csv").string(),
                {"step", "level", "loss", "metric", "wu_num", "wu_den", "seconds"}, rows);
  write_ledger_csv(dir / "ledger.csv", history.ledger);
  mge::save_checkpoint((dir / "checkpoint.bin").string(), history.final_params);

  const mge::EvalRecord& last = history.evals.back();
  std::printf("steps: %lld\n", static_cast<long long>(history.steps.size()));
  std::printf("work units: %s (%.6g)\n", history.ledger.total().str().c_str(),
              history.ledger.total().to_double());
  std::printf("final %s: %.8g\n", mge::metric_name(tc.metric).c_str(), last.metric);
  std::printf("final train loss: %.8g\n", last.train_loss);
  std::printf("wall seconds: %.3f\n", history.total_seconds);
  std::printf("artifacts: %s\n", dir.string().c_str());
  return 0;
}

// ---- verify ----

int cmd_verify(const std::string& suites_arg, const std::string& out_dir, bool force,
               const ConfigMap& cfg) {
  std::vector<std::string> names;
  if (suites_arg.empty()) {
    names = mge::all_suite_names();
  } else {
    std::stringstream ss(suites_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) names.push_back(item);
    }
    if (names.empty()) throw CliError{2, "--suite: no suite names given"};
  }
  std::vector<mge::SuiteResult> results;
  try {
    results = mge::run_suites(names);
  } catch (const std::invalid_argument& e) {
    throw CliError{2, e.what()};
  }

  const fs::path dir = prepare_out_dir(out_dir, "verify", force, {});
  write_effective_config(dir, "verify", cfg, {"suites: " + suites_arg});

  int failures = 0;
  for (const mge::SuiteResult& suite : results) {
    for (const mge::CheckResult& check : suite.checks) {
      std::printf("[%s] %s/%s: %s\n", check.passed ? "PASS" : "FAIL", suite.suite.c_str(),
                  check.name.c_str(), check.detail.c_str());
      if (!check.passed) failures += 1;
    }
    std::printf("suite %s: %s (%zu checks)\n", suite.suite.c_str(),
                suite.passed() ? "PASS" : "FAIL", suite.checks.size());
  }
  if (failures > 0) {
    std::printf("%d check(s) failed\n", failures);
    return 1;
  }
  std::printf("all suites passed\n");
  return 0;
}

// ---- experiment ----

int cmd_experiment(const std::string& name, const ConfigMap& cfg, const std::string& out_dir,
                   bool force) {
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg_ll(cfg, "seed"));
  if (name == "example1") {
    const int n = cfg_int(cfg, "example1.n");
    const int levels = cfg_int(cfg, "example1.levels");
    const std::vector<double> sigmas = cfg_double_list(cfg, "example1.sigmas");
    mge::Rng rng = mge::Rng::derive(seed, 3);
    mge::Example1Result result;
    try {
      result = mge::example1(n, sigmas, levels, rng);
    } catch (const std::invalid_argument& e) {
      throw CliError{2, e.what()};
    }
    const fs::path dir = prepare_out_dir(out_dir, "example1", force, {"example1.csv"});
    write_effective_config(dir, "experiment example1", cfg, {});
    std::vector<std::vector<std::string>> rows;
    for (const mge::Example1Row& row : result.rows) {
      rows.push_back({mge::fmt_double(row.sigma),
                      std::to_string(row.fine_level) + "-" + std::to_string(row.fine_level + 1),
                      mge::fmt_double(row.delta_g), mge::fmt_double(row.oracle_delta_g)});
    }
    mge::emit_csv((dir / "example1.csv").string(),
                  {"sigma", "level_pair", "delta_g", "oracle_delta_g"}, rows);
    std::printf("rows: %zu\n", rows.size());
    std::printf("worst autodiff/oracle gap: %.3g\n", result.oracle_max_abs_diff);
    std::printf("artifacts: %s\n", dir.string().c_str());
    return 0;
  }
  if (name == "coarsen_crop") {
    mge::CoarsenCropConfig cc;
    try {
      cc.data = mge::parse_data_source(cfg_str(cfg, "coarsen_crop.data"));
      cc.model = mge::parse_model_kind(cfg_str(cfg, "model.kind"));
    } catch (const std::exception& e) {
      throw CliError{2, e.what()};
    }
    cc.sizes = cfg_int_list(cfg, "coarsen_crop.sizes");
    cc.images = cfg_int(cfg, "coarsen_crop.images");
    cc.crop_fraction = cfg_double(cfg, "coarsen_crop.crop_fraction");
    cc.crop_repeats = cfg_int(cfg, "coarsen_crop.repeats");
    cc.seed = seed;
    std::vector<mge::CoarsenCropRow> rows;
    try {
      rows = mge::coarsen_vs_crop(cc);
    } catch (const std::invalid_argument& e) {
      throw CliError{2, e.what()};
    }
    const fs::path dir = prepare_out_dir(out_dir, "coarsen_crop", force, {"coarsen_crop.csv"});
    write_effective_config(dir, "experiment coarsen_crop", cfg, {});
    std::vector<std::vector<std::string>> csv;
    for (const mge::CoarsenCropRow& row : rows)
      csv.push_back({mge::fmt_double(row.h), mge::fmt_double(row.r_coarsen),
                     mge::fmt_double(row.r_crop), std::to_string(row.n_samples)});
    mge::emit_csv((dir / "coarsen_crop.csv").string(),
                  {"h", "r_coarsen", "r_crop", "n_samples"}, csv);
    for (const mge::CoarsenCropRow& row : rows)
      std::printf("h=%g: coarsening residual %.6g, cropping residual %.6g\n", row.h,
                  row.r_coarsen, row.r_crop);
    std::printf("artifacts: %s\n", dir.string().c_str());
    return 0;
  }
  if (name == "variance") {
    mge::VarianceConfig vc;
    try {
      vc.data = mge::parse_data_source(cfg_str(cfg, "variance.data"));
      vc.model = mge::parse_model_kind(cfg_str(cfg, "model.kind"));
    } catch (const std::exception& e) {
      throw CliError{2, e.what()};
    }
    vc.size = cfg_int(cfg, "variance.size");
    vc.images = cfg_int(cfg, "variance.images");
    vc.levels = cfg_int(cfg, "variance.levels");
    vc.n1 = cfg_ll(cfg, "variance.n1");
    vc.batch_small = cfg_ll(cfg, "variance.batch");
    vc.repeats = cfg_int(cfg, "variance.repeats");
    vc.seed = seed;
    mge::VarianceResult result;
    try {
      result = mge::variance_experiment(vc);
    } catch (const std::invalid_argument& e) {
      throw CliError{2, e.what()};
    }
    const fs::path dir = prepare_out_dir(out_dir, "variance", force, {"variance.csv"});
    write_effective_config(dir, "experiment variance", cfg, {});
    std::vector<std::vector<std::string>> csv;
    auto add_rows = [&csv](const std::string& section,
                           const std::vector<mge::TermVariance>& terms) {
      for (const mge::TermVariance& t : terms)
        csv.push_back({section, t.is_base ? "base" : "diff", std::to_string(t.level_fine),
                       std::to_string(t.level_coarse), std::to_string(t.batch),
                       mge::fmt_double(t.variance)});
    };
    add_rows("telescoped", result.per_term);
    add_rows("equal_batch", result.equal_batch);
    csv.push_back({"batch_mean", "base", "1", "1", std::to_string(vc.batch_small),
                   mge::fmt_double(result.var_small)});
    csv.push_back({"batch_mean", "base", "1", "1", std::to_string(4 * vc.batch_small),
                   mge::fmt_double(result.var_large)});
    mge::emit_csv((dir / "variance.csv").string(),
                  {"section", "term", "level_fine", "level_coarse", "batch", "variance"}, csv);
    std::printf("batch-mean variance ratio (N vs 4N): %.4g\n", result.ratio);
    std::printf("artifacts: %s\n", dir.string().c_str());
    return 0;
  }
  throw CliError{2, "unknown experiment '" + name + "' (example1, coarsen_crop, variance)"};
}

struct FlagBinding {
  CLI::Option* opt = nullptr;
  std::string key;
  std::string* value = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale gradient estimation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suites;
  bool force = false, dry_run = false, timing = false;

  // Shared flag storage; each subcommand binds the subset it understands.
  std::string v_seed, v_strategy, v_levels, v_n1, v_iters, v_schedule, v_task, v_size,
      v_model, v_optimizer, v_lr, v_sigmas, v_sizes, v_repeats, v_crop_fraction, v_images,
      v_train_images, v_eval_images, v_eval_every, v_metric, v_lr_schedule, v_channels,
      v_data;

  CLI::App* train = app.add_subcommand("train", "Run one training strategy end to end");
  CLI::App* verify = app.add_subcommand("verify", "Run the verification suites");
  CLI::App* experiment = app.add_subcommand("experiment", "Run an analysis experiment");
  std::string experiment_name;
  experiment->add_option("name", experiment_name, "example1, coarsen_crop, or variance")
      ->required();

  for (CLI::App* sub : {train, verify, experiment}) {
    sub->add_option("--config", config_path, "flat key = value configuration file");
    sub->add_option("--out", out_dir, "output directory (default: runs/<cmd>-<timestamp>)");
    sub->add_flag("--force", force, "overwrite existing artifacts");
  }

  std::vector<FlagBinding> bindings;
  auto bind = [&bindings](CLI::App* sub, const std::string& flag, std::string& var,
                          const std::string& key, const std::string& help) {
    bindings.push_back({sub->add_option(flag, var, help), key, &var});
  };

  for (CLI::App* sub : {train, verify, experiment})
    bind(sub, "--seed", v_seed, "seed", "run seed");

  bind(train, "--strategy", v_strategy, "train.strategy",
       "single, multiscale, or full_multiscale");
  bind(train, "--levels", v_levels, "mge.levels", "mesh levels");
  bind(train, "--n1", v_n1, "mge.n1", "finest-level batch size");
  bind(train, "--iters", v_iters, "train.iters", "optimizer steps");
  bind(train, "--schedule", v_schedule, "train.schedule",
       "coarse-to-fine iteration counts, coarsest first (comma separated)");
  bind(train, "--task", v_task, "task.kind", "denoise or deblur");
  bind(train, "--size", v_size, "task.size", "finest image size");
  bind(train, "--model", v_model, "model.kind", "convstack, resnet, or unet");
  bind(train, "--optimizer", v_optimizer, "train.optimizer", "sgd or adam");
  bind(train, "--lr", v_lr, "train.lr", "base learning rate");
  bind(train, "--lr-schedule", v_lr_schedule, "train.lr_schedule", "constant or cosine");
  bind(train, "--metric", v_metric, "train.metric", "mse or ssim");
  bind(train, "--eval-every", v_eval_every, "train.eval_every", "evaluation cadence");
  bind(train, "--train-images", v_train_images, "task.train_images", "training set size");
  bind(train, "--eval-images", v_eval_images, "task.eval_images", "evaluation set size");
  bind(train, "--channels", v_channels, "model.channels",
       "channel widths incl. input and output (comma separated)");
  train->add_flag("--dry-run", dry_run, "charge the ledger without training");
  train->add_flag("--timing", timing,
                  "record wall seconds in history.csv (off by default: timing breaks "
                  "byte-identical outputs)");

  verify->add_option("--suite", suites, "subset of suites (comma separated): grad, collapse, unbias, wu");

  bind(experiment, "--levels", v_levels, "example1.levels", "mesh levels (example1)");
  bind(experiment, "--sigmas", v_sigmas, "example1.sigmas",
       "noise scales (comma separated, example1)");
  bind(experiment, "--sizes", v_sizes, "coarsen_crop.sizes",
       "image sizes (comma separated, coarsen_crop)");
  bind(experiment, "--crop-fraction", v_crop_fraction, "coarsen_crop.crop_fraction",
       "crop area fraction (coarsen_crop)");
  bind(experiment, "--images", v_images, "coarsen_crop.images", "images per cell");
  bind(experiment, "--repeats", v_repeats, "", "redraw count (coarsen_crop, variance)");
  bind(experiment, "--data", v_data, "coarsen_crop.data",
       "images the gradients are probed on: smooth, denoise, or deblur");
  bind(experiment, "--model", v_model, "model.kind", "convstack, resnet, or unet");
  bind(experiment, "--size", v_size, "variance.size", "image size (variance)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    ConfigMap cfg = defaults();
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const FlagBinding& b : bindings) {
      if (b.opt->count() == 0) continue;
      std::string key = b.key;
      if (key.empty()) {
        // --repeats routes to the selected experiment.
        key = experiment_name == "variance" ? "variance.repeats" : "coarsen_crop.repeats";
      }
      if (experiment_name == "variance" && key == "coarsen_crop.images")
        key = "variance.images";
      if (experiment_name == "variance" && key == "coarsen_crop.data")
        key = "variance.data";
      cfg[key] = *b.value;
    }

    if (train->parsed()) return cmd_train(cfg, out_dir, force, dry_run, timing);
    if (verify->parsed()) return cmd_verify(suites, out_dir, force, cfg);
    return cmd_experiment(experiment_name, cfg, out_dir, force);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

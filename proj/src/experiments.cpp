#include "mge/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mge/tape.hpp"

namespace mge {

std::vector<double> conv_loss_oracle_grad(const std::vector<double>& u,
                                          const std::vector<double>& y) {
  if (u.size() != y.size())
    throw std::invalid_argument("conv_loss_oracle_grad: u and y lengths differ");
  const int n = static_cast<int>(u.size());
  if (n < 3) throw std::invalid_argument("conv_loss_oracle_grad: need at least 3 samples");
  std::vector<double> g(3, 0.0);
  for (int k = 0; k < 3; ++k) {
    double s = 0.0;
    for (int t = 0; t < n; ++t) {
      const int idx = t + k - 1;
      if (idx >= 0 && idx < n) s += u[static_cast<std::size_t>(idx)] * y[static_cast<std::size_t>(t)];
    }
    g[static_cast<std::size_t>(k)] = s / static_cast<double>(n);
  }
  return g;
}

std::vector<double> conv_loss_autodiff_grad(const std::vector<double>& u,
                                            const std::vector<double>& y,
                                            const std::vector<double>& theta) {
  if (u.size() != y.size())
    throw std::invalid_argument("conv_loss_autodiff_grad: u and y lengths differ");
  if (theta.size() != 3)
    throw std::invalid_argument("conv_loss_autodiff_grad: theta must have 3 taps");
  const int n = static_cast<int>(u.size());
  Tensor ut({n}), yt({n}), th({3});
  ut.data = u;
  yt.data = y;
  th.data = theta;
  Params params;
  params.add("theta", th);
  Tape tape;
  auto nodes = tape.add_params(params);
  Tape::NodeId conv = tape.conv1d(tape.leaf(ut), nodes.at("theta"));
  Tape::NodeId loss =
      tape.scale(tape.sum(tape.mul(conv, tape.leaf(yt))), 1.0 / static_cast<double>(n));
  Params grads = tape.backward(loss, params);
  return grads.at("theta").data;
}

namespace {

double norm2_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Smooth 1-D signal: three random low-frequency sinusoids on [0,1].
std::vector<double> smooth_signal(int n, Rng& rng) {
  struct Wave {
    double amp, freq, phase;
  };
  std::vector<Wave> waves(3);
  for (Wave& w : waves) {
    w.amp = rng.uniform(0.5, 1.0);
    w.freq = static_cast<double>(1 + rng.uniform_int(4));
    w.phase = rng.uniform(0.0, 6.283185307179586);
  }
  std::vector<double> s(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const double x = (t + 0.5) / static_cast<double>(n);
    double v = 0.0;
    for (const Wave& w : waves) v += w.amp * std::sin(6.283185307179586 * w.freq * x + w.phase);
    s[static_cast<std::size_t>(t)] = v;
  }
  return s;
}

std::vector<double> restrict_signal(const std::vector<double>& s, int levels) {
  Tensor t({static_cast<int>(s.size())});
  t.data = s;
  return restrict1d(t, levels).data;
}

}  // namespace

Example1Result example1(int n, const std::vector<double>& sigmas, int levels, Rng& rng) {
  if (levels < 2) throw std::invalid_argument("example1: need at least 2 levels");
  if (n % (1 << levels) != 0)
    throw std::invalid_argument("example1: n must be divisible by 2^levels");
  if ((n >> (levels - 1)) < 3)
    throw std::invalid_argument("example1: coarsest signal shorter than the kernel");
  if (sigmas.empty()) throw std::invalid_argument("example1: no sigmas given");
  for (double s : sigmas)
    if (s < 0.0) throw std::invalid_argument("example1: sigma must be nonnegative");

  const std::vector<double> u0 = smooth_signal(n, rng);
  const std::vector<double> y0 = smooth_signal(n, rng);
  std::vector<double> z(static_cast<std::size_t>(n));
  for (double& v : z) v = rng.normal();
  std::vector<double> theta(3);
  for (double& v : theta) v = rng.uniform(-1.0, 1.0);

  Example1Result result;
  for (double sigma : sigmas) {
    std::vector<double> u = u0;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += sigma * z[i];
    std::vector<std::vector<double>> g_auto(static_cast<std::size_t>(levels));
    std::vector<std::vector<double>> g_oracle(static_cast<std::size_t>(levels));
    for (int j = 1; j <= levels; ++j) {
      const std::vector<double> uj = restrict_signal(u, j - 1);
      const std::vector<double> yj = restrict_signal(y0, j - 1);
      g_auto[static_cast<std::size_t>(j - 1)] = conv_loss_autodiff_grad(uj, yj, theta);
      g_oracle[static_cast<std::size_t>(j - 1)] = conv_loss_oracle_grad(uj, yj);
      for (int k = 0; k < 3; ++k)
        result.oracle_max_abs_diff = std::max(
            result.oracle_max_abs_diff,
            std::abs(g_auto[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(k)] -
                     g_oracle[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(k)]));
    }
    for (int j = 1; j < levels; ++j) {
      Example1Row row;
      row.sigma = sigma;
      row.fine_level = j;
      row.delta_g = norm2_diff(g_auto[static_cast<std::size_t>(j - 1)],
                               g_auto[static_cast<std::size_t>(j)]);
      row.oracle_delta_g = norm2_diff(g_oracle[static_cast<std::size_t>(j - 1)],
                                      g_oracle[static_cast<std::size_t>(j)]);
      result.rows.push_back(row);
    }
  }
  return result;
}

DataSource parse_data_source(const std::string& name) {
  if (name == "smooth") return DataSource::smooth;
  if (name == "denoise") return DataSource::denoise;
  if (name == "deblur") return DataSource::deblur;
  throw std::invalid_argument("unknown data source '" + name + "' (smooth, denoise, deblur)");
}

std::string data_source_name(DataSource d) {
  switch (d) {
    case DataSource::smooth: return "smooth";
    case DataSource::denoise: return "denoise";
    default: return "deblur";
  }
}

namespace {

struct StudyData {
  Dataset pairs;
  int in_channels = 1;
  int out_channels = 1;
};

StudyData make_study_data(DataSource source, int n_images, int size, Rng& rng) {
  StudyData d;
  if (source == DataSource::smooth) {
    d.pairs = make_smooth_dataset(n_images, size, 1, 1, rng);
    return d;
  }
  Task task = source == DataSource::denoise ? gen_denoise(n_images, 1, size, rng)
                                            : gen_deblur(n_images, 1, size, rng);
  d.pairs = std::move(task.train);
  d.in_channels = task.in_channels;
  d.out_channels = task.image_channels;
  return d;
}

// Per-sample flattened parameter gradient of the mean-squared loss.
SampleGrad make_sample_grad(const Model& model, const Params& params) {
  return [&model, &params](const Tensor& input, const Tensor& target) {
    Tape tape;
    auto nodes = tape.add_params(params);
    Tensor x = stack_batch({&input});
    Tensor t = stack_batch({&target});
    Tape::NodeId pred = model.forward(tape, nodes, tape.leaf(x));
    Tape::NodeId loss = tape.mse_loss(pred, tape.leaf(t));
    return flatten(tape.backward(loss, params));
  };
}

void check_pair_sizes(const std::vector<int>& sizes, int& finest) {
  if (sizes.empty()) throw std::invalid_argument("size list is empty");
  finest = *std::max_element(sizes.begin(), sizes.end());
  for (int s : sizes) {
    if (s < 2) throw std::invalid_argument("size " + std::to_string(s) + " is too small");
    const int ratio = finest / s;
    if (s * ratio != finest || (ratio & (ratio - 1)) != 0)
      throw std::invalid_argument("size " + std::to_string(s) +
                                  " is not the finest size over a power of two");
  }
}

int level_of(int finest, int size) {
  int lvl = 1, r = finest / size;
  while (r > 1) {
    r >>= 1;
    lvl += 1;
  }
  return lvl;
}

}  // namespace

DecayResult grad_decay(const DecayConfig& cfg) {
  int finest = 0;
  check_pair_sizes(cfg.sizes, finest);
  if (cfg.images < 1) throw std::invalid_argument("grad_decay: need at least one image");
  Rng data_rng = Rng::derive(cfg.seed, 11);
  StudyData data = make_study_data(cfg.data, cfg.images, finest, data_rng);
  ModelConfig mc = default_model_config(cfg.model, data.in_channels, data.out_channels);
  mc.zero_init_final = false;
  Model model(mc);
  Rng init_rng = Rng::derive(cfg.seed, 12);
  Params params = model.init_params(init_rng);
  SampleGrad grad_at = make_sample_grad(model, params);

  std::vector<const Tensor*> inputs, targets;
  for (int i = 0; i < data.pairs.size(); ++i) {
    inputs.push_back(&data.pairs.inputs[static_cast<std::size_t>(i)]);
    targets.push_back(&data.pairs.targets[static_cast<std::size_t>(i)]);
  }

  DecayResult result;
  for (int s : cfg.sizes) {
    const int lvl = level_of(finest, s);
    model.check_spatial(s / 2, s / 2);
    GradResidual gr = grad_residual(grad_at, inputs, targets, lvl, lvl + 1);
    double mean = 0.0;
    for (double v : gr.per_sample) mean += v;
    mean /= static_cast<double>(gr.per_sample.size());
    result.h.push_back(static_cast<double>(finest / s));
    result.residual.push_back(mean);
  }
  result.fit = fit_rnorm(result.h, result.residual);
  return result;
}

namespace {

// [C,H,W] channel-stack of input and target so one crop draw moves both.
Tensor fuse_channels(const Tensor& a, const Tensor& b) {
  Tensor out({a.shape[0] + b.shape[0], a.shape[1], a.shape[2]});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

void split_channels(const Tensor& fused, int c_first, Tensor& a, Tensor& b) {
  const int C = fused.shape[0], H = fused.shape[1], W = fused.shape[2];
  a = Tensor({c_first, H, W});
  b = Tensor({C - c_first, H, W});
  const std::size_t cut = static_cast<std::size_t>(c_first) * H * W;
  std::copy(fused.data.begin(), fused.data.begin() + static_cast<std::ptrdiff_t>(cut), a.data.begin());
  std::copy(fused.data.begin() + static_cast<std::ptrdiff_t>(cut), fused.data.end(), b.data.begin());
}

std::vector<double> mean_grad(const SampleGrad& grad_at, const std::vector<Tensor>& xs,
                              const std::vector<Tensor>& ts) {
  std::vector<double> acc;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> g = grad_at(xs[i], ts[i]);
    if (acc.empty()) acc.assign(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
  }
  for (double& v : acc) v /= static_cast<double>(xs.size());
  return acc;
}

}  // namespace

std::vector<CoarsenCropRow> coarsen_vs_crop(const CoarsenCropConfig& cfg) {
  int finest = 0;
  check_pair_sizes(cfg.sizes, finest);
  if (cfg.images < 1) throw std::invalid_argument("coarsen_vs_crop: need at least one image");
  if (!(cfg.crop_fraction > 0.0) || cfg.crop_fraction > 1.0)
    throw std::invalid_argument("coarsen_vs_crop: crop_fraction must be in (0, 1]");
  if (cfg.crop_repeats < 1)
    throw std::invalid_argument("coarsen_vs_crop: need at least one crop draw");

  Rng data_rng = Rng::derive(cfg.seed, 21);
  StudyData data = make_study_data(cfg.data, cfg.images, finest, data_rng);
  ModelConfig mc = default_model_config(cfg.model, data.in_channels, data.out_channels);
  mc.zero_init_final = false;
  Model model(mc);
  Rng init_rng = Rng::derive(cfg.seed, 22);
  Params params = model.init_params(init_rng);
  SampleGrad grad_at = make_sample_grad(model, params);
  Rng crop_rng = Rng::derive(cfg.seed, 23);

  std::vector<const Tensor*> inputs, targets;
  for (int i = 0; i < data.pairs.size(); ++i) {
    inputs.push_back(&data.pairs.inputs[static_cast<std::size_t>(i)]);
    targets.push_back(&data.pairs.targets[static_cast<std::size_t>(i)]);
  }

  std::vector<CoarsenCropRow> rows;
  for (int s : cfg.sizes) {
    const int lvl = level_of(finest, s);
    model.check_spatial(s / 2, s / 2);
    CoarsenCropRow row;
    row.h = static_cast<double>(finest / s);
    row.n_samples = cfg.images;
    row.r_coarsen = grad_residual(grad_at, inputs, targets, lvl, lvl + 1).mean_diff_norm;

    std::vector<Tensor> xs, ts;
    for (int i = 0; i < cfg.images; ++i) {
      xs.push_back(restrict2d(*inputs[static_cast<std::size_t>(i)], lvl - 1));
      ts.push_back(restrict2d(*targets[static_cast<std::size_t>(i)], lvl - 1));
    }
    const std::vector<double> g_full = mean_grad(grad_at, xs, ts);

    int side = static_cast<int>(std::lround(s * std::sqrt(cfg.crop_fraction)));
    side = std::min(std::max(side, 1), s);
    model.check_spatial(side, side);

    std::vector<const Tensor*> fused_ptrs;
    std::vector<Tensor> fused;
    fused.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) fused.push_back(fuse_channels(xs[i], ts[i]));
    for (const Tensor& f : fused) fused_ptrs.push_back(&f);
    const Tensor fused_batch = stack_batch(fused_ptrs);

    double r_crop = 0.0;
    for (int rep = 0; rep < cfg.crop_repeats; ++rep) {
      CropResult cr = crop(fused_batch, side, crop_rng);
      std::vector<Tensor> cx(xs.size()), ct(xs.size());
      const int C = fused_batch.shape[1];
      const std::size_t plane = static_cast<std::size_t>(C) * side * side;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        Tensor one({C, side, side});
        std::copy(cr.patches.data.begin() + static_cast<std::ptrdiff_t>(i * plane),
                  cr.patches.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane),
                  one.data.begin());
        split_channels(one, xs[i].shape[0], cx[i], ct[i]);
      }
      r_crop += norm2_diff(g_full, mean_grad(grad_at, cx, ct));
    }
    row.r_crop = r_crop / static_cast<double>(cfg.crop_repeats);
    rows.push_back(row);
  }
  return rows;
}

VarianceResult variance_experiment(const VarianceConfig& cfg) {
  if (cfg.levels < 1) throw std::invalid_argument("variance_experiment: levels must be >= 1");
  if (cfg.n1 < 1 || cfg.batch_small < 1)
    throw std::invalid_argument("variance_experiment: batches must be >= 1");
  if (cfg.repeats < 2)
    throw std::invalid_argument("variance_experiment: need at least 2 repeats");
  const long long need = std::max((1LL << (cfg.levels - 1)) * cfg.n1, 4 * cfg.batch_small);
  if (cfg.images < need)
    throw std::invalid_argument("variance_experiment: dataset smaller than the largest batch");

  Rng data_rng = Rng::derive(cfg.seed, 31);
  StudyData data = make_study_data(cfg.data, cfg.images, cfg.size, data_rng);
  ModelConfig mc = default_model_config(cfg.model, data.in_channels, data.out_channels);
  mc.zero_init_final = false;
  Model model(mc);
  Rng init_rng = Rng::derive(cfg.seed, 32);
  Params params = model.init_params(init_rng);

  VarianceResult result;
  {
    Rng rng = Rng::derive(cfg.seed, 33);
    LevelPlan plan = plan_batches(cfg.levels, cfg.n1, BatchRule::paper_doubling);
    result.per_term = estimate_term_variance(model, params, data.pairs, plan, cfg.repeats, rng);
  }
  {
    Rng rng = Rng::derive(cfg.seed, 34);
    LevelPlan plan = plan_batches(2, cfg.n1, BatchRule::explicit_sizes, {cfg.n1, cfg.n1});
    result.equal_batch =
        estimate_term_variance(model, params, data.pairs, plan, cfg.repeats, rng);
  }
  {
    Rng rng = Rng::derive(cfg.seed, 35);
    LevelPlan plan = plan_batches(1, cfg.batch_small, BatchRule::explicit_sizes, {cfg.batch_small});
    result.var_small =
        estimate_term_variance(model, params, data.pairs, plan, cfg.repeats, rng)[0].variance;
  }
  {
    Rng rng = Rng::derive(cfg.seed, 36);
    LevelPlan plan =
        plan_batches(1, 4 * cfg.batch_small, BatchRule::explicit_sizes, {4 * cfg.batch_small});
    result.var_large =
        estimate_term_variance(model, params, data.pairs, plan, cfg.repeats, rng)[0].variance;
  }
  if (result.var_large > 0.0) result.ratio = result.var_small / result.var_large;
  return result;
}

}  // namespace mge

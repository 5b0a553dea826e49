#include "mge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mge/tape.hpp"

namespace mge {

void sgd_step(Params& params, const Params& grads, double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd_step: parameter/gradient count mismatch");
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    if (!p.same_shape(g))
      throw std::invalid_argument("sgd_step: shape mismatch for " + name);
    for (std::size_t k = 0; k < p.data.size(); ++k) p.data[k] -= lr * g.data[k];
  }
}

AdamState AdamState::init(const Params& params) {
  AdamState s;
  s.m = Params::zeros_like(params);
  s.v = Params::zeros_like(params);
  s.t = 0;
  return s;
}

void adam_step(Params& params, const Params& grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/state count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: shape mismatch for " + name);
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      m.data[k] = state.beta1 * m.data[k] + (1.0 - state.beta1) * g.data[k];
      v.data[k] = state.beta2 * v.data[k] + (1.0 - state.beta2) * g.data[k] * g.data[k];
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      p.data[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (sgd, adam)");
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown lr schedule '" + name + "' (constant, cosine)");
}

std::string lr_schedule_name(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "cosine";
}

double scheduled_lr(LrSchedule schedule, double lr, long long step, long long total) {
  if (schedule == LrSchedule::constant) return lr;
  if (total <= 0) throw std::invalid_argument("scheduled_lr: total must be positive");
  if (step < 0 || step >= total)
    throw std::invalid_argument("scheduled_lr: step out of range");
  const double pi = 3.14159265358979323846;
  return lr * 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total)));
}

Metric parse_metric(const std::string& name) {
  if (name == "mse") return Metric::mse;
  if (name == "ssim") return Metric::ssim;
  throw std::invalid_argument("unknown metric '" + name + "' (mse, ssim)");
}

std::string metric_name(Metric m) { return m == Metric::mse ? "mse" : "ssim"; }

namespace {

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
std::vector<double> ssim_window() {
  const int r = 5;
  std::vector<double> w(11 * 11);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) {
      const double v = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
      w[(i + r) * 11 + (j + r)] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

double ssim_channel(const double* a, const double* b, int H, int W,
                    const std::vector<double>& win) {
  const int r = 5;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  long long count = 0;
  for (int y = r; y < H - r; ++y) {
    for (int x = r; x < W - r; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int i = -r; i <= r; ++i) {
        const double* ra = a + (y + i) * W + x;
        const double* rb = b + (y + i) * W + x;
        const double* rw = win.data() + (i + r) * 11 + r;
        for (int j = -r; j <= r; ++j) {
          const double wa = ra[j], wb = rb[j], wt = rw[j];
          mu_a += wt * wa;
          mu_b += wt * wb;
          aa += wt * wa * wa;
          bb += wt * wb * wb;
          ab += wt * wa * wb;
        }
      }
      const double va = aa - mu_a * mu_a;
      const double vb = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2);
      acc += num / den;
      count += 1;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || !a.same_shape(b))
    throw std::invalid_argument("ssim: expects two [C,H,W] tensors of equal shape");
  const int C = a.shape[0], H = a.shape[1], W = a.shape[2];
  if (H < 11 || W < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  static const std::vector<double> win = ssim_window();
  double acc = 0.0;
  for (int c = 0; c < C; ++c)
    acc += ssim_channel(a.data.data() + static_cast<std::size_t>(c) * H * W,
                        b.data.data() + static_cast<std::size_t>(c) * H * W, H, W, win);
  return acc / C;
}

namespace {

// Forward a batch of dataset images without recording gradients we care
// about; returns per-image predictions.
std::vector<Tensor> predict_batch(const Model& model, const Params& params,
                                  const Dataset& data, int begin, int end) {
  std::vector<const Tensor*> batch;
  batch.reserve(end - begin);
  for (int i = begin; i < end; ++i) batch.push_back(&data.inputs[i]);
  Tensor x = stack_batch(batch);
  Tape tape;
  auto pnodes = tape.add_params(params);
  Tape::NodeId out = model.forward(tape, pnodes, tape.leaf(x));
  const Tensor& pred = tape.value(out);
  const int N = end - begin;
  const int C = pred.shape[1], H = pred.shape[2], W = pred.shape[3];
  const std::size_t plane = static_cast<std::size_t>(C) * H * W;
  std::vector<Tensor> out_images;
  out_images.reserve(N);
  for (int i = 0; i < N; ++i) {
    Tensor t;
    t.shape = {C, H, W};
    t.data.assign(pred.data.begin() + i * plane, pred.data.begin() + (i + 1) * plane);
    out_images.push_back(std::move(t));
  }
  return out_images;
}

double image_mse(const Tensor& pred, const Tensor& target) {
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.data.size(); ++k) {
    const double d = pred.data[k] - target.data[k];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.data.size());
}

}  // namespace

double evaluate(const Model& model, const Params& params, const Dataset& data,
                Metric metric) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const int chunk = 16;
  double acc = 0.0;
  for (int begin = 0; begin < data.size(); begin += chunk) {
    const int end = std::min(begin + chunk, data.size());
    std::vector<Tensor> preds = predict_batch(model, params, data, begin, end);
    for (int i = 0; i < end - begin; ++i) {
      const Tensor& target = data.targets[begin + i];
      if (!preds[i].same_shape(target))
        throw std::invalid_argument("evaluate: prediction/target shape mismatch");
      acc += metric == Metric::mse ? image_mse(preds[i], target) : ssim(preds[i], target);
    }
  }
  return acc / static_cast<double>(data.size());
}

void TrainConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("train: levels must be >= 1");
  if (levels > 16) throw std::invalid_argument("train: levels must be <= 16");
  if (n1 < 1) throw std::invalid_argument("train: n1 must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
  const std::size_t want = strategy == Strategy::full_multiscale
                               ? static_cast<std::size_t>(levels)
                               : std::size_t{1};
  if (iters_per_level.size() != want) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "train: iters_per_level needs %zu entr%s for this strategy, got %zu",
                  want, want == 1 ? "y" : "ies", iters_per_level.size());
    throw std::invalid_argument(buf);
  }
  for (long long it : iters_per_level)
    if (it < 1) throw std::invalid_argument("train: every iteration count must be >= 1");
}

namespace {

struct Stage {
  int level = 1;         // finest level this stage trains
  long long iters = 0;
  LevelPlan plan;        // telescope levels and batches (single scale: 1 level)
};

// Stage sequence for a config: one stage for single and multiscale, the
// coarsest-first cascade for full multiscale. Charging and training both
// derive from this, so the dry-run ledger matches the real one exactly.
std::vector<Stage> build_stages(const TrainConfig& cfg) {
  std::vector<Stage> stages;
  if (cfg.strategy == Strategy::single) {
    Stage s;
    s.level = 1;
    s.iters = cfg.iters_per_level[0];
    s.plan = plan_batches(1, single_scale_step_images(cfg.levels, cfg.n1),
                          BatchRule::explicit_sizes,
                          {single_scale_step_images(cfg.levels, cfg.n1)});
    stages.push_back(std::move(s));
  } else if (cfg.strategy == Strategy::multiscale) {
    Stage s;
    s.level = 1;
    s.iters = cfg.iters_per_level[0];
    s.plan = plan_batches(cfg.levels, cfg.n1, BatchRule::paper_doubling);
    stages.push_back(std::move(s));
  } else {
    for (int i = 0; i < cfg.levels; ++i) {
      Stage s;
      s.level = cfg.levels - i;  // schedule is coarsest first
      s.iters = cfg.iters_per_level[i];
      s.plan = stage_plan(cfg.levels, cfg.n1, s.level);
      stages.push_back(std::move(s));
    }
  }
  return stages;
}

double subset_finest_loss(const Model& model, const Params& params, const Dataset& data,
                          int count) {
  double acc = 0.0;
  const int chunk = 16;
  for (int begin = 0; begin < count; begin += chunk) {
    const int end = std::min(begin + chunk, count);
    std::vector<Tensor> preds = predict_batch(model, params, data, begin, end);
    for (int i = 0; i < end - begin; ++i) acc += image_mse(preds[i], data.targets[begin + i]);
  }
  return acc / static_cast<double>(count);
}

}  // namespace

TrainHistory train(const TrainConfig& cfg, const Task& task, const Model& model) {
  cfg.validate();
  task.train.validate();
  task.eval_set.validate();
  if (model.in_channels() != task.in_channels)
    throw std::invalid_argument("train: model input channels do not match the task");
  if (model.out_channels() != task.image_channels)
    throw std::invalid_argument("train: model output channels do not match the task");
  const int coarse_factor = 1 << (cfg.levels - 1);
  if (task.size % coarse_factor != 0)
    throw std::invalid_argument(
        "train: image size is not divisible by 2^(levels-1)");
  for (int j = 1; j <= cfg.levels; ++j) {
    const int extent = task.size >> (j - 1);
    try {
      model.check_spatial(extent, extent);
    } catch (const std::exception& e) {
      throw std::invalid_argument("train: level " + std::to_string(j) +
                                  " mesh is unusable: " + e.what());
    }
  }
  long long max_batch = cfg.strategy == Strategy::single
                            ? single_scale_step_images(cfg.levels, cfg.n1)
                            : (1LL << (cfg.levels - 1)) * cfg.n1;
  if (max_batch > task.train.size())
    throw std::invalid_argument("train: training set smaller than the largest batch (" +
                                std::to_string(max_batch) + " needed, " +
                                std::to_string(task.train.size()) + " available)");

  Rng init_rng = Rng::derive(cfg.seed, 0);
  Rng sample_rng = Rng::derive(cfg.seed, 1);
  Params params = model.init_params(init_rng);
  AdamState adam = AdamState::init(params);
  RngSampler sampler(sample_rng, task.train.size());

  TrainHistory history;
  const int eval_count = std::min(32, task.train.size());
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::vector<Stage> stages = build_stages(cfg);
  long long global_step = 0;
  for (const Stage& stage : stages) {
    if (cfg.reset_adam_per_level) adam = AdamState::init(params);
    for (long long it = 0; it < stage.iters; ++it) {
      global_step += 1;
      const double lr_t = scheduled_lr(cfg.lr_schedule, cfg.lr, it, stage.iters);
      GradEstimate est;
      try {
        est = mge_gradient(model, params, task.train, sampler, stage.plan);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at step " + std::to_string(global_step) +
                                 ": " + e.what());
      }
      history.ledger.merge(est.ledger);
      if (cfg.optimizer == Optimizer::sgd)
        sgd_step(params, est.grads, lr_t);
      else
        adam_step(params, est.grads, adam, lr_t);
      history.steps.push_back({global_step, stage.level, est.loss});
      if (it % cfg.eval_every == cfg.eval_every - 1 || it == stage.iters - 1) {
        EvalRecord rec;
        rec.step = global_step;
        rec.level = stage.level;
        rec.train_loss = subset_finest_loss(model, params, task.train, eval_count);
        rec.metric = evaluate(model, params, task.eval_set, cfg.metric);
        rec.wu = history.ledger.total();
        rec.seconds = elapsed();
        history.evals.push_back(rec);
      }
    }
  }
  history.final_params = std::move(params);
  history.total_seconds = elapsed();
  return history;
}

WorkUnitLedger dry_run_ledger(const TrainConfig& cfg) {
  cfg.validate();
  WorkUnitLedger ledger;
  for (const Stage& stage : build_stages(cfg)) {
    const std::vector<LedgerEntry> charges = plan_charges(stage.plan);
    for (long long it = 0; it < stage.iters; ++it)
      for (const LedgerEntry& e : charges) ledger.charge(e.level, e.images);
  }
  return ledger;
}

}  // namespace mge

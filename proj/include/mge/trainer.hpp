#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mge/estimator.hpp"
#include "mge/models.hpp"
#include "mge/tasks.hpp"
#include "mge/workunits.hpp"

namespace mge {

void sgd_step(Params& params, const Params& grads, double lr);

struct AdamState {
  Params m, v;
  long long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  static AdamState init(const Params& params);
};

// Bias-corrected Adam update.
void adam_step(Params& params, const Params& grads, AdamState& state, double lr);

enum class Optimizer { sgd, adam };
Optimizer parse_optimizer(const std::string& name);
std::string optimizer_name(Optimizer o);

enum class LrSchedule { constant, cosine };
LrSchedule parse_lr_schedule(const std::string& name);
std::string lr_schedule_name(LrSchedule s);

// Cosine annealing over one stage: lr * 0.5 * (1 + cos(pi * step/T)),
// step counted from 0; restarts at every stage.
double scheduled_lr(LrSchedule schedule, double lr, long long step, long long total);

enum class Metric { mse, ssim };
Metric parse_metric(const std::string& name);
std::string metric_name(Metric m);

// Mean metric over the evaluation set at the finest mesh.
double evaluate(const Model& model, const Params& params, const Dataset& data,
                Metric metric);

// Mean structural similarity of two [C,H,W] images in [0,1] range, 11x11
// Gaussian window (sigma 1.5), c1 = 0.01^2, c2 = 0.03^2.
double ssim(const Tensor& a, const Tensor& b);

struct TrainConfig {
  Strategy strategy = Strategy::multiscale;
  int levels = 4;
  long long n1 = 16;
  // {iters} for single and multiscale; coarsest-first schedule of length
  // `levels` for full_multiscale.
  std::vector<long long> iters_per_level = {2000};
  Optimizer optimizer = Optimizer::adam;
  double lr = 5e-4;
  LrSchedule lr_schedule = LrSchedule::cosine;
  Metric metric = Metric::mse;
  long long eval_every = 25;
  bool reset_adam_per_level = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepRecord {
  long long step = 0;  // global optimizer step, 1-based
  int level = 1;       // finest level of the active stage
  double loss = 0.0;   // estimator loss at this step
};

struct EvalRecord {
  long long step = 0;
  int level = 1;
  double train_loss = 0.0;  // finest-mesh loss on a fixed train subset
  double metric = 0.0;      // eval-set metric at the finest mesh
  Rational wu;              // cumulative ledger total
  double seconds = 0.0;     // wall time since training started
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  Params final_params;
  WorkUnitLedger ledger;
  double total_seconds = 0.0;
};

// Runs the configured strategy on the task's training set. Coarse-to-fine
// training solves the coarsest stage first and hot-starts each finer stage
// from the previous parameters; every stage restarts the learning-rate
// schedule, and by default the Adam state as well. The ledger charges
// training gradient evaluations only; evaluation passes are free.
TrainHistory train(const TrainConfig& cfg, const Task& task, const Model& model);

// Ledger produced by charging every step of the configured run without
// evaluating any model: same charging path, no arithmetic on tensors.
WorkUnitLedger dry_run_ledger(const TrainConfig& cfg);

}  // namespace mge

#pragma once

#include <string>
#include <vector>

#include "mge/mesh.hpp"
#include "mge/models.hpp"
#include "mge/rng.hpp"
#include "mge/tape.hpp"
#include "mge/tensor.hpp"
#include "mge/workunits.hpp"

namespace mge {

enum class Strategy { single, multiscale, full_multiscale };
Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

enum class BatchRule { paper_doubling, explicit_sizes };

// Batch schedule for a telescopic gradient estimate. Level 1 is the finest
// mesh of the problem; a plan may start coarser (finest_level > 1), which is
// how coarse-to-fine training truncates the telescope at early stages.
struct LevelPlan {
  int num_levels = 1;
  int finest_level = 1;
  std::vector<long long> batch_sizes;  // batch_sizes[i] is for level finest_level+i
  BatchRule rule = BatchRule::paper_doubling;

  int coarsest_level() const { return finest_level + num_levels - 1; }
  long long batch_at(int abs_level) const;
  void validate() const;
};

// Doubling rule: batch 2^(j-1) * n1 at level j. Explicit sizes are taken
// finest first.
LevelPlan plan_batches(int L, long long n1, BatchRule rule,
                       const std::vector<long long>& explicit_sizes = {});

// Coarse-to-fine stage `stage` (1 = finest): telescope over levels stage..L,
// keeping the same global doubling schedule 2^(j-1) * n1 at absolute level j.
LevelPlan stage_plan(int L, long long n1, int stage);

// Ledger charges for one gradient estimate under `plan`: the base term at
// the coarsest level first, then each difference term at its two levels,
// finest pair outward. The estimator produces exactly this sequence.
std::vector<LedgerEntry> plan_charges(const LevelPlan& plan);
Rational plan_step_cost(const LevelPlan& plan);

// Images one plain finest-mesh step consumes to see the same amount of data
// as the L-level telescope: sum_{j=1}^{L} 2^(j-1) * n1 = (2^L - 1) * n1.
long long single_scale_step_images(int L, long long n1);

// Exact total training cost. iters_per_level is {iters} for single and
// multiscale, and the coarsest-first stage schedule (length L) for
// full_multiscale.
Rational closed_form_cost(Strategy strategy, int L, long long n1,
                          const std::vector<long long>& iters_per_level);

// Labeled training pairs at the finest mesh.
struct Dataset {
  std::vector<Tensor> inputs;   // [C_in,H,W]
  std::vector<Tensor> targets;  // [C_out,H,W]
  int size() const { return static_cast<int>(inputs.size()); }
  void validate() const;
};

// Draws dataset indices for each telescopic term. Terms are numbered in
// evaluation order: 0 is the base term, then difference terms finest pair
// outward. Within a term sampling is without replacement; across terms
// draws are independent.
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual std::vector<int> draw(int term_index, int count) = 0;
};

class RngSampler : public Sampler {
 public:
  RngSampler(Rng& rng, int dataset_size) : rng_(&rng), size_(dataset_size) {}
  std::vector<int> draw(int term_index, int count) override;

 private:
  Rng* rng_;
  int size_;
};

// Deterministic full-batch mode: every term sees the entire dataset.
class FullBatchSampler : public Sampler {
 public:
  explicit FullBatchSampler(int dataset_size) : size_(dataset_size) {}
  std::vector<int> draw(int term_index, int count) override;

 private:
  int size_;
};

// Prescribed draws, one id list per term (exhaustive-enumeration oracles).
class FixedSampler : public Sampler {
 public:
  explicit FixedSampler(std::vector<std::vector<int>> per_term)
      : per_term_(std::move(per_term)) {}
  std::vector<int> draw(int term_index, int count) override;

 private:
  std::vector<std::vector<int>> per_term_;
};

struct TelescopicTerm {
  bool is_base = false;
  int level_fine = 1;    // for the base term both levels are the coarsest
  int level_coarse = 1;
  std::vector<int> sample_ids;
};

// Telescopic estimator loss recorded on one tape:
//   loss = l(h_L; base batch) + sum_j [ l(h_{j-1}; batch_j) - l(h_j; batch_j) ]
// with each difference term evaluating the SAME samples at both of its
// resolutions, so backward() yields the telescopic gradient by linearity.
struct MgeLossResult {
  Tape tape;
  Tape::NodeId loss;
  std::vector<TelescopicTerm> terms;
  WorkUnitLedger ledger;
};

MgeLossResult mge_loss(const Model& model, const Params& params, const Dataset& data,
                       Sampler& sampler, const LevelPlan& plan);

struct TermStat {
  bool is_base = false;
  int level_fine = 1, level_coarse = 1;
  long long batch = 0;
  double mean_norm = 0.0;        // norm of the term's batch-mean gradient
  double sample_variance = 0.0;  // within-batch (1/(n-1)) sum ||g_i - gbar||^2
};

struct GradEstimate {
  Params grads;
  double loss = 0.0;
  WorkUnitLedger ledger;
  std::vector<TermStat> term_stats;  // filled only when requested
};

// Computing term_stats re-evaluates every term sample by sample, roughly
// doubling the gradient work; it never consumes extra sampler draws, so the
// estimate itself is unchanged.
GradEstimate mge_gradient(const Model& model, const Params& params, const Dataset& data,
                          Sampler& sampler, const LevelPlan& plan,
                          bool with_term_stats = false);

// Plain mesh-restricted batch gradient: a one-level plan at `level`.
GradEstimate single_scale_gradient(const Model& model, const Params& params,
                                   const Dataset& data, Sampler& sampler, long long n,
                                   int level);

struct TermVariance {
  bool is_base = false;
  int level_fine = 1, level_coarse = 1;
  long long batch = 0;
  double variance = 0.0;  // norm-wise sample variance over repeats
};

// Redraws every term `repeats` times and reports the sample variance of each
// term's gradient: (1/(R-1)) sum_r ||G_r - Gbar||^2.
std::vector<TermVariance> estimate_term_variance(const Model& model, const Params& params,
                                                 const Dataset& data, const LevelPlan& plan,
                                                 int repeats, Rng& rng);

struct ErrorBudget {
  double c_hat = 0.0, B = 0.0, p = 0.0;
  std::vector<double> level_terms;       // base sampling error, then one per diff term
  double total = 0.0;                    // combined error bound
  double equivalent_fine_batch = 0.0;    // two-level equal-accuracy fine batch size
};

// Combined bound: e = C * (1/sqrt(N_L) + B * sum_j h_{j-1}^p / sqrt(N_{j-1}))
// with h_j = h1 * 2^(j-1) relative to the plan's finest mesh, plus the
// two-level equivalent fine batch (1/4) * (1 + 2*B*h1^p)^2 * N_L.
ErrorBudget error_budget(double c_hat, const RnormFit& fit, const LevelPlan& plan,
                         double h1);

}  // namespace mge

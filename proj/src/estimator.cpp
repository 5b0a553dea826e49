#include "mge/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mge {

Strategy parse_strategy(const std::string& name) {
  if (name == "single") return Strategy::single;
  if (name == "multiscale") return Strategy::multiscale;
  if (name == "full_multiscale") return Strategy::full_multiscale;
  throw std::runtime_error("unknown strategy '" + name + "'");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::single: return "single";
    case Strategy::multiscale: return "multiscale";
    case Strategy::full_multiscale: return "full_multiscale";
  }
  throw std::runtime_error("unknown strategy");
}

long long LevelPlan::batch_at(int abs_level) const {
  const int i = abs_level - finest_level;
  if (i < 0 || i >= num_levels)
    throw std::runtime_error("LevelPlan: level " + std::to_string(abs_level) +
                             " outside plan range");
  return batch_sizes[static_cast<std::size_t>(i)];
}

void LevelPlan::validate() const {
  if (num_levels < 1) throw std::runtime_error("LevelPlan: need at least one level");
  if (finest_level < 1) throw std::runtime_error("LevelPlan: finest_level must be >= 1");
  if (static_cast<int>(batch_sizes.size()) != num_levels)
    throw std::runtime_error("LevelPlan: " + std::to_string(batch_sizes.size()) +
                             " batch sizes for " + std::to_string(num_levels) + " levels");
  for (long long b : batch_sizes)
    if (b < 1) throw std::runtime_error("LevelPlan: batch sizes must be positive");
}

LevelPlan plan_batches(int L, long long n1, BatchRule rule,
                       const std::vector<long long>& explicit_sizes) {
  LevelPlan plan;
  plan.num_levels = L;
  plan.finest_level = 1;
  plan.rule = rule;
  if (rule == BatchRule::paper_doubling) {
    if (n1 < 1) throw std::runtime_error("plan_batches: n1 must be positive");
    for (int j = 1; j <= L; ++j) plan.batch_sizes.push_back(n1 << (j - 1));
  } else {
    plan.batch_sizes = explicit_sizes;
  }
  plan.validate();
  return plan;
}

LevelPlan stage_plan(int L, long long n1, int stage) {
  if (stage < 1 || stage > L)
    throw std::runtime_error("stage_plan: stage " + std::to_string(stage) +
                             " outside 1.." + std::to_string(L));
  LevelPlan plan;
  plan.num_levels = L - stage + 1;
  plan.finest_level = stage;
  plan.rule = BatchRule::paper_doubling;
  for (int j = stage; j <= L; ++j) plan.batch_sizes.push_back(n1 << (j - 1));
  plan.validate();
  return plan;
}

std::vector<LedgerEntry> plan_charges(const LevelPlan& plan) {
  plan.validate();
  std::vector<LedgerEntry> charges;
  const int Lc = plan.coarsest_level();
  charges.push_back({Lc, plan.batch_at(Lc)});
  for (int j = plan.finest_level + 1; j <= Lc; ++j) {
    const long long n = plan.batch_at(j - 1);
    charges.push_back({j - 1, n});
    charges.push_back({j, n});
  }
  return charges;
}

Rational plan_step_cost(const LevelPlan& plan) {
  Rational total;
  for (const LedgerEntry& e : plan_charges(plan))
    total += level_weight(e.level) * Rational(e.images);
  return total;
}

long long single_scale_step_images(int L, long long n1) {
  if (L < 1 || n1 < 1)
    throw std::runtime_error("single_scale_step_images: need L >= 1 and n1 >= 1");
  return ((1LL << L) - 1) * n1;
}

Rational closed_form_cost(Strategy strategy, int L, long long n1,
                          const std::vector<long long>& iters_per_level) {
  for (long long it : iters_per_level)
    if (it < 0) throw std::runtime_error("closed_form_cost: negative iteration count");
  switch (strategy) {
    case Strategy::single: {
      if (iters_per_level.size() != 1)
        throw std::runtime_error("closed_form_cost: single takes one iteration count");
      return Rational(single_scale_step_images(L, n1)) * Rational(iters_per_level[0]);
    }
    case Strategy::multiscale: {
      if (iters_per_level.size() != 1)
        throw std::runtime_error("closed_form_cost: multiscale takes one iteration count");
      return plan_step_cost(plan_batches(L, n1, BatchRule::paper_doubling)) *
             Rational(iters_per_level[0]);
    }
    case Strategy::full_multiscale: {
      if (static_cast<int>(iters_per_level.size()) != L)
        throw std::runtime_error("closed_form_cost: full_multiscale needs " +
                                 std::to_string(L) + " coarsest-first iteration counts");
      Rational total;
      for (int i = 0; i < L; ++i) {
        const int stage = L - i;  // schedule runs coarsest first
        total += plan_step_cost(stage_plan(L, n1, stage)) * Rational(iters_per_level[static_cast<std::size_t>(i)]);
      }
      return total;
    }
  }
  throw std::runtime_error("closed_form_cost: unknown strategy");
}

void Dataset::validate() const {
  if (inputs.size() != targets.size())
    throw std::runtime_error("Dataset: " + std::to_string(inputs.size()) + " inputs vs " +
                             std::to_string(targets.size()) + " targets");
  if (inputs.empty()) throw std::runtime_error("Dataset: empty");
  for (const Tensor& t : inputs)
    if (!t.same_shape(inputs[0]))
      throw std::runtime_error("Dataset: inconsistent input shapes");
  for (const Tensor& t : targets)
    if (!t.same_shape(targets[0]))
      throw std::runtime_error("Dataset: inconsistent target shapes");
  if (inputs[0].ndim() != 3 || targets[0].ndim() != 3)
    throw std::runtime_error("Dataset: samples must be [C,H,W]");
  if (inputs[0].dim(1) != targets[0].dim(1) || inputs[0].dim(2) != targets[0].dim(2))
    throw std::runtime_error("Dataset: input extent " + std::to_string(inputs[0].dim(1)) +
                             "x" + std::to_string(inputs[0].dim(2)) +
                             " != target extent " + std::to_string(targets[0].dim(1)) + "x" +
                             std::to_string(targets[0].dim(2)));
}

std::vector<int> RngSampler::draw(int term_index, int count) {
  (void)term_index;
  if (count < 1) throw std::runtime_error("RngSampler: empty batch requested");
  if (count > size_)
    throw std::runtime_error("RngSampler: batch " + std::to_string(count) +
                             " exceeds dataset size " + std::to_string(size_));
  return rng_->sample_without_replacement(size_, count);
}

std::vector<int> FullBatchSampler::draw(int term_index, int count) {
  (void)term_index;
  (void)count;
  std::vector<int> ids(static_cast<std::size_t>(size_));
  for (int i = 0; i < size_; ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

std::vector<int> FixedSampler::draw(int term_index, int count) {
  if (term_index < 0 || term_index >= static_cast<int>(per_term_.size()))
    throw std::runtime_error("FixedSampler: no draw for term " + std::to_string(term_index));
  const auto& ids = per_term_[static_cast<std::size_t>(term_index)];
  if (count >= 0 && static_cast<int>(ids.size()) != count)
    throw std::runtime_error("FixedSampler: term " + std::to_string(term_index) + " has " +
                             std::to_string(ids.size()) + " ids, expected " +
                             std::to_string(count));
  return ids;
}

namespace {

// Mesh extent after restricting to `level`, validating divisibility.
int level_extent(int finest, int level, const char* what) {
  int e = finest;
  for (int l = 1; l < level; ++l) {
    if (e % 2 != 0)
      throw std::runtime_error(std::string("mge_loss: ") + what + " extent " +
                               std::to_string(finest) + " not divisible down to level " +
                               std::to_string(level));
    e /= 2;
  }
  return e;
}

void check_ids(const std::vector<int>& ids, int dataset_size, int term_index) {
  if (ids.empty())
    throw std::runtime_error("mge_loss: empty batch for term " + std::to_string(term_index));
  std::vector<char> seen(static_cast<std::size_t>(dataset_size), 0);
  for (int id : ids) {
    if (id < 0 || id >= dataset_size)
      throw std::runtime_error("mge_loss: sample id " + std::to_string(id) +
                               " outside dataset of size " + std::to_string(dataset_size));
    if (seen[static_cast<std::size_t>(id)])
      throw std::runtime_error("mge_loss: sample id " + std::to_string(id) +
                               " repeated within term " + std::to_string(term_index));
    seen[static_cast<std::size_t>(id)] = 1;
  }
}

// Stacks the selected samples and restricts them to `level`.
std::pair<Tensor, Tensor> gather_at_level(const Dataset& data, const std::vector<int>& ids,
                                          int level) {
  std::vector<const Tensor*> in_ptrs, tg_ptrs;
  in_ptrs.reserve(ids.size());
  tg_ptrs.reserve(ids.size());
  for (int id : ids) {
    in_ptrs.push_back(&data.inputs[static_cast<std::size_t>(id)]);
    tg_ptrs.push_back(&data.targets[static_cast<std::size_t>(id)]);
  }
  Tensor u = restrict2d(stack_batch(in_ptrs), level - 1);
  Tensor y = restrict2d(stack_batch(tg_ptrs), level - 1);
  return {std::move(u), std::move(y)};
}

}  // namespace

MgeLossResult mge_loss(const Model& model, const Params& params, const Dataset& data,
                       Sampler& sampler, const LevelPlan& plan) {
  plan.validate();
  data.validate();
  const int H = data.inputs[0].dim(1), W = data.inputs[0].dim(2);
  const int Lc = plan.coarsest_level();
  const int Hc = level_extent(H, Lc, "height");
  const int Wc = level_extent(W, Lc, "width");
  try {
    model.check_spatial(Hc, Wc);
  } catch (const std::exception& e) {
    throw std::runtime_error("mge_loss: coarsest level " + std::to_string(Lc) +
                             " is too coarse for the model: " + e.what());
  }

  MgeLossResult res;
  const auto pn = res.tape.add_params(params);

  // Base term at the coarsest mesh.
  {
    std::vector<int> ids = sampler.draw(0, static_cast<int>(plan.batch_at(Lc)));
    check_ids(ids, data.size(), 0);
    auto [u, y] = gather_at_level(data, ids, Lc);
    const long long n = static_cast<long long>(ids.size());
    Tape::NodeId pred = model.forward(res.tape, pn, res.tape.leaf(std::move(u)));
    res.loss = res.tape.mse_loss(pred, res.tape.leaf(std::move(y)));
    res.ledger.charge(Lc, n);
    res.terms.push_back({true, Lc, Lc, std::move(ids)});
  }

  // Difference terms, finest pair outward, each term evaluating the same
  // samples at both of its resolutions.
  int term_index = 1;
  for (int j = plan.finest_level + 1; j <= Lc; ++j, ++term_index) {
    std::vector<int> ids =
        sampler.draw(term_index, static_cast<int>(plan.batch_at(j - 1)));
    check_ids(ids, data.size(), term_index);
    const long long n = static_cast<long long>(ids.size());
    auto [uf, yf] = gather_at_level(data, ids, j - 1);
    Tape::NodeId lf = res.tape.mse_loss(
        model.forward(res.tape, pn, res.tape.leaf(std::move(uf))),
        res.tape.leaf(std::move(yf)));
    auto [uc, yc] = gather_at_level(data, ids, j);
    Tape::NodeId lc = res.tape.mse_loss(
        model.forward(res.tape, pn, res.tape.leaf(std::move(uc))),
        res.tape.leaf(std::move(yc)));
    res.loss = res.tape.add(res.loss, res.tape.sub(lf, lc));
    res.ledger.charge(j - 1, n);
    res.ledger.charge(j, n);
    res.terms.push_back({false, j - 1, j, std::move(ids)});
  }
  return res;
}

namespace {

// Gradient of one term evaluated sample by sample; fills mean gradient and
// per-sample deviation. Used for diagnostics only.
void per_sample_term_stats(const Model& model, const Params& params, const Dataset& data,
                           const TelescopicTerm& term, TermStat* stat) {
  const std::size_t n = term.sample_ids.size();
  std::vector<std::vector<double>> grads;
  grads.reserve(n);
  for (int id : term.sample_ids) {
    Tape tape;
    const auto pn = tape.add_params(params);
    const std::vector<int> one{id};
    Tape::NodeId loss;
    if (term.is_base) {
      auto [u, y] = gather_at_level(data, one, term.level_coarse);
      loss = tape.mse_loss(model.forward(tape, pn, tape.leaf(std::move(u))),
                           tape.leaf(std::move(y)));
    } else {
      auto [uf, yf] = gather_at_level(data, one, term.level_fine);
      Tape::NodeId lf = tape.mse_loss(model.forward(tape, pn, tape.leaf(std::move(uf))),
                                      tape.leaf(std::move(yf)));
      auto [uc, yc] = gather_at_level(data, one, term.level_coarse);
      Tape::NodeId lc = tape.mse_loss(model.forward(tape, pn, tape.leaf(std::move(uc))),
                                      tape.leaf(std::move(yc)));
      loss = tape.sub(lf, lc);
    }
    grads.push_back(flatten(tape.backward(loss, params)));
  }
  std::vector<double> mean(grads[0].size(), 0.0);
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
  for (double& v : mean) v /= static_cast<double>(n);
  stat->mean_norm = l2_norm(mean);
  double var = 0.0;
  if (n > 1) {
    for (const auto& g : grads) {
      const double d = l2_distance(g, mean);
      var += d * d;
    }
    var /= static_cast<double>(n - 1);
  }
  stat->sample_variance = var;
}

}  // namespace

GradEstimate mge_gradient(const Model& model, const Params& params, const Dataset& data,
                          Sampler& sampler, const LevelPlan& plan, bool with_term_stats) {
  MgeLossResult lr = mge_loss(model, params, data, sampler, plan);
  GradEstimate est;
  est.loss = lr.tape.scalar_value(lr.loss);
  if (!std::isfinite(est.loss)) throw std::runtime_error("mge_gradient: non-finite loss");
  est.grads = lr.tape.backward(lr.loss, params);
  for (const auto& [name, g] : est.grads)
    if (!all_finite(g.data))
      throw std::runtime_error("mge_gradient: non-finite gradient for '" + name + "'");
  est.ledger = std::move(lr.ledger);
  if (with_term_stats) {
    for (const TelescopicTerm& term : lr.terms) {
      TermStat stat;
      stat.is_base = term.is_base;
      stat.level_fine = term.level_fine;
      stat.level_coarse = term.level_coarse;
      stat.batch = static_cast<long long>(term.sample_ids.size());
      per_sample_term_stats(model, params, data, term, &stat);
      est.term_stats.push_back(stat);
    }
  }
  return est;
}

GradEstimate single_scale_gradient(const Model& model, const Params& params,
                                   const Dataset& data, Sampler& sampler, long long n,
                                   int level) {
  LevelPlan plan;
  plan.num_levels = 1;
  plan.finest_level = level;
  plan.batch_sizes = {n};
  plan.rule = BatchRule::explicit_sizes;
  return mge_gradient(model, params, data, sampler, plan);
}

std::vector<TermVariance> estimate_term_variance(const Model& model, const Params& params,
                                                 const Dataset& data, const LevelPlan& plan,
                                                 int repeats, Rng& rng) {
  if (repeats < 2)
    throw std::runtime_error("estimate_term_variance: need at least 2 repeats");
  plan.validate();
  data.validate();

  const int Lc = plan.coarsest_level();
  std::vector<TermVariance> out;
  std::vector<std::vector<std::vector<double>>> per_term_grads;  // term -> repeat -> grad

  out.push_back({true, Lc, Lc, plan.batch_at(Lc), 0.0});
  for (int j = plan.finest_level + 1; j <= Lc; ++j)
    out.push_back({false, j - 1, j, plan.batch_at(j - 1), 0.0});
  per_term_grads.resize(out.size());

  RngSampler sampler(rng, data.size());
  for (int r = 0; r < repeats; ++r) {
    for (std::size_t t = 0; t < out.size(); ++t) {
      const TermVariance& tv = out[t];
      std::vector<int> ids = sampler.draw(static_cast<int>(t), static_cast<int>(tv.batch));
      Tape tape;
      const auto pn = tape.add_params(params);
      Tape::NodeId loss;
      if (tv.is_base) {
        auto [u, y] = gather_at_level(data, ids, tv.level_coarse);
        loss = tape.mse_loss(model.forward(tape, pn, tape.leaf(std::move(u))),
                             tape.leaf(std::move(y)));
      } else {
        auto [uf, yf] = gather_at_level(data, ids, tv.level_fine);
        Tape::NodeId lf = tape.mse_loss(model.forward(tape, pn, tape.leaf(std::move(uf))),
                                        tape.leaf(std::move(yf)));
        auto [uc, yc] = gather_at_level(data, ids, tv.level_coarse);
        Tape::NodeId lc = tape.mse_loss(model.forward(tape, pn, tape.leaf(std::move(uc))),
                                        tape.leaf(std::move(yc)));
        loss = tape.sub(lf, lc);
      }
      per_term_grads[t].push_back(flatten(tape.backward(loss, params)));
    }
  }

  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto& grads = per_term_grads[t];
    std::vector<double> mean(grads[0].size(), 0.0);
    for (const auto& g : grads)
      for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
    for (double& v : mean) v /= static_cast<double>(repeats);
    double var = 0.0;
    for (const auto& g : grads) {
      const double d = l2_distance(g, mean);
      var += d * d;
    }
    out[t].variance = var / static_cast<double>(repeats - 1);
  }
  return out;
}

ErrorBudget error_budget(double c_hat, const RnormFit& fit, const LevelPlan& plan,
                         double h1) {
  plan.validate();
  if (c_hat < 0.0) throw std::runtime_error("error_budget: c_hat must be non-negative");
  if (fit.B < 0.0) throw std::runtime_error("error_budget: B must be non-negative");
  if (h1 <= 0.0) throw std::runtime_error("error_budget: h1 must be positive");
  ErrorBudget eb;
  eb.c_hat = c_hat;
  eb.B = fit.B;
  eb.p = fit.p;
  const int Lc = plan.coarsest_level();
  const double base =
      c_hat / std::sqrt(static_cast<double>(plan.batch_at(Lc)));
  eb.level_terms.push_back(base);
  eb.total = base;
  for (int j = plan.finest_level + 1; j <= Lc; ++j) {
    const double h_fine = h1 * std::pow(2.0, j - 1 - plan.finest_level);
    const double term = c_hat * fit.B * std::pow(h_fine, fit.p) /
                        std::sqrt(static_cast<double>(plan.batch_at(j - 1)));
    eb.level_terms.push_back(term);
    eb.total += term;
  }
  const double nl = static_cast<double>(plan.batch_at(Lc));
  const double f = 1.0 + 2.0 * fit.B * std::pow(h1, fit.p);
  eb.equivalent_fine_batch = 0.25 * f * f * nl;
  return eb;
}

}  // namespace mge

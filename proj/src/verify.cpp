#include "mge/verify.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <unordered_map>

#include "mge/estimator.hpp"
#include "mge/models.hpp"
#include "mge/tape.hpp"
#include "mge/tasks.hpp"
#include "mge/trainer.hpp"
#include "mge/workunits.hpp"

namespace mge {

bool SuiteResult::passed() const {
  if (checks.empty()) return false;
  for (const CheckResult& c : checks)
    if (!c.passed) return false;
  return true;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// fn returns "" to pass; a non-empty detail or an exception fails the check.
CheckResult run_check(const std::string& name, const std::function<std::string()>& fn) {
  CheckResult r;
  r.name = name;
  try {
    std::string d = fn();
    r.passed = d.empty();
    r.detail = r.passed ? "ok" : d;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = e.what();
  }
  return r;
}

// Random values with magnitude in [0.1, 1]: keeps relu inputs away from the
// kink so the finite-difference probe stays on one side of it.
Tensor rand_tensor(const std::vector<int>& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return t;
}

using LossBuilder = std::function<Tape::NodeId(
    Tape&, const std::unordered_map<std::string, Tape::NodeId>&)>;

// Worst relative gap between reverse-mode and central finite differences,
// denominator floored at 1e-6 to keep near-zero coordinates meaningful.
double max_rel_gap(const Params& params, const LossBuilder& build, double inject) {
  Tape tape;
  auto nodes = tape.add_params(params);
  Params autog = tape.backward(build(tape, nodes), params);
  std::vector<double> a = flatten(autog);
  if (inject != 0.0 && !a.empty()) a[0] += inject;
  Params fd = finite_diff_grad(
      [&build](const Params& p) {
        Tape t;
        auto n = t.add_params(p);
        return t.scalar_value(build(t, n));
      },
      params, 1e-5);
  std::vector<double> f = flatten(fd);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double rel = std::abs(a[i] - f[i]) / std::max(std::abs(f[i]), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

std::string grad_verdict(double gap) {
  if (gap < 1e-5) return "";
  return "max relative gap " + fmt(gap) + " exceeds 1e-5";
}

}  // namespace

SuiteResult run_grad_suite(const VerifyOptions& opts) {
  SuiteResult suite;
  suite.suite = "grad";
  Rng rng(20240517);

  {
    Params p;
    p.add("x", rand_tensor({1, 2, 5, 5}, rng));
    p.add("k", rand_tensor({3, 2, 3, 3}, rng));
    p.add("b", rand_tensor({3}, rng));
    Tensor c = rand_tensor({1, 3, 5, 5}, rng);
    const double inject = opts.inject_grad_error;
    suite.checks.push_back(run_check("conv2d", [&p, c, inject] {
      return grad_verdict(max_rel_gap(
          p,
          [&c](Tape& t, const auto& n) {
            return t.sum(t.mul(t.conv2d(n.at("x"), n.at("k"), n.at("b"), 1), t.leaf(c)));
          },
          inject));
    }));
  }
  {
    Params p;
    p.add("u", rand_tensor({9}, rng));
    p.add("th", rand_tensor({3}, rng));
    Tensor c = rand_tensor({9}, rng);
    suite.checks.push_back(run_check("conv1d", [&p, c] {
      return grad_verdict(max_rel_gap(p, [&c](Tape& t, const auto& n) {
        return t.sum(t.mul(t.conv1d(n.at("u"), n.at("th")), t.leaf(c)));
      }, 0.0));
    }));
  }
  {
    Params p;
    p.add("x", rand_tensor({2, 2, 4, 4}, rng));
    Tensor c = rand_tensor({2, 2, 2, 2}, rng);
    suite.checks.push_back(run_check("avgpool2", [&p, c] {
      return grad_verdict(max_rel_gap(p, [&c](Tape& t, const auto& n) {
        return t.sum(t.mul(t.avgpool2(n.at("x")), t.leaf(c)));
      }, 0.0));
    }));
  }
  {
    Params p;
    p.add("x", rand_tensor({1, 1, 3, 3}, rng));
    Tensor c = rand_tensor({1, 1, 6, 6}, rng);
    suite.checks.push_back(run_check("upsample_nearest2", [&p, c] {
      return grad_verdict(max_rel_gap(p, [&c](Tape& t, const auto& n) {
        return t.sum(t.mul(t.upsample_nearest2(n.at("x")), t.leaf(c)));
      }, 0.0));
    }));
  }
  {
    Params p;
    p.add("x", rand_tensor({1, 2, 4, 4}, rng));
    Tensor c = rand_tensor({1, 2, 4, 4}, rng);
    suite.checks.push_back(run_check("relu", [&p, c] {
      return grad_verdict(max_rel_gap(p, [&c](Tape& t, const auto& n) {
        return t.sum(t.mul(t.relu(n.at("x")), t.leaf(c)));
      }, 0.0));
    }));
  }
  {
    Params p;
    p.add("a", rand_tensor({2, 3}, rng));
    p.add("b", rand_tensor({2, 3}, rng));
    suite.checks.push_back(run_check("add_sub_mul_scale_sum", [&p] {
      return grad_verdict(max_rel_gap(p, [](Tape& t, const auto& n) {
        Tape::NodeId a = n.at("a"), b = n.at("b");
        return t.sum(t.mul(t.add(a, b), t.sub(t.scale(a, 0.7), t.mul(a, b))));
      }, 0.0));
    }));
  }
  {
    Params p;
    p.add("a", rand_tensor({1, 2, 3, 3}, rng));
    p.add("b", rand_tensor({1, 1, 3, 3}, rng));
    Tensor c = rand_tensor({1, 3, 3, 3}, rng);
    suite.checks.push_back(run_check("concat_channels", [&p, c] {
      return grad_verdict(max_rel_gap(p, [&c](Tape& t, const auto& n) {
        return t.sum(t.mul(t.concat_channels(n.at("a"), n.at("b")), t.leaf(c)));
      }, 0.0));
    }));
  }
  {
    Params p;
    p.add("pred", rand_tensor({1, 2, 4, 4}, rng));
    Tensor target = rand_tensor({1, 2, 4, 4}, rng);
    suite.checks.push_back(run_check("mse_loss", [&p, target] {
      return grad_verdict(max_rel_gap(p, [&target](Tape& t, const auto& n) {
        return t.mse_loss(n.at("pred"), t.leaf(target));
      }, 0.0));
    }));
  }

  struct EndToEnd {
    const char* name;
    ModelConfig cfg;
  };
  std::vector<EndToEnd> nets;
  nets.push_back({"convstack_end_to_end", ModelConfig{ModelKind::convstack, {2, 4, 1}}});
  {
    ModelConfig rc{ModelKind::resnet, {1, 6, 1}};
    rc.depth = 1;
    nets.push_back({"resnet_end_to_end", rc});
  }
  nets.push_back({"unet_end_to_end", ModelConfig{ModelKind::unet, {2, 3, 5, 1}}});
  for (EndToEnd& net : nets) {
    net.cfg.zero_init_final = false;
    Model model(net.cfg);
    Rng mrng(77 + static_cast<std::uint64_t>(net.cfg.kind == ModelKind::unet));
    Params p = model.init_params(mrng);
    const int cin = model.in_channels(), cout = model.out_channels();
    Tensor x = rand_tensor({2, cin, 8, 8}, rng);
    Tensor target = rand_tensor({2, cout, 8, 8}, rng);
    suite.checks.push_back(run_check(net.name, [&model, p, x, target] {
      return grad_verdict(max_rel_gap(p, [&model, &x, &target](Tape& t, const auto& n) {
        return t.mse_loss(model.forward(t, n, t.leaf(x)), t.leaf(target));
      }, 0.0));
    }));
  }
  return suite;
}

SuiteResult run_collapse_suite() {
  SuiteResult suite;
  suite.suite = "collapse";
  Rng data_rng(411);
  Dataset data = make_smooth_dataset(5, 32, 2, 1, data_rng);
  for (ModelKind kind : {ModelKind::convstack, ModelKind::resnet, ModelKind::unet}) {
    ModelConfig mc = default_model_config(kind, 2, 1);
    mc.zero_init_final = false;
    Model model(mc);
    Rng init_rng(503);
    Params params = model.init_params(init_rng);
    for (int L = 1; L <= 4; ++L) {
      suite.checks.push_back(
          run_check(model_kind_name(kind) + "_L" + std::to_string(L), [&] {
            FullBatchSampler full(data.size());
            LevelPlan plan = plan_batches(L, 1, BatchRule::paper_doubling);
            MgeLossResult tel = mge_loss(model, params, data, full, plan);
            LevelPlan fine = plan_batches(1, data.size(), BatchRule::explicit_sizes,
                                          {data.size()});
            MgeLossResult ref = mge_loss(model, params, data, full, fine);
            const double gap = std::abs(tel.tape.scalar_value(tel.loss) -
                                        ref.tape.scalar_value(ref.loss));
            return gap <= 1e-12 ? ""
                                : "telescoped loss differs from the fine loss by " + fmt(gap);
          }));
    }
  }
  return suite;
}

SuiteResult run_unbias_suite() {
  SuiteResult suite;
  suite.suite = "unbias";
  Rng data_rng(881);
  Dataset data = make_smooth_dataset(4, 8, 1, 1, data_rng);
  ModelConfig mc{ModelKind::convstack, {1, 4, 1}};
  mc.zero_init_final = false;
  Model model(mc);
  Rng init_rng(883);
  Params params = model.init_params(init_rng);
  LevelPlan plan = plan_batches(2, 1, BatchRule::explicit_sizes, {1, 2});

  suite.checks.push_back(run_check("two_level_enumeration", [&] {
    std::vector<double> mean;
    int combos = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
          FixedSampler sampler({{i, j}, {k}});
          GradEstimate est = mge_gradient(model, params, data, sampler, plan);
          std::vector<double> g = flatten(est.grads);
          if (mean.empty()) mean.assign(g.size(), 0.0);
          for (std::size_t t = 0; t < g.size(); ++t) mean[t] += g[t];
          combos += 1;
        }
    for (double& v : mean) v /= combos;

    FullBatchSampler full(data.size());
    GradEstimate fine = single_scale_gradient(model, params, data, full, data.size(), 1);
    std::vector<double> ref = flatten(fine.grads);
    double worst = 0.0;
    for (std::size_t t = 0; t < ref.size(); ++t)
      worst = std::max(worst, std::abs(mean[t] - ref[t]));
    return worst <= 1e-10
               ? ""
               : "mean over " + std::to_string(combos) +
                     " draws deviates from the fine gradient by " + fmt(worst);
  }));
  return suite;
}

namespace {

std::string expect_eq(const Rational& got, const Rational& want, const std::string& what) {
  if (got == want) return "";
  return what + ": got " + got.str() + ", want " + want.str();
}

}  // namespace

SuiteResult run_wu_suite() {
  SuiteResult suite;
  suite.suite = "wu";

  suite.checks.push_back(run_check("level_weights", [] {
    WorkUnitLedger a;
    a.charge(1, 16);
    std::string d = expect_eq(a.total(), Rational(16), "16 finest images");
    if (!d.empty()) return d;
    WorkUnitLedger b;
    b.charge(3, 16);
    d = expect_eq(b.total(), Rational(1), "16 level-3 images");
    if (!d.empty()) return d;
    WorkUnitLedger c;
    c.charge(2, 1);
    return expect_eq(c.total(), Rational(1, 4), "one level-2 image");
  }));

  suite.checks.push_back(run_check("single_scale_total", [] {
    return expect_eq(closed_form_cost(Strategy::single, 4, 16, {2000}), Rational(480000),
                     "single-scale 4-level run");
  }));
  suite.checks.push_back(run_check("multiscale_total", [] {
    return expect_eq(closed_form_cost(Strategy::multiscale, 4, 16, {2000}), Rational(74000),
                     "telescopic 4-level run");
  }));
  suite.checks.push_back(run_check("coarse_to_fine_halving_total", [] {
    return expect_eq(
        closed_form_cost(Strategy::full_multiscale, 4, 16, {2000, 1000, 500, 250}),
        Rational(28750), "halving schedule");
  }));
  suite.checks.push_back(run_check("coarse_to_fine_equal_total", [] {
    return expect_eq(
        closed_form_cost(Strategy::full_multiscale, 4, 16, {2000, 2000, 2000, 2000}),
        Rational(126000), "equal schedule");
  }));
  suite.checks.push_back(run_check("two_level_step", [] {
    LevelPlan plan = plan_batches(2, 4, BatchRule::explicit_sizes, {4, 16});
    return expect_eq(plan_step_cost(plan), Rational(9), "batches N/4 and N at N = 16");
  }));

  suite.checks.push_back(run_check("ledger_matches_plan", [] {
    Rng rng(997);
    Dataset data = make_smooth_dataset(8, 8, 1, 1, rng);
    ModelConfig mc{ModelKind::convstack, {1, 3, 1}};
    mc.zero_init_final = false;
    Model model(mc);
    Params params = model.init_params(rng);
    LevelPlan plan = plan_batches(2, 1, BatchRule::paper_doubling);
    RngSampler sampler(rng, data.size());
    GradEstimate est = mge_gradient(model, params, data, sampler, plan);
    const std::vector<LedgerEntry> want = plan_charges(plan);
    if (est.ledger.entries().size() != want.size())
      return std::string("entry count differs from the plan");
    for (std::size_t i = 0; i < want.size(); ++i)
      if (est.ledger.entries()[i].level != want[i].level ||
          est.ledger.entries()[i].images != want[i].images)
        return "entry " + std::to_string(i) + " differs from the plan";
    return expect_eq(est.ledger.total(), plan_step_cost(plan), "per-step total");
  }));

  suite.checks.push_back(run_check("dry_run_equals_closed_form", [] {
    TrainConfig a;
    a.strategy = Strategy::single;
    a.levels = 3;
    a.n1 = 2;
    a.iters_per_level = {7};
    std::string d = expect_eq(dry_run_ledger(a).total(),
                              closed_form_cost(Strategy::single, 3, 2, {7}), "single");
    if (!d.empty()) return d;
    TrainConfig b = a;
    b.strategy = Strategy::multiscale;
    d = expect_eq(dry_run_ledger(b).total(),
                  closed_form_cost(Strategy::multiscale, 3, 2, {7}), "telescoped");
    if (!d.empty()) return d;
    TrainConfig c = a;
    c.strategy = Strategy::full_multiscale;
    c.iters_per_level = {4, 2, 1};
    return expect_eq(dry_run_ledger(c).total(),
                     closed_form_cost(Strategy::full_multiscale, 3, 2, {4, 2, 1}),
                     "coarse to fine");
  }));

  suite.checks.push_back(run_check("exact_arithmetic", [] {
    WorkUnitLedger l;
    l.charge(9, 1);
    if (l.total().str() != "1/65536")
      return "deep-level weight printed as " + l.total().str();
    l.charge(9, 65535);
    if (l.total() != Rational(1)) return std::string("65536 deep charges should sum to 1");
    return std::string();
  }));

  return suite;
}

std::vector<std::string> all_suite_names() { return {"grad", "collapse", "unbias", "wu"}; }

std::vector<SuiteResult> run_suites(const std::vector<std::string>& names,
                                    const VerifyOptions& opts) {
  std::vector<SuiteResult> out;
  for (const std::string& name : names) {
    if (name == "grad")
      out.push_back(run_grad_suite(opts));
    else if (name == "collapse")
      out.push_back(run_collapse_suite());
    else if (name == "unbias")
      out.push_back(run_unbias_suite());
    else if (name == "wu")
      out.push_back(run_wu_suite());
    else
      throw std::invalid_argument("unknown suite '" + name + "' (grad, collapse, unbias, wu)");
  }
  return out;
}

}  // namespace mge

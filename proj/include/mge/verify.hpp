#pragma once

#include <string>
#include <vector>

namespace mge {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // measured value vs bound, or the error message
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  bool passed() const;
};

struct VerifyOptions {
  // Test hook: added to one autodiff coordinate in the gradient suite so a
  // broken backward pass is provably caught.
  double inject_grad_error = 0.0;
};

// Autodiff vs central finite differences for every primitive and for
// end-to-end model losses.
SuiteResult run_grad_suite(const VerifyOptions& opts = {});

// Full-batch telescopic loss equals the fine-mesh full-batch loss.
SuiteResult run_collapse_suite();

// Estimator gradient averaged over every equal-probability batch draw equals
// the full fine-mesh gradient (4-sample exhaustive enumeration).
SuiteResult run_unbias_suite();

// Work-unit ledger identities and closed-form totals.
SuiteResult run_wu_suite();

std::vector<std::string> all_suite_names();

// Runs the named suites in the given order; unknown names throw.
std::vector<SuiteResult> run_suites(const std::vector<std::string>& names,
                                    const VerifyOptions& opts = {});

}  // namespace mge

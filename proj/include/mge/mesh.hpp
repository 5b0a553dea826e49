#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mge/rng.hpp"
#include "mge/tensor.hpp"

namespace mge {

// Mesh transfer operators. Level conventions throughout: level 1 is the
// finest mesh; moving one level coarser averages non-overlapping 2x2 blocks
// (2x1 pairs in one dimension), halving each spatial extent.

// Applies `levels` rounds of 2x2 block averaging to a [C,H,W] or [N,C,H,W]
// tensor. levels = 0 is the identity.
Tensor restrict2d(const Tensor& x, int levels);

// Pairwise averaging of a 1-D signal, `levels` times.
Tensor restrict1d(const Tensor& x, int levels);

struct CropResult {
  Tensor patches;                            // [N,C,size,size]
  std::vector<std::pair<int, int>> offsets;  // (top, left) per batch element
};

// Uniform random square crops, one independent offset per batch element.
CropResult crop(const Tensor& x, int size, Rng& rng);

// Flattened parameter gradient for one (input, target) sample.
using SampleGrad =
    std::function<std::vector<double>(const Tensor& input, const Tensor& target)>;

struct GradResidual {
  std::vector<double> per_sample;  // ||g_i^fine - g_i^coarse|| per sample
  double mean_diff_norm = 0.0;     // norm of the batch-mean difference vector
};

// Per-sample gradient residuals between two mesh levels for a fixed
// parameter vector. Samples are given at level 1; both levels are reached by
// restriction, and inputs and targets are restricted identically.
GradResidual grad_residual(const SampleGrad& grad_at,
                           const std::vector<const Tensor*>& inputs,
                           const std::vector<const Tensor*>& targets,
                           int level_fine, int level_coarse);

struct RnormFit {
  double B = 0.0;  // multiplicative constant
  double p = 0.0;  // order: norm ~ B * h^p
};

// Least-squares fit of log(norm) = log(B) + p*log(h).
RnormFit fit_rnorm(const std::vector<double>& h, const std::vector<double>& norms);

}  // namespace mge

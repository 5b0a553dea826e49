#pragma once

#include <cstdint>
#include <vector>

#include "mge/estimator.hpp"
#include "mge/mesh.hpp"
#include "mge/models.hpp"
#include "mge/tasks.hpp"

namespace mge {

// 1-D linear convolution study: loss (1/n) * (u * theta)' y with a centered
// 3-tap kernel and zero padding. The loss is linear in theta, so its gradient
// has the closed form d/d theta_k = (1/n) * sum_t u_{t+k-1} y_t.
std::vector<double> conv_loss_oracle_grad(const std::vector<double>& u,
                                          const std::vector<double>& y);

// Same gradient read off the tape. theta fixes the evaluation point; the
// gradient itself does not depend on it.
std::vector<double> conv_loss_autodiff_grad(const std::vector<double>& u,
                                            const std::vector<double>& y,
                                            const std::vector<double>& theta);

struct Example1Row {
  double sigma = 0.0;
  int fine_level = 1;            // gradient difference between this level and the next
  double delta_g = 0.0;          // autodiff
  double oracle_delta_g = 0.0;   // closed form
};

struct Example1Result {
  std::vector<Example1Row> rows;       // sigmas in given order, pairs finest first
  double oracle_max_abs_diff = 0.0;    // worst per-coordinate autodiff/oracle gap
};

// Gradient differences across mesh pairs for a smooth random signal with
// noise sigma * z added to the input u (one shared z, scaled per sigma).
// n must be divisible by 2^levels.
Example1Result example1(int n, const std::vector<double>& sigmas, int levels, Rng& rng);

// Input corpus for the residual and variance studies. The first-order decay
// of cross-mesh residuals is a statement about smooth signals, so `smooth`
// (noise-free random fields) is the default; the task generators add their
// per-pixel noise and are available for contrast.
enum class DataSource { smooth, denoise, deblur };
DataSource parse_data_source(const std::string& name);
std::string data_source_name(DataSource d);

struct DecayConfig {
  DataSource data = DataSource::smooth;
  ModelKind model = ModelKind::convstack;
  std::vector<int> sizes = {128, 64, 32};  // fine mesh of each residual pair
  int images = 8;
  std::uint64_t seed = 0;
};

struct DecayResult {
  std::vector<double> h;         // spacing of each pair's fine mesh, finest = 1
  std::vector<double> residual;  // mean per-sample ||g_fine - g_coarse||
  RnormFit fit;                  // residual ~ B * h^p
};

// First-order decay of the cross-mesh gradient residual on smooth data at a
// fixed random parameter vector.
DecayResult grad_decay(const DecayConfig& cfg);

struct CoarsenCropConfig {
  DataSource data = DataSource::smooth;
  ModelKind model = ModelKind::convstack;
  std::vector<int> sizes = {128, 64, 32};
  int images = 8;
  double crop_fraction = 0.25;  // crop area as a fraction of the image
  int crop_repeats = 8;
  std::uint64_t seed = 0;
};

struct CoarsenCropRow {
  double h = 1.0;           // mesh spacing relative to the finest size
  double r_coarsen = 0.0;   // || mean(g^h) - mean(g^{2h}) ||, same samples
  double r_crop = 0.0;      // || mean(g^h) - mean(g^h on crops) ||, mean over draws
  int n_samples = 0;
};

// Subsampling by coarsening against subsampling by cropping at the same
// parameter vector. Crops take a side of round(s * sqrt(crop_fraction)) with
// an independent uniform offset per image, identical for input and target.
std::vector<CoarsenCropRow> coarsen_vs_crop(const CoarsenCropConfig& cfg);

struct VarianceConfig {
  DataSource data = DataSource::smooth;
  ModelKind model = ModelKind::convstack;
  int size = 32;
  int images = 256;
  int levels = 2;          // telescope depth for the per-term table
  long long n1 = 8;        // finest batch of the doubling plan
  long long batch_small = 4;  // batch-mean scaling pair: this batch vs 4x it
  int repeats = 96;
  std::uint64_t seed = 0;
};

struct VarianceResult {
  std::vector<TermVariance> per_term;     // doubling-plan telescopic terms
  std::vector<TermVariance> equal_batch;  // 2-level plan, both batches = n1
  double var_small = 0.0;  // batch-mean gradient variance at batch_small
  double var_large = 0.0;  // same at 4 * batch_small
  double ratio = 0.0;      // var_small / var_large, about 4 for 1/N scaling
};

// Empirical gradient variances: per telescopic term, at equal batch sizes
// (difference vs base), and the 1/N batch-mean scaling pair.
VarianceResult variance_experiment(const VarianceConfig& cfg);

}  // namespace mge

#pragma once

#include <string>
#include <vector>

#include "mge/estimator.hpp"
#include "mge/rng.hpp"
#include "mge/tensor.hpp"

namespace mge {

// Continuous test image: per channel the sum of four bounded-frequency
// sinusoids (at most 4 cycles per axis) and three Gaussian blobs, evaluated
// at pixel centers and min-max normalized to [0,1] per rasterization.
struct SmoothField {
  struct Sin {
    double amp, fx, fy, phase;
  };
  struct Blob {
    double amp, cx, cy, w;
  };
  int channels = 1;
  std::vector<std::vector<Sin>> sins;    // [channel][4]
  std::vector<std::vector<Blob>> blobs;  // [channel][3]

  static SmoothField random(int channels, Rng& rng);
  double eval(int c, double x, double y) const;  // x, y in [0,1], un-normalized
  Tensor rasterize(int size) const;              // [C,size,size]
};

Tensor sample_smooth_image(int channels, int size, Rng& rng);

// Smooth (input, target) pairs at the given size; inputs and targets are
// independent smooth fields. Used by the estimator experiments.
Dataset make_smooth_dataset(int n, int size, int in_channels, int out_channels, Rng& rng);

enum class TaskKind { denoise, deblur };
TaskKind parse_task_kind(const std::string& name);
std::string task_kind_name(TaskKind kind);

struct Task {
  TaskKind kind = TaskKind::denoise;
  int size = 32;
  int image_channels = 1;  // channels of the clean images
  int in_channels = 2;     // +1 noise-level channel for denoise
  Dataset train;
  Dataset eval_set;
  std::vector<double> train_t, eval_t;  // denoise mixing weights, one per image
  double sigma = 3.0, eps = 0.01;       // deblur kernel width and noise scale
};

// Denoising: u = t*y + (1-t)*z with one t ~ U[0,1] per image and z standard
// normal per pixel; t is appended to the input as a constant channel.
Task gen_denoise(int n_train, int n_eval, int size, Rng& rng);

// Deblurring: u = K*y + eps*z with a truncated normalized Gaussian kernel.
Task gen_deblur(int n_train, int n_eval, int size, Rng& rng, double sigma = 3.0,
                double eps = 0.01);

// Building blocks, exposed for direct testing.
Tensor denoise_input(const Tensor& y, double t, const Tensor& z);
// exp(-(x^2+y^2)/sigma^2) truncated at radius ceil(3*sigma), sum 1.
Tensor gaussian_kernel(double sigma);
// 2-D correlation with symmetric (edge-mirror) padding, so constants are
// preserved exactly.
Tensor blur_reflect(const Tensor& image, const Tensor& kernel);

}  // namespace mge

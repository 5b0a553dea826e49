#include "mge/tasks.hpp"

#include <cmath>
#include <stdexcept>

namespace mge {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

SmoothField SmoothField::random(int channels, Rng& rng) {
  if (channels < 1) throw std::runtime_error("SmoothField: need at least one channel");
  SmoothField f;
  f.channels = channels;
  f.sins.resize(static_cast<std::size_t>(channels));
  f.blobs.resize(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < 4; ++i)
      f.sins[static_cast<std::size_t>(c)].push_back({rng.uniform(0.25, 1.0),
                                                     rng.uniform(-4.0, 4.0),
                                                     rng.uniform(-4.0, 4.0),
                                                     rng.uniform(0.0, kTwoPi)});
    for (int i = 0; i < 3; ++i)
      f.blobs[static_cast<std::size_t>(c)].push_back({rng.uniform(0.25, 1.0),
                                                      rng.uniform(0.2, 0.8),
                                                      rng.uniform(0.2, 0.8),
                                                      rng.uniform(0.08, 0.25)});
  }
  return f;
}

double SmoothField::eval(int c, double x, double y) const {
  double v = 0.0;
  for (const Sin& s : sins[static_cast<std::size_t>(c)])
    v += s.amp * std::sin(kTwoPi * (s.fx * x + s.fy * y) + s.phase);
  for (const Blob& b : blobs[static_cast<std::size_t>(c)]) {
    const double dx = x - b.cx, dy = y - b.cy;
    v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.w * b.w));
  }
  return v;
}

Tensor SmoothField::rasterize(int size) const {
  if (size < 1) throw std::runtime_error("SmoothField::rasterize: size must be positive");
  Tensor img({channels, size, size});
  for (int c = 0; c < channels; ++c) {
    double lo = 0.0, hi = 0.0;
    double* plane = img.data.data() + static_cast<std::size_t>(c) * size * size;
    for (int yy = 0; yy < size; ++yy)
      for (int xx = 0; xx < size; ++xx) {
        const double v = eval(c, (xx + 0.5) / size, (yy + 0.5) / size);
        plane[yy * size + xx] = v;
        if (yy == 0 && xx == 0) {
          lo = hi = v;
        } else {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    const double range = hi - lo;
    if (range < 1e-12) {
      for (int i = 0; i < size * size; ++i) plane[i] = 0.5;
    } else {
      for (int i = 0; i < size * size; ++i) plane[i] = (plane[i] - lo) / range;
    }
  }
  return img;
}

Tensor sample_smooth_image(int channels, int size, Rng& rng) {
  return SmoothField::random(channels, rng).rasterize(size);
}

Dataset make_smooth_dataset(int n, int size, int in_channels, int out_channels, Rng& rng) {
  if (n < 1) throw std::runtime_error("make_smooth_dataset: need at least one sample");
  Dataset d;
  for (int i = 0; i < n; ++i) {
    d.inputs.push_back(sample_smooth_image(in_channels, size, rng));
    d.targets.push_back(sample_smooth_image(out_channels, size, rng));
  }
  d.validate();
  return d;
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "denoise") return TaskKind::denoise;
  if (name == "deblur") return TaskKind::deblur;
  throw std::runtime_error("unknown task '" + name + "'");
}

std::string task_kind_name(TaskKind kind) {
  return kind == TaskKind::denoise ? "denoise" : "deblur";
}

Tensor denoise_input(const Tensor& y, double t, const Tensor& z) {
  if (y.ndim() != 3)
    throw std::runtime_error("denoise_input: image must be [C,H,W], got " +
                             shape_str(y.shape));
  if (!y.same_shape(z))
    throw std::runtime_error("denoise_input: noise shape " + shape_str(z.shape) +
                             " != image shape " + shape_str(y.shape));
  const int C = y.dim(0), H = y.dim(1), W = y.dim(2);
  Tensor u({C + 1, H, W});
  for (std::size_t i = 0; i < y.data.size(); ++i)
    u.data[i] = t * y.data[i] + (1.0 - t) * z.data[i];
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (std::size_t i = 0; i < plane; ++i) u.data[y.data.size() + i] = t;
  return u;
}

Tensor gaussian_kernel(double sigma) {
  if (sigma <= 0.0) throw std::runtime_error("gaussian_kernel: sigma must be positive");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  const int k = 2 * r + 1;
  Tensor kern({k, k});
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(static_cast<double>(x) * x + static_cast<double>(y) * y) /
                                (sigma * sigma));
      kern.data[static_cast<std::size_t>((y + r) * k + (x + r))] = v;
      total += v;
    }
  for (double& v : kern.data) v /= total;
  return kern;
}

Tensor blur_reflect(const Tensor& image, const Tensor& kernel) {
  if (image.ndim() != 3)
    throw std::runtime_error("blur_reflect: image must be [C,H,W], got " +
                             shape_str(image.shape));
  if (kernel.ndim() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0)
    throw std::runtime_error("blur_reflect: kernel must be odd square, got " +
                             shape_str(kernel.shape));
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const int k = kernel.dim(0), r = (k - 1) / 2;
  if (k > H || k > W)
    throw std::runtime_error("blur_reflect: kernel size " + std::to_string(k) +
                             " exceeds image extent " + std::to_string(H) + "x" +
                             std::to_string(W));
  const auto reflect = [](int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - 1 - i;
    return i;
  };
  Tensor out({C, H, W});
  for (int c = 0; c < C; ++c) {
    const double* src = image.data.data() + static_cast<std::size_t>(c) * H * W;
    double* dst = out.data.data() + static_cast<std::size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int ky = -r; ky <= r; ++ky) {
          const int yy = reflect(y + ky, H);
          for (int kx = -r; kx <= r; ++kx) {
            const int xx = reflect(x + kx, W);
            s += kernel.data[static_cast<std::size_t>((ky + r) * k + (kx + r))] *
                 src[yy * W + xx];
          }
        }
        dst[y * W + x] = s;
      }
  }
  return out;
}

namespace {

Tensor normal_image(int C, int H, int W, Rng& rng) {
  Tensor z({C, H, W});
  for (double& v : z.data) v = rng.normal();
  return z;
}

}  // namespace

Task gen_denoise(int n_train, int n_eval, int size, Rng& rng) {
  if (n_train < 1 || n_eval < 1)
    throw std::runtime_error("gen_denoise: need at least one train and one eval image");
  if (size < 1) throw std::runtime_error("gen_denoise: size must be positive");
  Task task;
  task.kind = TaskKind::denoise;
  task.size = size;
  task.image_channels = 1;
  task.in_channels = 2;
  const auto fill = [&](Dataset* set, std::vector<double>* ts, int n) {
    for (int i = 0; i < n; ++i) {
      Tensor y = sample_smooth_image(1, size, rng);
      const double t = rng.uniform01();
      const Tensor z = normal_image(1, size, size, rng);
      set->inputs.push_back(denoise_input(y, t, z));
      set->targets.push_back(std::move(y));
      ts->push_back(t);
    }
    set->validate();
  };
  fill(&task.train, &task.train_t, n_train);
  fill(&task.eval_set, &task.eval_t, n_eval);
  return task;
}

Task gen_deblur(int n_train, int n_eval, int size, Rng& rng, double sigma, double eps) {
  if (n_train < 1 || n_eval < 1)
    throw std::runtime_error("gen_deblur: need at least one train and one eval image");
  if (size < 1) throw std::runtime_error("gen_deblur: size must be positive");
  if (eps < 0.0) throw std::runtime_error("gen_deblur: eps must be non-negative");
  const Tensor kern = gaussian_kernel(sigma);
  if (kern.dim(0) > size)
    throw std::runtime_error("gen_deblur: blur kernel size " + std::to_string(kern.dim(0)) +
                             " exceeds image size " + std::to_string(size));
  Task task;
  task.kind = TaskKind::deblur;
  task.size = size;
  task.image_channels = 1;
  task.in_channels = 1;
  task.sigma = sigma;
  task.eps = eps;
  const auto fill = [&](Dataset* set, int n) {
    for (int i = 0; i < n; ++i) {
      Tensor y = sample_smooth_image(1, size, rng);
      Tensor u = blur_reflect(y, kern);
      const Tensor z = normal_image(1, size, size, rng);
      for (std::size_t j = 0; j < u.data.size(); ++j) u.data[j] += eps * z.data[j];
      set->inputs.push_back(std::move(u));
      set->targets.push_back(std::move(y));
    }
    set->validate();
  };
  fill(&task.train, n_train);
  fill(&task.eval_set, n_eval);
  return task;
}

}  // namespace mge

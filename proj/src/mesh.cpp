#include "mge/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mge {

namespace {

// One round of 2x2 block averaging over `planes` contiguous HxW planes.
// Same arithmetic as the avgpool2 tape operation, so restriction and
// pooling agree bitwise.
void pool_planes(double* dst, const double* src, std::int64_t planes, int H, int W) {
  const int Ho = H / 2, Wo = W / 2;
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* s = src + p * H * W;
    double* d = dst + p * Ho * Wo;
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x) {
        const double* r0 = s + (2 * y) * W + 2 * x;
        const double* r1 = r0 + W;
        d[y * Wo + x] = (r0[0] + r0[1] + r1[0] + r1[1]) * 0.25;
      }
  }
}

}  // namespace

Tensor restrict2d(const Tensor& x, int levels) {
  if (levels < 0) throw std::runtime_error("restrict2d: negative level count");
  if (x.ndim() != 3 && x.ndim() != 4)
    throw std::runtime_error("restrict2d: input must be [C,H,W] or [N,C,H,W], got " +
                             shape_str(x.shape));
  if (levels == 0) return x;
  const int hd = x.ndim() - 2, wd = x.ndim() - 1;
  Tensor cur = x;
  for (int l = 0; l < levels; ++l) {
    const int H = cur.dim(hd), W = cur.dim(wd);
    if (H % 2 != 0 || W % 2 != 0)
      throw std::runtime_error("restrict2d: spatial size " + std::to_string(H) + "x" +
                               std::to_string(W) + " not divisible by 2 at round " +
                               std::to_string(l + 1));
    std::vector<int> oshape = cur.shape;
    oshape[static_cast<std::size_t>(hd)] = H / 2;
    oshape[static_cast<std::size_t>(wd)] = W / 2;
    Tensor next(oshape);
    const std::int64_t planes = cur.numel() / (static_cast<std::int64_t>(H) * W);
    pool_planes(next.data.data(), cur.data.data(), planes, H, W);
    cur = std::move(next);
  }
  return cur;
}

Tensor restrict1d(const Tensor& x, int levels) {
  if (levels < 0) throw std::runtime_error("restrict1d: negative level count");
  if (x.ndim() != 1)
    throw std::runtime_error("restrict1d: input must be [n], got " + shape_str(x.shape));
  if (levels == 0) return x;
  Tensor cur = x;
  for (int l = 0; l < levels; ++l) {
    const int n = cur.dim(0);
    if (n % 2 != 0)
      throw std::runtime_error("restrict1d: length " + std::to_string(n) +
                               " not divisible by 2 at round " + std::to_string(l + 1));
    Tensor next({n / 2});
    for (int i = 0; i < n / 2; ++i)
      next.data[static_cast<std::size_t>(i)] =
          (cur.data[static_cast<std::size_t>(2 * i)] +
           cur.data[static_cast<std::size_t>(2 * i + 1)]) *
          0.5;
    cur = std::move(next);
  }
  return cur;
}

CropResult crop(const Tensor& x, int size, Rng& rng) {
  if (x.ndim() != 4)
    throw std::runtime_error("crop: input must be [N,C,H,W], got " + shape_str(x.shape));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (size <= 0 || size > H || size > W)
    throw std::runtime_error("crop: size " + std::to_string(size) +
                             " out of range for image " + std::to_string(H) + "x" +
                             std::to_string(W));
  CropResult res;
  res.patches = Tensor({N, C, size, size});
  res.offsets.reserve(static_cast<std::size_t>(N));
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  const std::int64_t oplane = static_cast<std::int64_t>(size) * size;
  for (int n = 0; n < N; ++n) {
    const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(H - size + 1)));
    const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(W - size + 1)));
    res.offsets.emplace_back(top, left);
    for (int c = 0; c < C; ++c) {
      const double* src = x.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      double* dst = res.patches.data.data() + (static_cast<std::int64_t>(n) * C + c) * oplane;
      for (int y = 0; y < size; ++y)
        for (int xx = 0; xx < size; ++xx)
          dst[y * size + xx] = src[(top + y) * W + left + xx];
    }
  }
  return res;
}

GradResidual grad_residual(const SampleGrad& grad_at,
                           const std::vector<const Tensor*>& inputs,
                           const std::vector<const Tensor*>& targets,
                           int level_fine, int level_coarse) {
  if (inputs.empty()) throw std::runtime_error("grad_residual: empty batch");
  if (inputs.size() != targets.size())
    throw std::runtime_error("grad_residual: " + std::to_string(inputs.size()) +
                             " inputs vs " + std::to_string(targets.size()) + " targets");
  if (level_fine < 1 || level_coarse < level_fine)
    throw std::runtime_error("grad_residual: need 1 <= level_fine <= level_coarse");
  GradResidual res;
  res.per_sample.reserve(inputs.size());
  std::vector<double> mean_diff;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor uf = restrict2d(*inputs[i], level_fine - 1);
    const Tensor yf = restrict2d(*targets[i], level_fine - 1);
    const Tensor uc = restrict2d(*inputs[i], level_coarse - 1);
    const Tensor yc = restrict2d(*targets[i], level_coarse - 1);
    const std::vector<double> gf = grad_at(uf, yf);
    const std::vector<double> gc = grad_at(uc, yc);
    if (gf.size() != gc.size())
      throw std::runtime_error("grad_residual: gradient size changed across levels");
    if (mean_diff.empty()) mean_diff.assign(gf.size(), 0.0);
    double s = 0.0;
    for (std::size_t j = 0; j < gf.size(); ++j) {
      const double d = gf[j] - gc[j];
      s += d * d;
      mean_diff[j] += d;
    }
    res.per_sample.push_back(std::sqrt(s));
  }
  const double inv = 1.0 / static_cast<double>(inputs.size());
  double s = 0.0;
  for (double v : mean_diff) s += (v * inv) * (v * inv);
  res.mean_diff_norm = std::sqrt(s);
  return res;
}

RnormFit fit_rnorm(const std::vector<double>& h, const std::vector<double>& norms) {
  if (h.size() != norms.size())
    throw std::runtime_error("fit_rnorm: size mismatch");
  if (h.size() < 3)
    throw std::runtime_error("fit_rnorm: need at least 3 pairs, got " +
                             std::to_string(h.size()));
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] <= 0.0 || norms[i] <= 0.0)
      throw std::runtime_error("fit_rnorm: h and norms must be positive");
  const double n = static_cast<double>(h.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(norms[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (std::fabs(denom) < 1e-300)
    throw std::runtime_error("fit_rnorm: degenerate h values");
  RnormFit fit;
  fit.p = (n * sxy - sx * sy) / denom;
  fit.B = std::exp((sy - fit.p * sx) / n);
  return fit;
}

}  // namespace mge

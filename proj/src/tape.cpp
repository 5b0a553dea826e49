#include "mge/tape.hpp"

#include <cstdint>
#include <stdexcept>
#include <utility>

namespace mge {

namespace {

void conv2d_fwd(double* out, const double* in, const double* kw,
                const double* bias, int N, int Ci, int H, int W, int Co,
                int K) {
  const int P = (K - 1) / 2;
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    const double* in_n = in + n * Ci * plane;
    double* out_n = out + n * Co * plane;
    for (int co = 0; co < Co; ++co) {
      double* op = out_n + co * plane;
      const double bv = bias[co];
      for (std::int64_t i = 0; i < plane; ++i) op[i] = bv;
      const double* kco = kw + static_cast<std::int64_t>(co) * Ci * K * K;
      for (int ci = 0; ci < Ci; ++ci) {
        const double* ip = in_n + ci * plane;
        const double* kci = kco + ci * K * K;
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky - P;
          const int y0 = dy < 0 ? -dy : 0;
          const int y1 = dy > 0 ? H - dy : H;
          for (int kx = 0; kx < K; ++kx) {
            const double w = kci[ky * K + kx];
            const int dx = kx - P;
            const int x0 = dx < 0 ? -dx : 0;
            const int x1 = dx > 0 ? W - dx : W;
            for (int y = y0; y < y1; ++y) {
              double* orow = op + static_cast<std::int64_t>(y) * W;
              const double* irow = ip + static_cast<std::int64_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) orow[x] += w * irow[x];
            }
          }
        }
      }
    }
  }
}

void conv2d_bwd(double* din, double* dk, double* dbias, const double* dout,
                const double* in, const double* kw, int N, int Ci, int H,
                int W, int Co, int K) {
  const int P = (K - 1) / 2;
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      const double* gp = dout + (static_cast<std::int64_t>(n) * Co + co) * plane;
      double bs = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) bs += gp[i];
      dbias[co] += bs;
      for (int ci = 0; ci < Ci; ++ci) {
        const std::int64_t in_off = (static_cast<std::int64_t>(n) * Ci + ci) * plane;
        const double* ip = in + in_off;
        double* dip = din + in_off;
        const double* kci = kw + (static_cast<std::int64_t>(co) * Ci + ci) * K * K;
        double* dkci = dk + (static_cast<std::int64_t>(co) * Ci + ci) * K * K;
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky - P;
          const int y0 = dy < 0 ? -dy : 0;
          const int y1 = dy > 0 ? H - dy : H;
          for (int kx = 0; kx < K; ++kx) {
            const double w = kci[ky * K + kx];
            const int dx = kx - P;
            const int x0 = dx < 0 ? -dx : 0;
            const int x1 = dx > 0 ? W - dx : W;
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* grow = gp + static_cast<std::int64_t>(y) * W;
              const double* irow = ip + static_cast<std::int64_t>(y + dy) * W + dx;
              double* drow = dip + static_cast<std::int64_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) {
                acc += grow[x] * irow[x];
                drow[x] += w * grow[x];
              }
            }
            dkci[ky * K + kx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

Tape::Node& Tape::node(NodeId id) {
  if (id.v < 0 || id.v >= static_cast<int>(nodes_.size()))
    throw std::runtime_error("Tape: invalid node id");
  return nodes_[static_cast<std::size_t>(id.v)];
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id.v < 0 || id.v >= static_cast<int>(nodes_.size()))
    throw std::runtime_error("Tape: invalid node id");
  return nodes_[static_cast<std::size_t>(id.v)];
}

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

void Tape::ensure_grad(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.grad.empty()) n.grad.assign(n.value.data.size(), 0.0);
}

Tape::NodeId Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::param(const std::string& name, const Tensor& value) {
  if (name.empty()) throw std::runtime_error("Tape::param: empty name");
  Node n;
  n.value = value;
  n.param_name = name;
  return push(std::move(n));
}

std::unordered_map<std::string, Tape::NodeId> Tape::add_params(const Params& params) {
  std::unordered_map<std::string, NodeId> ids;
  for (const auto& [name, t] : params) ids.emplace(name, param(name, t));
  return ids;
}

double Tape::scalar_value(NodeId id) const {
  const Tensor& t = node(id).value;
  if (t.numel() != 1)
    throw std::runtime_error("scalar_value: node has shape " + shape_str(t.shape));
  return t.data[0];
}

Tape::NodeId Tape::conv2d(NodeId input, NodeId kernel, NodeId bias, int padding) {
  const Tensor& in = node(input).value;
  const Tensor& k = node(kernel).value;
  const Tensor& b = node(bias).value;
  if (in.ndim() != 4)
    throw std::runtime_error("conv2d: input must be [N,C,H,W], got " + shape_str(in.shape));
  if (k.ndim() != 4)
    throw std::runtime_error("conv2d: kernel must be [Cout,Cin,K,K], got " + shape_str(k.shape));
  const int N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int Co = k.dim(0), K = k.dim(2);
  if (k.dim(2) != k.dim(3))
    throw std::runtime_error("conv2d: kernel height " + std::to_string(k.dim(2)) +
                             " != kernel width " + std::to_string(k.dim(3)));
  if (K % 2 == 0)
    throw std::runtime_error("conv2d: kernel size " + std::to_string(K) + " must be odd");
  if (k.dim(1) != Ci)
    throw std::runtime_error("conv2d: input channels " + std::to_string(Ci) +
                             " != kernel input channels " + std::to_string(k.dim(1)));
  if (b.ndim() != 1 || b.dim(0) != Co)
    throw std::runtime_error("conv2d: bias must be [" + std::to_string(Co) + "], got " +
                             shape_str(b.shape));
  if (padding != (K - 1) / 2)
    throw std::runtime_error("conv2d: padding " + std::to_string(padding) +
                             " must equal (K-1)/2 = " + std::to_string((K - 1) / 2));
  if (H < K)
    throw std::runtime_error("conv2d: image height " + std::to_string(H) +
                             " smaller than kernel size " + std::to_string(K));
  if (W < K)
    throw std::runtime_error("conv2d: image width " + std::to_string(W) +
                             " smaller than kernel size " + std::to_string(K));

  Tensor out({N, Co, H, W});
  conv2d_fwd(out.data.data(), in.data.data(), k.data.data(), b.data.data(), N, Ci, H, W, Co, K);
  Node n;
  n.value = std::move(out);
  n.inputs = {input.v, kernel.v, bias.v};
  n.backprop = [input, kernel, bias, N, Ci, H, W, Co, K](Tape& t, int self) {
    t.ensure_grad(input.v);
    t.ensure_grad(kernel.v);
    t.ensure_grad(bias.v);
    conv2d_bwd(t.grad_ptr(input.v), t.grad_ptr(kernel.v), t.grad_ptr(bias.v),
               t.nodes_[static_cast<std::size_t>(self)].grad.data(),
               t.nodes_[static_cast<std::size_t>(input.v)].value.data.data(),
               t.nodes_[static_cast<std::size_t>(kernel.v)].value.data.data(),
               N, Ci, H, W, Co, K);
  };
  return push(std::move(n));
}

Tape::NodeId Tape::conv1d(NodeId input, NodeId kernel) {
  const Tensor& in = node(input).value;
  const Tensor& k = node(kernel).value;
  if (in.ndim() != 1)
    throw std::runtime_error("conv1d: input must be [n], got " + shape_str(in.shape));
  if (k.ndim() != 1)
    throw std::runtime_error("conv1d: kernel must be [K], got " + shape_str(k.shape));
  const int n_len = in.dim(0), K = k.dim(0);
  if (K % 2 == 0)
    throw std::runtime_error("conv1d: kernel size " + std::to_string(K) + " must be odd");
  if (n_len < K)
    throw std::runtime_error("conv1d: signal length " + std::to_string(n_len) +
                             " smaller than kernel size " + std::to_string(K));
  const int P = (K - 1) / 2;
  Tensor out({n_len});
  for (int j = 0; j < n_len; ++j) {
    double s = 0.0;
    for (int t = 0; t < K; ++t) {
      const int idx = j + t - P;
      if (idx >= 0 && idx < n_len) s += k.data[static_cast<std::size_t>(t)] * in.data[static_cast<std::size_t>(idx)];
    }
    out.data[static_cast<std::size_t>(j)] = s;
  }
  Node n;
  n.value = std::move(out);
  n.inputs = {input.v, kernel.v};
  n.backprop = [input, kernel, n_len, K, P](Tape& t, int self) {
    t.ensure_grad(input.v);
    t.ensure_grad(kernel.v);
    const double* g = t.nodes_[static_cast<std::size_t>(self)].grad.data();
    const double* in_v = t.nodes_[static_cast<std::size_t>(input.v)].value.data.data();
    const double* k_v = t.nodes_[static_cast<std::size_t>(kernel.v)].value.data.data();
    double* din = t.grad_ptr(input.v);
    double* dk = t.grad_ptr(kernel.v);
    for (int j = 0; j < n_len; ++j) {
      for (int tt = 0; tt < K; ++tt) {
        const int idx = j + tt - P;
        if (idx >= 0 && idx < n_len) {
          din[idx] += k_v[tt] * g[j];
          dk[tt] += in_v[idx] * g[j];
        }
      }
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::avgpool2(NodeId input) {
  const Tensor& in = node(input).value;
  if (in.ndim() != 4)
    throw std::runtime_error("avgpool2: input must be [N,C,H,W], got " + shape_str(in.shape));
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  if (H % 2 != 0)
    throw std::runtime_error("avgpool2: height " + std::to_string(H) + " is odd");
  if (W % 2 != 0)
    throw std::runtime_error("avgpool2: width " + std::to_string(W) + " is odd");
  const int Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  const double* ip = in.data.data();
  double* op = out.data.data();
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(N) * C; ++p) {
    const double* src = ip + p * H * W;
    double* dst = op + p * Ho * Wo;
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x) {
        const double* r0 = src + (2 * y) * W + 2 * x;
        const double* r1 = r0 + W;
        dst[y * Wo + x] = (r0[0] + r0[1] + r1[0] + r1[1]) * 0.25;
      }
  }
  Node n;
  n.value = std::move(out);
  n.inputs = {input.v};
  n.backprop = [input, N, C, H, W, Ho, Wo](Tape& t, int self) {
    t.ensure_grad(input.v);
    const double* g = t.nodes_[static_cast<std::size_t>(self)].grad.data();
    double* din = t.grad_ptr(input.v);
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(N) * C; ++p) {
      const double* gs = g + p * Ho * Wo;
      double* dd = din + p * H * W;
      for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) {
          const double q = gs[y * Wo + x] * 0.25;
          double* r0 = dd + (2 * y) * W + 2 * x;
          double* r1 = r0 + W;
          r0[0] += q;
          r0[1] += q;
          r1[0] += q;
          r1[1] += q;
        }
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::upsample_nearest2(NodeId input) {
  const Tensor& in = node(input).value;
  if (in.ndim() != 4)
    throw std::runtime_error("upsample_nearest2: input must be [N,C,H,W], got " +
                             shape_str(in.shape));
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int Ho = 2 * H, Wo = 2 * W;
  Tensor out({N, C, Ho, Wo});
  const double* ip = in.data.data();
  double* op = out.data.data();
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(N) * C; ++p) {
    const double* src = ip + p * H * W;
    double* dst = op + p * Ho * Wo;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = src[y * W + x];
        double* r0 = dst + (2 * y) * Wo + 2 * x;
        double* r1 = r0 + Wo;
        r0[0] = v;
        r0[1] = v;
        r1[0] = v;
        r1[1] = v;
      }
  }
  Node n;
  n.value = std::move(out);
  n.inputs = {input.v};
  n.backprop = [input, N, C, H, W, Ho, Wo](Tape& t, int self) {
    t.ensure_grad(input.v);
    const double* g = t.nodes_[static_cast<std::size_t>(self)].grad.data();
    double* din = t.grad_ptr(input.v);
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(N) * C; ++p) {
      const double* gs = g + p * Ho * Wo;
      double* dd = din + p * H * W;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double* r0 = gs + (2 * y) * Wo + 2 * x;
          const double* r1 = r0 + Wo;
          dd[y * W + x] += r0[0] + r0[1] + r1[0] + r1[1];
        }
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId input) {
  const Tensor& in = node(input).value;
  Tensor out(in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i)
    out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
  Node n;
  n.value = std::move(out);
  n.inputs = {input.v};
  n.backprop = [input](Tape& t, int self) {
    t.ensure_grad(input.v);
    const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const auto& in_v = t.nodes_[static_cast<std::size_t>(input.v)].value.data;
    double* din = t.grad_ptr(input.v);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in_v[i] > 0.0) din[i] += g[i];
  };
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv))
    throw std::runtime_error("add: shape " + shape_str(av.shape) + " != " + shape_str(bv.shape));
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
  Node n;
  n.value = std::move(out);
  n.inputs = {a.v, b.v};
  n.backprop = [a, b](Tape& t, int self) {
    t.ensure_grad(a.v);
    t.ensure_grad(b.v);
    const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    double* da = t.grad_ptr(a.v);
    double* db = t.grad_ptr(b.v);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i];
      db[i] += g[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv))
    throw std::runtime_error("mul: shape " + shape_str(av.shape) + " != " + shape_str(bv.shape));
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
  Node n;
  n.value = std::move(out);
  n.inputs = {a.v, b.v};
  n.backprop = [a, b](Tape& t, int self) {
    t.ensure_grad(a.v);
    t.ensure_grad(b.v);
    const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const auto& av = t.nodes_[static_cast<std::size_t>(a.v)].value.data;
    const auto& bv = t.nodes_[static_cast<std::size_t>(b.v)].value.data;
    double* da = t.grad_ptr(a.v);
    double* db = t.grad_ptr(b.v);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += bv[i] * g[i];
      db[i] += av[i] * g[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.data.size(); ++i) out.data[i] = factor * av.data[i];
  Node n;
  n.value = std::move(out);
  n.inputs = {a.v};
  n.backprop = [a, factor](Tape& t, int self) {
    t.ensure_grad(a.v);
    const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    double* da = t.grad_ptr(a.v);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += factor * g[i];
  };
  return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId a) {
  const Tensor& av = node(a).value;
  double s = 0.0;
  for (double x : av.data) s += x;
  Tensor out(std::vector<int>{});
  out.data[0] = s;
  Node n;
  n.value = std::move(out);
  n.inputs = {a.v};
  n.backprop = [a](Tape& t, int self) {
    t.ensure_grad(a.v);
    const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
    double* da = t.grad_ptr(a.v);
    const std::size_t m = t.nodes_[static_cast<std::size_t>(a.v)].value.data.size();
    for (std::size_t i = 0; i < m; ++i) da[i] += g;
  };
  return push(std::move(n));
}

Tape::NodeId Tape::concat_channels(NodeId a, NodeId b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.ndim() != 4 || bv.ndim() != 4)
    throw std::runtime_error("concat_channels: inputs must be [N,C,H,W], got " +
                             shape_str(av.shape) + " and " + shape_str(bv.shape));
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw std::runtime_error("concat_channels: shape " + shape_str(av.shape) +
                             " incompatible with " + shape_str(bv.shape));
  const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy(av.data.begin() + n * Ca * plane, av.data.begin() + (n + 1) * Ca * plane,
              out.data.begin() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane);
    std::copy(bv.data.begin() + n * Cb * plane, bv.data.begin() + (n + 1) * Cb * plane,
              out.data.begin() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane + Ca * plane);
  }
  Node nd;
  nd.value = std::move(out);
  nd.inputs = {a.v, b.v};
  nd.backprop = [a, b, N, Ca, Cb, plane](Tape& t, int self) {
    t.ensure_grad(a.v);
    t.ensure_grad(b.v);
    const double* g = t.nodes_[static_cast<std::size_t>(self)].grad.data();
    double* da = t.grad_ptr(a.v);
    double* db = t.grad_ptr(b.v);
    for (int n = 0; n < N; ++n) {
      const double* gn = g + static_cast<std::int64_t>(n) * (Ca + Cb) * plane;
      for (std::int64_t i = 0; i < Ca * plane; ++i) da[n * Ca * plane + i] += gn[i];
      for (std::int64_t i = 0; i < Cb * plane; ++i) db[n * Cb * plane + i] += gn[Ca * plane + i];
    }
  };
  return push(std::move(nd));
}

Tape::NodeId Tape::mse_loss(NodeId pred, NodeId target) {
  const Tensor& pv = node(pred).value;
  const Tensor& tv = node(target).value;
  if (!pv.same_shape(tv))
    throw std::runtime_error("mse_loss: shape " + shape_str(pv.shape) + " != " +
                             shape_str(tv.shape));
  const std::size_t m = pv.data.size();
  if (m == 0) throw std::runtime_error("mse_loss: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = pv.data[i] - tv.data[i];
    s += d * d;
  }
  Tensor out(std::vector<int>{});
  out.data[0] = s / static_cast<double>(m);
  Node n;
  n.value = std::move(out);
  n.inputs = {pred.v, target.v};
  n.backprop = [pred, target, m](Tape& t, int self) {
    t.ensure_grad(pred.v);
    t.ensure_grad(target.v);
    const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
    const auto& pv = t.nodes_[static_cast<std::size_t>(pred.v)].value.data;
    const auto& tv = t.nodes_[static_cast<std::size_t>(target.v)].value.data;
    double* dp = t.grad_ptr(pred.v);
    double* dt = t.grad_ptr(target.v);
    const double c = 2.0 * g / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = pv[i] - tv[i];
      dp[i] += c * d;
      dt[i] -= c * d;
    }
  };
  return push(std::move(n));
}

Params Tape::backward(NodeId loss, const Params& params) {
  const Node& ln = node(loss);
  if (ln.value.numel() != 1)
    throw std::runtime_error("backward: loss must be a scalar, got shape " +
                             shape_str(ln.value.shape));
  for (Node& n : nodes_) n.grad.clear();
  ensure_grad(loss.v);
  nodes_[static_cast<std::size_t>(loss.v)].grad[0] = 1.0;
  for (int i = loss.v; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, i);
  }
  Params out = Params::zeros_like(params);
  for (const Node& n : nodes_) {
    if (n.param_name.empty()) continue;
    if (!out.contains(n.param_name))
      throw std::runtime_error("backward: tape parameter '" + n.param_name +
                               "' not present in params");
    if (n.grad.empty()) continue;
    Tensor& g = out.at(n.param_name);
    if (g.data.size() != n.grad.size())
      throw std::runtime_error("backward: parameter '" + n.param_name + "' shape mismatch");
    for (std::size_t j = 0; j < n.grad.size(); ++j) g.data[j] += n.grad[j];
  }
  return out;
}

Params finite_diff_grad(const std::function<double(const Params&)>& loss_fn,
                        const Params& params, double step) {
  if (step <= 0.0) throw std::runtime_error("finite_diff_grad: step must be positive");
  Params work;
  for (const auto& [name, t] : params) work.add(name, t);
  Params out = Params::zeros_like(params);
  for (auto& [name, t] : work) {
    Tensor& g = out.at(name);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double orig = t.data[i];
      t.data[i] = orig + step;
      const double fp = loss_fn(work);
      t.data[i] = orig - step;
      const double fm = loss_fn(work);
      t.data[i] = orig;
      g.data[i] = (fp - fm) / (2.0 * step);
    }
  }
  return out;
}

}  // namespace mge

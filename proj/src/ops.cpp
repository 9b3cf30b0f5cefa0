#include "aquaseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aquaseg/errors.hpp"

namespace aquaseg {

namespace {

// Geometry of a cross-correlation from (in_c, in_h, in_w) to (out_c, out_h, out_w).
struct ConvGeom {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kh, kw, stride, pad;

  int taps() const { return in_c * kh * kw; }
  int pixels() const { return out_h * out_w; }
  std::size_t in_size() const { return static_cast<std::size_t>(in_c) * in_h * in_w; }
  std::size_t out_size() const { return static_cast<std::size_t>(out_c) * out_h * out_w; }
};

// Output pixels are processed in blocks so the column buffer stays cache-resident.
constexpr int kBlock = 256;

// Calls fn(q, iy, ix0, len) for each run of `len` consecutive block columns
// starting at column q that share an output row; ix0 is the input column of
// the run's first tap (input columns advance by g.stride along the run).
template <typename Fn>
void for_each_row_run(const ConvGeom& g, int p0, int pb, int i, int j, Fn&& fn) {
  int oy = p0 / g.out_w;
  int ox = p0 % g.out_w;
  for (int q = 0; q < pb;) {
    const int len = std::min(pb - q, g.out_w - ox);
    fn(q, oy * g.stride - g.pad + i, ox * g.stride - g.pad + j, len);
    q += len;
    ox = 0;
    ++oy;
  }
}

template <typename T>
void im2col_block(const T* in, const ConvGeom& g, int p0, int pb, T* col) {
  for (int c = 0; c < g.in_c; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        T* dst = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * pb;
        for_each_row_run(g, p0, pb, i, j, [&](int q, int iy, int ix0, int len) {
          T* d = dst + q;
          if (iy < 0 || iy >= g.in_h) {
            std::fill_n(d, len, T(0));
            return;
          }
          const T* row = plane + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1 && ix0 >= 0 && ix0 + len <= g.in_w) {
            std::copy_n(row + ix0, len, d);
            return;
          }
          for (int k = 0, ix = ix0; k < len; ++k, ix += g.stride) d[k] = (ix >= 0 && ix < g.in_w) ? row[ix] : T(0);
        });
      }
    }
  }
}

template <typename T>
void col2im_block_add(const T* col, const ConvGeom& g, int p0, int pb, T* in) {
  for (int c = 0; c < g.in_c; ++c) {
    T* plane = in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const T* src = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * pb;
        for_each_row_run(g, p0, pb, i, j, [&](int q, int iy, int ix0, int len) {
          if (iy < 0 || iy >= g.in_h) return;
          T* row = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* s = src + q;
          for (int k = 0, ix = ix0; k < len; ++k, ix += g.stride) {
            if (ix >= 0 && ix < g.in_w) row[ix] += s[k];
          }
        });
      }
    }
  }
}

// Fixed-order dot product: eight interleaved partial sums, combined pairwise.
template <typename T>
T dot(const T* a, const T* b, int n) {
  T acc[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
T block_sum(const T* a, int n) {
  T acc[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l];
  }
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// out(out_c, P) = bias + W(out_c, K) * col(K, P); per element the taps are summed in ascending order.
template <typename T>
void conv_forward_sample(const T* in, const T* weight, const T* bias, const ConvGeom& g, T* out,
                         std::vector<T>& col) {
  const int K = g.taps();
  const int P = g.pixels();
  col.resize(static_cast<std::size_t>(K) * kBlock);
  alignas(64) T acc[4][kBlock];
  for (int p0 = 0; p0 < P; p0 += kBlock) {
    const int pb = std::min(kBlock, P - p0);
    im2col_block(in, g, p0, pb, col.data());
    int oc = 0;
    for (; oc + 4 <= g.out_c; oc += 4) {
      for (int u = 0; u < 4; ++u) std::fill_n(acc[u], pb, bias ? bias[oc + u] : T(0));
      const T* w0 = weight + static_cast<std::size_t>(oc) * K;
      const T* w1 = w0 + K;
      const T* w2 = w1 + K;
      const T* w3 = w2 + K;
      for (int r = 0; r < K; ++r) {
        const T* cr = col.data() + static_cast<std::size_t>(r) * pb;
        const T a = w0[r], b = w1[r], c = w2[r], d = w3[r];
        T* __restrict o0 = acc[0];
        T* __restrict o1 = acc[1];
        T* __restrict o2 = acc[2];
        T* __restrict o3 = acc[3];
        for (int q = 0; q < pb; ++q) {
          const T x = cr[q];
          o0[q] += a * x;
          o1[q] += b * x;
          o2[q] += c * x;
          o3[q] += d * x;
        }
      }
      for (int u = 0; u < 4; ++u) {
        std::memcpy(out + static_cast<std::size_t>(oc + u) * P + p0, acc[u], sizeof(T) * pb);
      }
    }
    for (; oc < g.out_c; ++oc) {
      std::fill_n(acc[0], pb, bias ? bias[oc] : T(0));
      const T* w0 = weight + static_cast<std::size_t>(oc) * K;
      for (int r = 0; r < K; ++r) {
        const T* cr = col.data() + static_cast<std::size_t>(r) * pb;
        const T a = w0[r];
        T* __restrict o0 = acc[0];
        for (int q = 0; q < pb; ++q) o0[q] += a * cr[q];
      }
      std::memcpy(out + static_cast<std::size_t>(oc) * P + p0, acc[0], sizeof(T) * pb);
    }
  }
}

// din += col2im(W^T * dout); per column element the output channels are summed in ascending order.
template <typename T>
void conv_backward_data_sample(const T* dout, const T* weight, const ConvGeom& g, T* din, std::vector<T>& col) {
  const int K = g.taps();
  const int P = g.pixels();
  col.resize(static_cast<std::size_t>(K) * kBlock);
  for (int p0 = 0; p0 < P; p0 += kBlock) {
    const int pb = std::min(kBlock, P - p0);
    std::fill_n(col.data(), static_cast<std::size_t>(K) * pb, T(0));
    int r = 0;
    for (; r + 4 <= K; r += 4) {
      T* __restrict d0 = col.data() + static_cast<std::size_t>(r) * pb;
      T* __restrict d1 = d0 + pb;
      T* __restrict d2 = d1 + pb;
      T* __restrict d3 = d2 + pb;
      for (int oc = 0; oc < g.out_c; ++oc) {
        const T* go = dout + static_cast<std::size_t>(oc) * P + p0;
        const T* w = weight + static_cast<std::size_t>(oc) * K + r;
        const T a = w[0], b = w[1], c = w[2], d = w[3];
        for (int q = 0; q < pb; ++q) {
          const T x = go[q];
          d0[q] += a * x;
          d1[q] += b * x;
          d2[q] += c * x;
          d3[q] += d * x;
        }
      }
    }
    for (; r < K; ++r) {
      T* __restrict d0 = col.data() + static_cast<std::size_t>(r) * pb;
      for (int oc = 0; oc < g.out_c; ++oc) {
        const T* go = dout + static_cast<std::size_t>(oc) * P + p0;
        const T a = weight[static_cast<std::size_t>(oc) * K + r];
        for (int q = 0; q < pb; ++q) d0[q] += a * go[q];
      }
    }
    col2im_block_add(col.data(), g, p0, pb, din);
  }
}

// dW += dout * col^T, dbias += row sums of dout.
template <typename T>
void conv_backward_weight_sample(const T* in, const T* dout, const ConvGeom& g, T* dweight, T* dbias,
                                 std::vector<T>& col) {
  const int K = g.taps();
  const int P = g.pixels();
  col.resize(static_cast<std::size_t>(K) * kBlock);
  for (int p0 = 0; p0 < P; p0 += kBlock) {
    const int pb = std::min(kBlock, P - p0);
    if (dweight) im2col_block(in, g, p0, pb, col.data());
    for (int oc = 0; oc < g.out_c; ++oc) {
      const T* go = dout + static_cast<std::size_t>(oc) * P + p0;
      if (dbias) dbias[oc] += block_sum(go, pb);
      if (!dweight) continue;
      T* dw = dweight + static_cast<std::size_t>(oc) * K;
      for (int r = 0; r < K; ++r) dw[r] += dot(go, col.data() + static_cast<std::size_t>(r) * pb, pb);
    }
  }
}

int checked_out_dim(int in, int k, int stride, int pad, const char* axis, const Shape4& in_shape,
                    const Shape4& w_shape) {
  const int span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0) {
    throw ConfigError(std::string("conv2d: ") + axis + " output size (" + std::to_string(in) + " + 2*" +
                      std::to_string(pad) + " - " + std::to_string(k) + ")/" + std::to_string(stride) +
                      " + 1 is not a positive integer for input " + in_shape.str() + " and weight " +
                      w_shape.str());
  }
  return span / stride + 1;
}

template <typename T>
std::vector<T>& grad_of(detail::Node<T>& out, std::size_t i) {
  return out.inputs[i]->ensure_grad();
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding) {
  const Shape4 is = input.shape();
  const Shape4 ws = weight.shape();
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0, got " + std::to_string(padding));
  if (is.c != ws.c) {
    throw ShapeError("conv2d: input " + is.str() + " has " + std::to_string(is.c) + " channels but weight " +
                     ws.str() + " expects " + std::to_string(ws.c));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape4{1, ws.n, 1, 1}) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
  }
  const ConvGeom g{is.c,
                   is.h,
                   is.w,
                   ws.n,
                   checked_out_dim(is.h, ws.h, stride, padding, "height", is, ws),
                   checked_out_dim(is.w, ws.w, stride, padding, "width", is, ws),
                   ws.h,
                   ws.w,
                   stride,
                   padding};
  const Shape4 os{is.n, g.out_c, g.out_h, g.out_w};
  std::vector<T> out(os.numel());
  std::vector<T> col;
  const T* b = has_bias ? bias.data().data() : nullptr;
  for (int n = 0; n < is.n; ++n) {
    conv_forward_sample(input.data().data() + n * g.in_size(), weight.data().data(), b, g,
                        out.data() + n * g.out_size(), col);
  }
  std::vector<Tensor<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return record_op<T>(os, std::move(out), std::move(inputs), [g, has_bias](detail::Node<T>& node) {
    auto& x = *node.inputs[0];
    auto& w = *node.inputs[1];
    std::vector<T> col;
    const T* gy = node.grad.data();
    const int batch = node.shape.n;
    if (x.requires_grad) {
      auto& gx = x.ensure_grad();
      for (int n = 0; n < batch; ++n) {
        conv_backward_data_sample(gy + n * g.out_size(), w.data.data(), g, gx.data() + n * g.in_size(), col);
      }
    }
    const bool want_w = w.requires_grad;
    const bool want_b = has_bias && node.inputs[2]->requires_grad;
    if (want_w || want_b) {
      T* gw = want_w ? w.ensure_grad().data() : nullptr;
      T* gb = want_b ? node.inputs[2]->ensure_grad().data() : nullptr;
      for (int n = 0; n < batch; ++n) {
        conv_backward_weight_sample(x.data.data() + n * g.in_size(), gy + n * g.out_size(), g, gw, gb, col);
      }
    }
  });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, int stride) {
  const Shape4 is = input.shape();
  const Shape4 ws = weight.shape();
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be >= 1, got " + std::to_string(stride));
  if (is.c != ws.n) {
    throw ShapeError("conv_transpose2d: input " + is.str() + " has " + std::to_string(is.c) +
                     " channels but weight " + ws.str() + " expects " + std::to_string(ws.n));
  }
  // The forward pass is the data-gradient of the conv2d that maps the output back onto the input.
  const ConvGeom g{ws.c, (is.h - 1) * stride + ws.h, (is.w - 1) * stride + ws.w, is.c, is.h, is.w, ws.h, ws.w,
                   stride, 0};
  const Shape4 os{is.n, g.in_c, g.in_h, g.in_w};
  std::vector<T> out(os.numel(), T(0));
  std::vector<T> col;
  for (int n = 0; n < is.n; ++n) {
    conv_backward_data_sample(input.data().data() + n * g.out_size(), weight.data().data(), g,
                              out.data() + n * g.in_size(), col);
  }
  return record_op<T>(os, std::move(out), {input, weight}, [g](detail::Node<T>& node) {
    auto& x = *node.inputs[0];
    auto& w = *node.inputs[1];
    std::vector<T> col;
    const T* gy = node.grad.data();
    const int batch = node.shape.n;
    if (x.requires_grad) {
      auto& gx = x.ensure_grad();
      std::vector<T> tmp(g.out_size());
      for (int n = 0; n < batch; ++n) {
        conv_forward_sample(gy + n * g.in_size(), w.data.data(), static_cast<const T*>(nullptr), g, tmp.data(), col);
        T* dst = gx.data() + n * g.out_size();
        for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] += tmp[i];
      }
    }
    if (w.requires_grad) {
      T* gw = w.ensure_grad().data();
      for (int n = 0; n < batch; ++n) {
        conv_backward_weight_sample(gy + n * g.in_size(), x.data.data() + n * g.out_size(), g, gw,
                                    static_cast<T*>(nullptr), col);
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int k) {
  const Shape4 s = input.shape();
  if (k < 1) throw ConfigError("maxpool2d: window must be >= 1");
  if (s.h % k != 0 || s.w % k != 0) {
    throw ShapeError("maxpool2d: spatial dims of " + s.str() + " are not divisible by " + std::to_string(k));
  }
  const Shape4 os{s.n, s.c, s.h / k, s.w / k};
  std::vector<T> out(os.numel());
  std::vector<std::size_t> argmax(os.numel());
  const T* x = input.data().data();
  std::size_t o = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * s.h * s.w;
    for (int oy = 0; oy < os.h; ++oy) {
      for (int ox = 0; ox < os.w; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oy * k) * s.w + ox * k;
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            const std::size_t idx = base + static_cast<std::size_t>(oy * k + i) * s.w + ox * k + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return record_op<T>(os, std::move(out), {input}, [argmax = std::move(argmax)](detail::Node<T>& node) {
    auto& gx = grad_of(node, 0);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += node.grad[i];
  });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor) {
  if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
  const Shape4 s = input.shape();
  const Shape4 os{s.n, s.c, s.h * factor, s.w * factor};
  std::vector<T> out(os.numel());
  const T* x = input.data().data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x + static_cast<std::size_t>(nc) * s.h * s.w;
    T* dst = out.data() + static_cast<std::size_t>(nc) * os.h * os.w;
    for (int y = 0; y < os.h; ++y) {
      for (int xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / factor) * s.w + xx / factor];
    }
  }
  return record_op<T>(os, std::move(out), {input}, [s, os, factor](detail::Node<T>& node) {
    auto& gx = grad_of(node, 0);
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      T* dst = gx.data() + static_cast<std::size_t>(nc) * s.h * s.w;
      const T* src = node.grad.data() + static_cast<std::size_t>(nc) * os.h * os.w;
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) dst[(y / factor) * s.w + xx / factor] += src[y * os.w + xx];
      }
    }
  });
}

template <typename T>
Tensor<T> avgpool_downsample(const Tensor<T>& input, int factor) {
  if (factor < 1) throw ConfigError("avgpool_downsample: factor must be >= 1, got " + std::to_string(factor));
  const Shape4 s = input.shape();
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("avgpool_downsample: spatial dims of " + s.str() + " are not divisible by " +
                     std::to_string(factor));
  }
  const Shape4 os{s.n, s.c, s.h / factor, s.w / factor};
  const T inv = T(1) / static_cast<T>(factor * factor);
  std::vector<T> out(os.numel());
  const T* x = input.data().data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x + static_cast<std::size_t>(nc) * s.h * s.w;
    T* dst = out.data() + static_cast<std::size_t>(nc) * os.h * os.w;
    for (int oy = 0; oy < os.h; ++oy) {
      for (int ox = 0; ox < os.w; ++ox) {
        T acc = 0;
        for (int i = 0; i < factor; ++i) {
          for (int j = 0; j < factor; ++j) acc += src[(oy * factor + i) * s.w + ox * factor + j];
        }
        dst[oy * os.w + ox] = acc * inv;
      }
    }
  }
  return record_op<T>(os, std::move(out), {input}, [s, os, factor, inv](detail::Node<T>& node) {
    auto& gx = grad_of(node, 0);
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      T* dst = gx.data() + static_cast<std::size_t>(nc) * s.h * s.w;
      const T* src = node.grad.data() + static_cast<std::size_t>(nc) * os.h * os.w;
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) dst[y * s.w + xx] += src[(y / factor) * os.w + xx / factor] * inv;
      }
    }
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape4 sa = a.shape();
  const Shape4 sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + sa.str() + " vs " + sb.str());
  }
  const Shape4 os{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::size_t la = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t lb = static_cast<std::size_t>(sb.c) * sb.plane();
  std::vector<T> out(os.numel());
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.data().data() + n * la, la, out.data() + n * (la + lb));
    std::copy_n(b.data().data() + n * lb, lb, out.data() + n * (la + lb) + la);
  }
  return record_op<T>(os, std::move(out), {a, b}, [la, lb](detail::Node<T>& node) {
    const int batch = node.shape.n;
    for (std::size_t which = 0; which < 2; ++which) {
      if (!node.inputs[which]->requires_grad) continue;
      auto& g = grad_of(node, which);
      const std::size_t len = which == 0 ? la : lb;
      const std::size_t off = which == 0 ? 0 : la;
      for (int n = 0; n < batch; ++n) {
        const T* src = node.grad.data() + n * (la + lb) + off;
        T* dst = g.data() + n * len;
        for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, int begin, int count) {
  const Shape4 s = input.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + s.str());
  }
  const Shape4 os{s.n, count, s.h, s.w};
  const std::size_t plane = s.plane();
  std::vector<T> out(os.numel());
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(input.data().data() + (static_cast<std::size_t>(n) * s.c + begin) * plane, count * plane,
                out.data() + static_cast<std::size_t>(n) * count * plane);
  }
  return record_op<T>(os, std::move(out), {input}, [s, begin, count, plane](detail::Node<T>& node) {
    auto& g = grad_of(node, 0);
    for (int n = 0; n < s.n; ++n) {
      const T* src = node.grad.data() + static_cast<std::size_t>(n) * count * plane;
      T* dst = g.data() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
      for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return record_op<T>(input.shape(), std::move(out), {input}, [](detail::Node<T>& node) {
      auto& g = grad_of(node, 0);
      const auto& xin = node.inputs[0]->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xin[i] > T(0)) g[i] += node.grad[i];
      }
    });
  }
  const T lo = static_cast<T>(kSigmoidClamp);
  const T hi = T(1) - static_cast<T>(kSigmoidClamp);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = T(1) / (T(1) + std::exp(-x[i]));
    out[i] = std::clamp(s, lo, hi);
  }
  return record_op<T>(input.shape(), std::move(out), {input}, [lo, hi](detail::Node<T>& node) {
    auto& g = grad_of(node, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = node.data[i];
      // Zero slope where the clamp is active.
      if (s > lo && s < hi) g[i] += node.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return record_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!node.inputs[k]->requires_grad) continue;
      auto& g = grad_of(node, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return record_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
    if (node.inputs[0]->requires_grad) {
      auto& g = grad_of(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
    if (node.inputs[1]->requires_grad) {
      auto& g = grad_of(node, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return record_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!node.inputs[k]->requires_grad) continue;
      auto& g = grad_of(node, k);
      const auto& other = node.inputs[1 - k]->data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * other[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return record_op<T>(a.shape(), std::move(out), {a}, [factor](detail::Node<T>& node) {
    auto& g = grad_of(node, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (const T v : a.data()) acc += static_cast<double>(v);
  return record_op<T>(Shape4{1, 1, 1, 1}, {static_cast<T>(acc)}, {a}, [](detail::Node<T>& node) {
    auto& g = grad_of(node, 0);
    const T up = node.grad[0];
    for (auto& v : g) v += up;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  double acc = 0.0;
  for (const T v : a.data()) acc += static_cast<double>(v);
  const double count = static_cast<double>(a.numel());
  return record_op<T>(Shape4{1, 1, 1, 1}, {static_cast<T>(acc / count)}, {a}, [count](detail::Node<T>& node) {
    auto& g = grad_of(node, 0);
    const T up = static_cast<T>(static_cast<double>(node.grad[0]) / count);
    for (auto& v : g) v += up;
  });
}

#define AQUASEG_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);         \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, int);                      \
  template Tensor<T> maxpool2d(const Tensor<T>&, int);                                               \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int);                                        \
  template Tensor<T> avgpool_downsample(const Tensor<T>&, int);                                      \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                                     \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&);

AQUASEG_INSTANTIATE_OPS(float)
AQUASEG_INSTANTIATE_OPS(double)

}  // namespace aquaseg

// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "crabsurvey/errors.hpp"

namespace crabsurvey::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Output extent of a strided window sweep.
int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col: (channels * kh * kw) x (out_h * out_w)
void im2col(const float* x, int channels, int h, int w, int kh, int kw, int stride, int ph,
            int pw, int out_h, int out_w, float* col) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* dst = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - ph + ky;
          float* row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + out_w, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pw + kx;
            row[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into x.
void col2im(const float* col, int channels, int h, int w, int kh, int kw, int stride, int ph,
            int pw, int out_h, int out_w, float* x) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* src = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - ph + ky;
          if (iy < 0 || iy >= h) continue;
          const float* row = src + static_cast<std::size_t>(oy) * out_w;
          float* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pw + kx;
            if (ix >= 0 && ix < w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

// Single-channel direct correlation, used by depthwise convolutions.
void depthwise_forward(const float* x, int h, int w, const float* k, int kh, int kw, int stride,
                       int ph, int pw, int out_h, int out_w, float bias, float* out) {
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      float acc = bias;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - ph + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pw + kx;
          if (ix >= 0 && ix < w) acc += k[ky * kw + kx] * x[iy * w + ix];
        }
      }
      out[oy * out_w + ox] = acc;
    }
  }
}

void depthwise_backward(const float* x, int h, int w, const float* k, int kh, int kw, int stride,
                        int ph, int pw, int out_h, int out_w, const float* dout, float* dx,
                        float* dk) {
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const float g = dout[oy * out_w + ox];
      if (g == 0.0f) continue;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - ph + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pw + kx;
          if (ix < 0 || ix >= w) continue;
          if (dx) dx[iy * w + ix] += g * k[ky * kw + kx];
          if (dk) dk[ky * kw + kx] += g * x[iy * w + ix];
        }
      }
    }
  }
}

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

bool wants_grad(const Node* n) { return n != nullptr && n->requires_grad; }

// Broadcast strides of `b` against the full extent `a`.
struct Broadcast {
  std::size_t sn, sc, sh, sw;
};

Broadcast broadcast_strides(const Shape& a, const Shape& b) {
  auto ok = [](int full, int part) { return part == full || part == 1; };
  require(ok(a.n, b.n) && ok(a.c, b.c) && ok(a.h, b.h) && ok(a.w, b.w),
          "cannot broadcast " + b.str() + " to " + a.str());
  const std::size_t bw = 1, bh = static_cast<std::size_t>(b.w), bc = bh * b.h, bn = bc * b.c;
  return {b.n == 1 ? 0 : bn, b.c == 1 ? 0 : bc, b.h == 1 ? 0 : bh, b.w == 1 ? 0 : bw};
}

template <class F>
void for_each_broadcast(const Shape& a, const Broadcast& s, F&& f) {
  std::size_t i = 0;
  for (int n = 0; n < a.n; ++n)
    for (int c = 0; c < a.c; ++c)
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x, ++i) f(i, n * s.sn + c * s.sc + y * s.sh + x * s.sw);
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd bwd_from_in_out) {
  std::vector<float> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Node* xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn, bwd_from_in_out](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * bwd_from_in_out(xn->value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvGeometry geom) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int groups = geom.groups;
  require(groups >= 1 && xs.c % groups == 0 && ws.n % groups == 0,
          "conv2d: channels not divisible by groups");
  require(ws.c == xs.c / groups, "conv2d: weight " + ws.str() + " vs input " + xs.str());
  require(!bias.defined() || bias.numel() == static_cast<std::size_t>(ws.n),
          "conv2d: bias size mismatch");
  const int kh = ws.h, kw = ws.w, stride = geom.stride, ph = geom.pad_h, pw = geom.pad_w;
  const int out_h = conv_out(xs.h, kh, stride, ph);
  const int out_w = conv_out(xs.w, kw, stride, pw);
  require(out_h > 0 && out_w > 0, "conv2d: output would be empty for input " + xs.str());
  const int cin_g = xs.c / groups, cout_g = ws.n / groups;
  const int kdim = cin_g * kh * kw;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_plane = xs.plane();
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0;
  const bool depthwise = cin_g == 1 && cout_g == 1;
  const Shape os{xs.n, ws.n, out_h, out_w};

  std::vector<float> out(os.numel());
  std::vector<float> col;
  if (!pointwise && !depthwise) col.resize(static_cast<std::size_t>(kdim) * out_plane);
  const float* xd = x.data().data();
  const float* wd = weight.data().data();
  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const float* xg = xd + (static_cast<std::size_t>(n) * xs.c + g * cin_g) * in_plane;
      float* og = out.data() + (static_cast<std::size_t>(n) * ws.n + g * cout_g) * out_plane;
      const float* wg = wd + static_cast<std::size_t>(g) * cout_g * kdim;
      if (depthwise) {
        depthwise_forward(xg, xs.h, xs.w, wg, kh, kw, stride, ph, pw, out_h, out_w, 0.0f, og);
        continue;
      }
      const float* colp = xg;
      if (!pointwise) {
        im2col(xg, cin_g, xs.h, xs.w, kh, kw, stride, ph, pw, out_h, out_w, col.data());
        colp = col.data();
      }
      MapMat(og, cout_g, out_plane).noalias() =
          CMapMat(wg, cout_g, kdim) * CMapMat(colp, kdim, out_plane);
    }
    if (bias.defined()) {
      const float* bd = bias.data().data();
      for (int c = 0; c < ws.n; ++c) {
        float* oc = out.data() + (static_cast<std::size_t>(n) * ws.n + c) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) oc[i] += bd[c];
      }
    }
  }

  Node* xn = x.node();
  Node* wn = weight.node();
  Node* bn = bias.defined() ? bias.node() : nullptr;
  return make_result(
      os, std::move(out), {x, weight, bias},
      [=](Node& self) {
        const bool gx = wants_grad(xn), gw = wants_grad(wn), gb = wants_grad(bn);
        float* dx = gx ? xn->ensure_grad().data() : nullptr;
        float* dw = gw ? wn->ensure_grad().data() : nullptr;
        float* db = gb ? bn->ensure_grad().data() : nullptr;
        std::vector<float> colb;
        std::vector<float> dcol;
        if (!pointwise && !depthwise) {
          colb.resize(static_cast<std::size_t>(kdim) * out_plane);
          if (gx) dcol.resize(colb.size());
        }
        for (int n = 0; n < xs.n; ++n) {
          for (int g = 0; g < groups; ++g) {
            const std::size_t xoff = (static_cast<std::size_t>(n) * xs.c + g * cin_g) * in_plane;
            const float* xg = xn->value.data() + xoff;
            const float* dog =
                self.grad.data() + (static_cast<std::size_t>(n) * ws.n + g * cout_g) * out_plane;
            const float* wg = wn->value.data() + static_cast<std::size_t>(g) * cout_g * kdim;
            float* dwg = gw ? dw + static_cast<std::size_t>(g) * cout_g * kdim : nullptr;
            if (depthwise) {
              depthwise_backward(xg, xs.h, xs.w, wg, kh, kw, stride, ph, pw, out_h, out_w, dog,
                                 gx ? dx + xoff : nullptr, dwg);
              continue;
            }
            CMapMat dout(dog, cout_g, out_plane);
            if (pointwise) {
              if (gw)
                MapMat(dwg, cout_g, kdim).noalias() +=
                    dout * CMapMat(xg, kdim, out_plane).transpose();
              if (gx)
                MapMat(dx + xoff, kdim, out_plane).noalias() +=
                    CMapMat(wg, cout_g, kdim).transpose() * dout;
              continue;
            }
            if (gw) {
              im2col(xg, cin_g, xs.h, xs.w, kh, kw, stride, ph, pw, out_h, out_w, colb.data());
              MapMat(dwg, cout_g, kdim).noalias() +=
                  dout * CMapMat(colb.data(), kdim, out_plane).transpose();
            }
            if (gx) {
              MapMat(dcol.data(), kdim, out_plane).noalias() =
                  CMapMat(wg, cout_g, kdim).transpose() * dout;
              col2im(dcol.data(), cin_g, xs.h, xs.w, kh, kw, stride, ph, pw, out_h, out_w,
                     dx + xoff);
            }
          }
          if (gb) {
            for (int c = 0; c < ws.n; ++c) {
              const float* doc =
                  self.grad.data() + (static_cast<std::size_t>(n) * ws.n + c) * out_plane;
              db[c] += std::accumulate(doc, doc + out_plane, 0.0f);
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        ConvGeometry geom) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int groups = geom.groups;
  require(groups >= 1 && xs.c % groups == 0, "conv_transpose2d: channels not divisible");
  require(ws.n == xs.c, "conv_transpose2d: weight " + ws.str() + " vs input " + xs.str());
  const int cin_g = xs.c / groups, cout_g = ws.c, cout = cout_g * groups;
  require(!bias.defined() || bias.numel() == static_cast<std::size_t>(cout),
          "conv_transpose2d: bias size mismatch");
  const int kh = ws.h, kw = ws.w, stride = geom.stride, ph = geom.pad_h, pw = geom.pad_w;
  const int out_h = (xs.h - 1) * stride - 2 * ph + kh;
  const int out_w = (xs.w - 1) * stride - 2 * pw + kw;
  require(out_h > 0 && out_w > 0, "conv_transpose2d: empty output");
  const int kdim = cout_g * kh * kw;
  const std::size_t in_plane = xs.plane();
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const Shape os{xs.n, cout, out_h, out_w};

  std::vector<float> out(os.numel(), 0.0f);
  std::vector<float> col(static_cast<std::size_t>(kdim) * in_plane);
  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const float* xg =
          x.data().data() + (static_cast<std::size_t>(n) * xs.c + g * cin_g) * in_plane;
      const float* wg = weight.data().data() + static_cast<std::size_t>(g) * cin_g * kdim;
      float* og = out.data() + (static_cast<std::size_t>(n) * cout + g * cout_g) * out_plane;
      MapMat(col.data(), kdim, in_plane).noalias() =
          CMapMat(wg, cin_g, kdim).transpose() * CMapMat(xg, cin_g, in_plane);
      col2im(col.data(), cout_g, out_h, out_w, kh, kw, stride, ph, pw, xs.h, xs.w, og);
    }
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) {
        float* oc = out.data() + (static_cast<std::size_t>(n) * cout + c) * out_plane;
        const float b = bias.data()[c];
        for (std::size_t i = 0; i < out_plane; ++i) oc[i] += b;
      }
    }
  }

  Node* xn = x.node();
  Node* wn = weight.node();
  Node* bn = bias.defined() ? bias.node() : nullptr;
  return make_result(os, std::move(out), {x, weight, bias}, [=](Node& self) {
    const bool gx = wants_grad(xn), gw = wants_grad(wn), gb = wants_grad(bn);
    std::vector<float> dcol(static_cast<std::size_t>(kdim) * in_plane);
    for (int n = 0; n < xs.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        const std::size_t xoff = (static_cast<std::size_t>(n) * xs.c + g * cin_g) * in_plane;
        const float* dog =
            self.grad.data() + (static_cast<std::size_t>(n) * cout + g * cout_g) * out_plane;
        im2col(dog, cout_g, out_h, out_w, kh, kw, stride, ph, pw, xs.h, xs.w, dcol.data());
        CMapMat dc(dcol.data(), kdim, in_plane);
        if (gx) {
          const float* wg = wn->value.data() + static_cast<std::size_t>(g) * cin_g * kdim;
          MapMat(xn->ensure_grad().data() + xoff, cin_g, in_plane).noalias() +=
              CMapMat(wg, cin_g, kdim) * dc;
        }
        if (gw) {
          float* dwg = wn->ensure_grad().data() + static_cast<std::size_t>(g) * cin_g * kdim;
          MapMat(dwg, cin_g, kdim).noalias() +=
              CMapMat(xn->value.data() + xoff, cin_g, in_plane) * dc.transpose();
        }
      }
      if (gb) {
        auto& db = bn->ensure_grad();
        for (int c = 0; c < cout; ++c) {
          const float* doc =
              self.grad.data() + (static_cast<std::size_t>(n) * cout + c) * out_plane;
          db[c] += std::accumulate(doc, doc + out_plane, 0.0f);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast s = broadcast_strides(a.shape(), b.shape());
  std::vector<float> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for_each_broadcast(a.shape(), s, [&](std::size_t i, std::size_t j) { out[i] = ad[i] + bd[j]; });
  Node* an = a.node();
  Node* bn = b.node();
  const Shape as = a.shape();
  return make_result(as, std::move(out), {a, b}, [=](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for_each_broadcast(as, s, [&](std::size_t i, std::size_t j) { gb[j] += self.grad[i]; });
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast s = broadcast_strides(a.shape(), b.shape());
  std::vector<float> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for_each_broadcast(a.shape(), s, [&](std::size_t i, std::size_t j) { out[i] = ad[i] * bd[j]; });
  Node* an = a.node();
  Node* bn = b.node();
  const Shape as = a.shape();
  return make_result(as, std::move(out), {a, b}, [=](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for_each_broadcast(as, s, [&](std::size_t i, std::size_t j) {
        ga[i] += self.grad[i] * bn->value[j];
      });
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for_each_broadcast(as, s, [&](std::size_t i, std::size_t j) {
        gb[j] += self.grad[i] * an->value[i];
      });
    }
  });
}

Tensor scale(const Tensor& a, float s) {
  return unary(a, [s](float v) { return v * s; }, [s](float, float) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](float v) { return v / (1.0f + std::exp(-v)); },
      [](float in, float) {
        const float s = 1.0f / (1.0f + std::exp(-in));
        return s * (1.0f + in * (1.0f - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float out) { return out * (1.0f - out); });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat of zero tensors");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require(s.n == os.n && s.h == os.h && s.w == os.w,
            "concat: mismatched " + s.str() + " vs " + parts.front().shape().str());
    os.c += s.c;
  }
  const std::size_t plane = os.plane();
  std::vector<float> out(os.numel());
  std::vector<Node*> nodes;
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    const int pc = p.shape().c;
    for (int n = 0; n < os.n; ++n) {
      const float* src = p.data().data() + static_cast<std::size_t>(n) * pc * plane;
      std::copy(src, src + pc * plane,
                out.data() + (static_cast<std::size_t>(n) * os.c + off) * plane);
    }
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += pc;
  }
  return make_result(os, std::move(out), parts, [=](Node& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      Node* pn = nodes[k];
      if (!pn->requires_grad) continue;
      auto& g = pn->ensure_grad();
      const int pc = pn->shape.c;
      for (int n = 0; n < os.n; ++n) {
        const float* src =
            self.grad.data() + (static_cast<std::size_t>(n) * os.c + offsets[k]) * plane;
        float* dst = g.data() + static_cast<std::size_t>(n) * pc * plane;
        for (std::size_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor slice_channels(const Tensor& x, int start, int count) {
  const Shape xs = x.shape();
  require(start >= 0 && count > 0 && start + count <= xs.c, "slice_channels out of range");
  const Shape os{xs.n, count, xs.h, xs.w};
  const std::size_t plane = xs.plane();
  std::vector<float> out(os.numel());
  for (int n = 0; n < xs.n; ++n) {
    const float* src = x.data().data() + (static_cast<std::size_t>(n) * xs.c + start) * plane;
    std::copy(src, src + count * plane, out.data() + static_cast<std::size_t>(n) * count * plane);
  }
  Node* xn = x.node();
  return make_result(os, std::move(out), {x}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (int n = 0; n < xs.n; ++n) {
      float* dst = g.data() + (static_cast<std::size_t>(n) * xs.c + start) * plane;
      const float* src = self.grad.data() + static_cast<std::size_t>(n) * count * plane;
      for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
}

Tensor channel_shuffle(const Tensor& x, int groups) {
  const Shape xs = x.shape();
  require(groups >= 1 && xs.c % groups == 0, "channel_shuffle: channels not divisible");
  const int per = xs.c / groups;
  const std::size_t plane = xs.plane();
  // Output channel j = i * groups + g takes input channel g * per + i.
  std::vector<int> src_of(xs.c);
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < per; ++i) src_of[i * groups + g] = g * per + i;
  std::vector<float> out(xs.numel());
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const float* src = x.data().data() + (static_cast<std::size_t>(n) * xs.c + src_of[c]) * plane;
      std::copy(src, src + plane, out.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane);
    }
  Node* xn = x.node();
  return make_result(xs, std::move(out), {x}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const float* src = self.grad.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
        float* dst = g.data() + (static_cast<std::size_t>(n) * xs.c + src_of[c]) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  });
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  const Shape xs = x.shape();
  require(r >= 1 && xs.c % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2");
  const Shape os{xs.n, xs.c / (r * r), xs.h * r, xs.w * r};
  // index map: out(n, c, y*r+i, x*r+j) = in(n, c*r*r + i*r + j, y, x)
  std::vector<std::size_t> src(os.numel());
  std::size_t k = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox, ++k) {
          const int ic = c * r * r + (oy % r) * r + (ox % r);
          src[k] = ((static_cast<std::size_t>(n) * xs.c + ic) * xs.h + oy / r) * xs.w + ox / r;
        }
  std::vector<float> out(os.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[src[i]];
  Node* xn = x.node();
  return make_result(os, std::move(out), {x}, [xn, src = std::move(src)](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
  });
}

Tensor upsample_nearest(const Tensor& x, int r) {
  const Shape xs = x.shape();
  require(r >= 1, "upsample factor must be positive");
  const Shape os{xs.n, xs.c, xs.h * r, xs.w * r};
  std::vector<float> out(os.numel());
  const auto xd = x.data();
  std::size_t k = 0;
  for (int nc = 0; nc < xs.n * xs.c; ++nc)
    for (int oy = 0; oy < os.h; ++oy)
      for (int ox = 0; ox < os.w; ++ox, ++k)
        out[k] = xd[(static_cast<std::size_t>(nc) * xs.h + oy / r) * xs.w + ox / r];
  Node* xn = x.node();
  return make_result(os, std::move(out), {x}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    std::size_t k2 = 0;
    for (int nc = 0; nc < xs.n * xs.c; ++nc)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox, ++k2)
          g[(static_cast<std::size_t>(nc) * xs.h + oy / r) * xs.w + ox / r] += self.grad[k2];
  });
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape xs = x.shape();
  const Shape os{xs.n, xs.c, 1, 1};
  const std::size_t plane = xs.plane();
  std::vector<float> out(os.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* p = x.data().data() + i * plane;
    out[i] = std::accumulate(p, p + plane, 0.0f) / static_cast<float>(plane);
  }
  Node* xn = x.node();
  return make_result(os, std::move(out), {x}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const float v = self.grad[i] / static_cast<float>(plane);
      for (std::size_t j = 0; j < plane; ++j) g[i * plane + j] += v;
    }
  });
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad) {
  const Shape xs = x.shape();
  const int oh = conv_out(xs.h, kernel, stride, pad);
  const int ow = conv_out(xs.w, kernel, stride, pad);
  require(oh > 0 && ow > 0, "max_pool2d: empty output");
  const Shape os{xs.n, xs.c, oh, ow};
  std::vector<float> out(os.numel());
  std::vector<std::size_t> arg(os.numel());
  const auto xd = x.data();
  std::size_t k = 0;
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * xs.plane();
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++k) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_i = base;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= xs.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= xs.w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * xs.w + ix;
            if (xd[idx] > best) {
              best = xd[idx];
              best_i = idx;
            }
          }
        }
        out[k] = best;
        arg[k] = best_i;
      }
  }
  Node* xn = x.node();
  return make_result(os, std::move(out), {x}, [xn, arg = std::move(arg)](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape.numel() == x.numel(), "reshape " + x.shape().str() + " -> " + shape.str());
  Node* xn = x.node();
  return make_result(shape, std::vector<float>(x.data().begin(), x.data().end()), {x},
                     [xn](Node& self) {
                       auto& g = xn->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor group_norm(const Tensor& x, int groups, float eps) {
  const Shape xs = x.shape();
  require(groups >= 1 && xs.c % groups == 0, "group_norm: channels not divisible");
  const std::size_t slab = static_cast<std::size_t>(xs.c / groups) * xs.plane();
  const std::size_t slabs = static_cast<std::size_t>(xs.n) * groups;
  std::vector<float> out(x.numel());
  std::vector<float> inv_std(slabs);
  const auto xd = x.data();
  for (std::size_t s = 0; s < slabs; ++s) {
    const float* p = xd.data() + s * slab;
    double mean = 0.0;
    for (std::size_t i = 0; i < slab; ++i) mean += p[i];
    mean /= static_cast<double>(slab);
    double var = 0.0;
    for (std::size_t i = 0; i < slab; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(slab);
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[s] = is;
    for (std::size_t i = 0; i < slab; ++i)
      out[s * slab + i] = static_cast<float>((p[i] - mean) * is);
  }
  Node* xn = x.node();
  return make_result(xs, std::move(out), {x}, [=](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t s = 0; s < slabs; ++s) {
      const float* dy = self.grad.data() + s * slab;
      const float* xh = self.value.data() + s * slab;
      double mdy = 0.0, mdyx = 0.0;
      for (std::size_t i = 0; i < slab; ++i) {
        mdy += dy[i];
        mdyx += dy[i] * xh[i];
      }
      mdy /= static_cast<double>(slab);
      mdyx /= static_cast<double>(slab);
      for (std::size_t i = 0; i < slab; ++i) {
        g[s * slab + i] += static_cast<float>(inv_std[s] * (dy[i] - mdy - xh[i] * mdyx));
      }
    }
  });
}

Tensor mean_all(const Tensor& x) {
  const auto xd = x.data();
  double acc = 0.0;
  for (float v : xd) acc += v;
  const float n = static_cast<float>(x.numel());
  Node* xn = x.node();
  return make_result(Shape{}, {static_cast<float>(acc / n)}, {x}, [xn, n](Node& self) {
    auto& g = xn->ensure_grad();
    const float v = self.grad[0] / n;
    for (float& gi : g) gi += v;
  });
}

Tensor l1_loss(const Tensor& output, const Tensor& reference) {
  require(output.shape() == reference.shape(),
          "l1_loss: " + output.shape().str() + " vs " + reference.shape().str());
  const auto od = output.data();
  const auto rd = reference.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < od.size(); ++i) acc += std::abs(static_cast<double>(od[i]) - rd[i]);
  const float n = static_cast<float>(od.size());
  Node* on = output.node();
  Node* rn = reference.node();
  return make_result(Shape{}, {static_cast<float>(acc / n)}, {output, reference},
                     [on, rn, n](Node& self) {
                       const float g = self.grad[0] / n;
                       for (int side = 0; side < 2; ++side) {
                         Node* target = side == 0 ? on : rn;
                         if (!target->requires_grad) continue;
                         auto& gt = target->ensure_grad();
                         const float sign = side == 0 ? 1.0f : -1.0f;
                         for (std::size_t i = 0; i < gt.size(); ++i) {
                           const float d = on->value[i] - rn->value[i];
                           gt[i] += sign * g * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
                         }
                       }
                     });
}

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<float>& weights) {
  require(terms.size() == weights.size() && !terms.empty(), "weighted_sum arity mismatch");
  float acc = 0.0f;
  std::vector<Node*> nodes;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    acc += weights[i] * terms[i].item();
    nodes.push_back(terms[i].node());
  }
  return make_result(Shape{}, {acc}, terms, [nodes, weights](Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) nodes[i]->ensure_grad()[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace crabsurvey::nn

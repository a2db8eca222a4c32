#include "pasnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pasnet/errors.hpp"

namespace pasnet::ops {
namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using Eigen::Index;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

struct ConvGeom {
  std::size_t n, cin, h, w, cout, k, ho, wo;
  int stride, pad;
  std::size_t col_rows() const { return cin * k * k; }
  std::size_t col_cols() const { return ho * wo; }
};

ConvGeom conv_geom(const Shape& xs, const Shape& ws, int stride, int pad) {
  if (xs.size() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(xs));
  if (ws.size() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,k,k], got " + shape_str(ws));
  if (ws[2] != ws[3]) throw ShapeError("conv2d: kernel must be square, got " + shape_str(ws));
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d: input channels " + std::to_string(xs[1]) + " do not match weight " + shape_str(ws));
  }
  if (stride < 1 || stride > 2) throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  if (pad < 0) throw ShapeError("conv2d: negative padding");
  const std::size_t k = ws[2];
  const std::size_t ph = xs[2] + 2 * static_cast<std::size_t>(pad);
  const std::size_t pw = xs[3] + 2 * static_cast<std::size_t>(pad);
  if (ph < k || pw < k) {
    throw ShapeError("conv2d: padded input " + std::to_string(ph) + "x" + std::to_string(pw) +
                     " smaller than kernel " + std::to_string(k));
  }
  const auto s = static_cast<std::size_t>(stride);
  return ConvGeom{xs[0], xs[1], xs[2], xs[3], ws[0], k, (ph - k) / s + 1, (pw - k) / s + 1, stride, pad};
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

void im2col(const float* x, const ConvGeom& g, float* col) {
  const long h = static_cast<long>(g.h), w = static_cast<long>(g.w);
  const long k = static_cast<long>(g.k);
  const long s = g.stride, p = g.pad;
  const long ho = static_cast<long>(g.ho), wo = static_cast<long>(g.wo);
  for (std::size_t c = 0; c < g.cin; ++c) {
    const float* xc = x + c * g.h * g.w;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx) {
        float* row = col + ((c * g.k + ky) * g.k + kx) * g.col_cols();
        for (long oy = 0; oy < ho; ++oy) {
          const long iy = oy * s - p + ky;
          float* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = xc + iy * w;
          for (long ox = 0; ox < wo; ++ox) {
            const long ix = ox * s - p + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeom& g, float* dx) {
  const long h = static_cast<long>(g.h), w = static_cast<long>(g.w);
  const long k = static_cast<long>(g.k);
  const long s = g.stride, p = g.pad;
  const long ho = static_cast<long>(g.ho), wo = static_cast<long>(g.wo);
  for (std::size_t c = 0; c < g.cin; ++c) {
    float* dxc = dx + c * g.h * g.w;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx) {
        const float* row = col + ((c * g.k + ky) * g.k + kx) * g.col_cols();
        for (long oy = 0; oy < ho; ++oy) {
          const long iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          const float* srcrow = row + oy * wo;
          float* dst = dxc + iy * w;
          for (long ox = 0; ox < wo; ++ox) {
            const long ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) dst[ix] += srcrow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void ensure_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad) {
  const auto g = conv_geom(x, w, stride, pad);
  return {g.n, g.cout, g.ho, g.wo};
}

Tensor conv2d(Graph& graph, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  const auto geo = conv_geom(x.shape(), w.shape(), stride, pad);
  if (bias.defined() && bias.shape() != Shape{geo.cout}) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(geo.cout) + "], got " + shape_str(bias.shape()));
  }
  const Index rows = static_cast<Index>(geo.col_rows());
  const Index cols = static_cast<Index>(geo.col_cols());
  const Index cout = static_cast<Index>(geo.cout);
  const std::size_t in_stride = geo.cin * geo.h * geo.w;
  const std::size_t out_stride = geo.cout * geo.ho * geo.wo;

  Tensor out = Tensor::zeros({geo.n, geo.cout, geo.ho, geo.wo});
  CMapRM wm(w.data().data(), cout, rows);
  std::vector<float> col(is_pointwise(geo) ? 0 : geo.col_rows() * geo.col_cols());
  for (std::size_t n = 0; n < geo.n; ++n) {
    const float* xn = x.data().data() + n * in_stride;
    if (!is_pointwise(geo)) im2col(xn, geo, col.data());
    CMapRM cm(is_pointwise(geo) ? xn : col.data(), rows, cols);
    MapRM om(out.data().data() + n * out_stride, cout, cols);
    om.noalias() = wm * cm;
    if (bias.defined()) {
      for (Index c = 0; c < cout; ++c) om.row(c).array() += bias.data()[static_cast<std::size_t>(c)];
    }
  }
  ensure_finite(out, "conv2d");

  graph.record(out, {x, w, bias}, [x, w, bias, out, geo]() mutable {
    const Index rows = static_cast<Index>(geo.col_rows());
    const Index cols = static_cast<Index>(geo.col_cols());
    const Index cout = static_cast<Index>(geo.cout);
    const std::size_t in_stride = geo.cin * geo.h * geo.w;
    const std::size_t out_stride = geo.cout * geo.ho * geo.wo;
    const bool need_x = x.requires_grad();
    const bool need_w = w.requires_grad();
    const bool need_b = bias.defined() && bias.requires_grad();
    CMapRM wm(w.data().data(), cout, rows);
    std::vector<float> col(is_pointwise(geo) ? 0 : geo.col_rows() * geo.col_cols());
    std::vector<float> dcol(need_x && !is_pointwise(geo) ? geo.col_rows() * geo.col_cols() : 0);
    for (std::size_t n = 0; n < geo.n; ++n) {
      CMapRM dy(out.grad().data() + n * out_stride, cout, cols);
      if (need_b) {
        auto db = bias.grad();
        for (Index c = 0; c < cout; ++c) db[static_cast<std::size_t>(c)] += dy.row(c).sum();
      }
      const float* xn = x.data().data() + n * in_stride;
      if (need_w) {
        if (!is_pointwise(geo)) im2col(xn, geo, col.data());
        CMapRM cm(is_pointwise(geo) ? xn : col.data(), rows, cols);
        MapRM dw(w.grad().data(), cout, rows);
        dw.noalias() += dy * cm.transpose();
      }
      if (need_x) {
        float* dxn = x.grad().data() + n * in_stride;
        if (is_pointwise(geo)) {
          MapRM dx(dxn, rows, cols);
          dx.noalias() += wm.transpose() * dy;
        } else {
          MapRM dc(dcol.data(), rows, cols);
          dc.noalias() = wm.transpose() * dy;
          col2im_add(dcol.data(), geo, dxn);
        }
      }
    }
  });
  return out;
}

Tensor maxpool2d(Graph& graph, const Tensor& x) {
  require_rank(x, 4, "maxpool2d", "input");
  const auto& s = x.shape();
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2d: spatial extents must be even, got " + shape_str(s));
  ensure_finite(x, "maxpool2d");
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out = Tensor::zeros({n, c, ho, wo});
  std::vector<std::size_t> argmax(out.numel());
  const float* xd = x.data().data();
  float* od = out.data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const float* plane = xd + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (auto idx : cand) {
          if (plane[idx] > plane[best]) best = idx;
        }
        const std::size_t o = p * ho * wo + oy * wo + ox;
        od[o] = plane[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  graph.record(out, {x}, [x, out, argmax = std::move(argmax)]() mutable {
    auto dx = x.grad();
    auto dy = out.grad();
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  });
  return out;
}

Tensor relu(Graph& graph, const Tensor& x) {
  ensure_finite(x, "relu");
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
  graph.record(out, {x}, [x, out]() mutable {
    auto xd = x.data();
    auto dx = x.grad();
    auto dy = out.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (xd[i] > 0.0f) dx[i] += dy[i];
    }
  });
  return out;
}

RunningStats RunningStats::init(std::size_t channels) {
  return RunningStats{Tensor::zeros({channels}), Tensor::full({channels}, 1.0f)};
}

Tensor batchnorm2d(Graph& graph, const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                   bool training) {
  require_rank(x, 4, "batchnorm2d", "input");
  const auto& s = x.shape();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  const Shape cshape{c};
  if (gamma.shape() != cshape || beta.shape() != cshape || stats.mean.shape() != cshape ||
      stats.var.shape() != cshape) {
    throw ShapeError("batchnorm2d: per-channel parameters must be [" + std::to_string(c) + "]");
  }
  const std::size_t m = n * hw;
  std::vector<float> mean(c), inv_std(c);
  const float* xd = x.data().data();
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const float* p = xd + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const float* p = xd + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean[ch] = static_cast<float>(mu);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      auto rm = stats.mean.data();
      auto rv = stats.var.data();
      rm[ch] = (1.0f - kBatchNormMomentum) * rm[ch] + kBatchNormMomentum * static_cast<float>(mu);
      rv[ch] = (1.0f - kBatchNormMomentum) * rv[ch] + kBatchNormMomentum * static_cast<float>(unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean.data()[ch];
      inv_std[ch] = 1.0f / std::sqrt(stats.var.data()[ch] + kBatchNormEps);
    }
  }

  Tensor out = Tensor::zeros(s);
  float* od = out.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* p = xd + (b * c + ch) * hw;
      float* q = od + (b * c + ch) * hw;
      const float gm = gamma.data()[ch], bt = beta.data()[ch];
      for (std::size_t i = 0; i < hw; ++i) q[i] = gm * ((p[i] - mean[ch]) * inv_std[ch]) + bt;
    }
  }
  ensure_finite(out, "batchnorm2d");

  graph.record(out, {x, gamma, beta},
               [x, gamma, beta, out, mean = std::move(mean), inv_std = std::move(inv_std), training, n, c, hw,
                m]() mutable {
                 const float* xd = x.data().data();
                 const float* dy = out.grad().data();
                 std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                 for (std::size_t b = 0; b < n; ++b) {
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     const float* p = xd + (b * c + ch) * hw;
                     const float* d = dy + (b * c + ch) * hw;
                     for (std::size_t i = 0; i < hw; ++i) {
                       sum_dy[ch] += d[i];
                       sum_dy_xhat[ch] += static_cast<double>(d[i]) * ((p[i] - mean[ch]) * inv_std[ch]);
                     }
                   }
                 }
                 if (gamma.requires_grad()) {
                   auto dg = gamma.grad();
                   for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<float>(sum_dy_xhat[ch]);
                 }
                 if (beta.requires_grad()) {
                   auto db = beta.grad();
                   for (std::size_t ch = 0; ch < c; ++ch) db[ch] += static_cast<float>(sum_dy[ch]);
                 }
                 if (!x.requires_grad()) return;
                 float* dx = x.grad().data();
                 const double inv_m = 1.0 / static_cast<double>(m);
                 for (std::size_t b = 0; b < n; ++b) {
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     const float* p = xd + (b * c + ch) * hw;
                     const float* d = dy + (b * c + ch) * hw;
                     float* q = dx + (b * c + ch) * hw;
                     const double k = static_cast<double>(gamma.data()[ch]) * inv_std[ch];
                     if (training) {
                       const double mdy = sum_dy[ch] * inv_m;
                       const double mdyx = sum_dy_xhat[ch] * inv_m;
                       for (std::size_t i = 0; i < hw; ++i) {
                         const double xhat = (p[i] - mean[ch]) * inv_std[ch];
                         q[i] += static_cast<float>(k * (d[i] - mdy - xhat * mdyx));
                       }
                     } else {
                       for (std::size_t i = 0; i < hw; ++i) q[i] += static_cast<float>(k * d[i]);
                     }
                   }
                 }
               });
  return out;
}

Tensor add(Graph& graph, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  ensure_finite(out, "add");
  graph.record(out, {a, b}, [a, b, out]() mutable {
    auto dy = out.grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto d = t->grad();
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
  return out;
}

Tensor mul(Graph& graph, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  ensure_finite(out, "mul");
  graph.record(out, {a, b}, [a, b, out]() mutable {
    auto dy = out.grad();
    if (a.requires_grad()) {
      auto da = a.grad();
      auto bd = b.data();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto db = b.grad();
      auto ad = a.data();
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * ad[i];
    }
  });
  return out;
}

Tensor scale(Graph& graph, const Tensor& x, float factor) {
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * factor;
  ensure_finite(out, "scale");
  graph.record(out, {x}, [x, out, factor]() mutable {
    auto dy = out.grad();
    auto dx = x.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
  });
  return out;
}

Tensor sum(Graph& graph, const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  ensure_finite(out, "sum");
  graph.record(out, {x}, [x, out]() mutable {
    const float dy = out.grad()[0];
    for (float& d : x.grad()) d += dy;
  });
  return out;
}

Tensor concat_channels(Graph& graph, const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels", "a");
  require_rank(b, 4, "concat_channels", "b");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw ShapeError("concat_channels: N/H/W mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t n = sa[0], hw = sa[2] * sa[3];
  const std::size_t ca = sa[1] * hw, cb = sb[1] * hw;
  Tensor out = Tensor::zeros({n, sa[1] + sb[1], sa[2], sa[3]});
  float* od = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca, ca, od + i * (ca + cb));
    std::copy_n(b.data().data() + i * cb, cb, od + i * (ca + cb) + ca);
  }
  graph.record(out, {a, b}, [a, b, out, n, ca, cb]() mutable {
    const float* dy = out.grad().data();
    if (a.requires_grad()) {
      float* da = a.grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        const float* src = dy + i * (ca + cb);
        for (std::size_t j = 0; j < ca; ++j) da[i * ca + j] += src[j];
      }
    }
    if (b.requires_grad()) {
      float* db = b.grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        const float* src = dy + i * (ca + cb) + ca;
        for (std::size_t j = 0; j < cb; ++j) db[i * cb + j] += src[j];
      }
    }
  });
  return out;
}

Tensor upsample_nearest2x(Graph& graph, const Tensor& x) {
  require_rank(x, 4, "upsample_nearest2x", "input");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor out = Tensor::zeros({s[0], s[1], 2 * h, 2 * w});
  const float* xd = x.data().data();
  float* od = out.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      const float* src = xd + p * h * w + (y / 2) * w;
      float* dst = od + p * 4 * h * w + y * 2 * w;
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
    }
  }
  graph.record(out, {x}, [x, out, planes, h, w]() mutable {
    const float* dy = out.grad().data();
    float* dx = x.grad().data();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        const float* src = dy + p * 4 * h * w + y * 2 * w;
        float* dst = dx + p * h * w + (y / 2) * w;
        for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
      }
    }
  });
  return out;
}

Tensor global_avg_pool(Graph& graph, const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], hw = s[2] * s[3];
  Tensor out = Tensor::zeros({s[0], s[1]});
  const float* xd = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += xd[p * hw + i];
    out.data()[p] = static_cast<float>(acc / static_cast<double>(hw));
  }
  graph.record(out, {x}, [x, out, planes, hw]() mutable {
    const float* dy = out.grad().data();
    float* dx = x.grad().data();
    const float inv = 1.0f / static_cast<float>(hw);
    for (std::size_t p = 0; p < planes; ++p) {
      const float g = dy[p] * inv;
      for (std::size_t i = 0; i < hw; ++i) dx[p * hw + i] += g;
    }
  });
  return out;
}

Tensor linear(Graph& graph, const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  if (w.dim(1) != din) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{dout}) {
    throw ShapeError("linear: bias must be [" + std::to_string(dout) + "], got " + shape_str(bias.shape()));
  }
  const auto N = static_cast<Index>(n), I = static_cast<Index>(din), O = static_cast<Index>(dout);
  Tensor out = Tensor::zeros({n, dout});
  MapRM om(out.data().data(), N, O);
  om.noalias() = CMapRM(x.data().data(), N, I) * CMapRM(w.data().data(), O, I).transpose();
  if (bias.defined()) {
    for (Index r = 0; r < N; ++r) {
      for (Index c = 0; c < O; ++c) om(r, c) += bias.data()[static_cast<std::size_t>(c)];
    }
  }
  ensure_finite(out, "linear");
  graph.record(out, {x, w, bias}, [x, w, bias, out, N, I, O]() mutable {
    CMapRM dy(out.grad().data(), N, O);
    if (x.requires_grad()) {
      MapRM(x.grad().data(), N, I).noalias() += dy * CMapRM(w.data().data(), O, I);
    }
    if (w.requires_grad()) {
      MapRM(w.grad().data(), O, I).noalias() += dy.transpose() * CMapRM(x.data().data(), N, I);
    }
    if (bias.defined() && bias.requires_grad()) {
      auto db = bias.grad();
      for (Index c = 0; c < O; ++c) db[static_cast<std::size_t>(c)] += dy.col(c).sum();
    }
  });
  return out;
}

}  // namespace pasnet::ops

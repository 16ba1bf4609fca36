#include "seatnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "gemm.hpp"
#include "seatnet/error.hpp"

namespace seatnet::ops {

namespace {

using std::size_t;
using std::ptrdiff_t;

void require_rank(const Tensor& t, size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail(ErrorCode::kShapeMismatch, std::string(what) + " must have rank " +
                                        std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kShapeMismatch,
         std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Output positions o in [lo, hi) whose input index o * stride + offset lies in
// [0, in).
struct Range {
  size_t lo;
  size_t hi;
};

Range valid_range(ptrdiff_t offset, size_t in, size_t out, size_t stride) {
  const auto s = static_cast<ptrdiff_t>(stride);
  ptrdiff_t lo = offset < 0 ? (-offset + s - 1) / s : 0;
  const ptrdiff_t last = static_cast<ptrdiff_t>(in) - 1 - offset;
  ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
  hi = std::min<ptrdiff_t>(hi, static_cast<ptrdiff_t>(out));
  lo = std::min(lo, hi);
  return {static_cast<size_t>(lo), static_cast<size_t>(hi)};
}

struct ConvDims {
  size_t batch, in_c, in_h, in_w, out_c, k_h, k_w;
  ConvGeometry geo;
  size_t patch() const { return in_c * k_h * k_w; }
  size_t out_plane() const { return geo.out_h * geo.out_w; }
  bool pointwise(size_t stride) const {
    return k_h == 1 && k_w == 1 && stride == 1 && geo.pad_top == 0 && geo.pad_left == 0;
  }
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, size_t stride, Padding padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1) fail(ErrorCode::kConfig, "conv2d stride must be >= 1");
  if (input.dim(1) != kernel.dim(1)) {
    fail(ErrorCode::kShapeMismatch, "conv2d input channels (dim 1 of input) = " +
                                        std::to_string(input.dim(1)) +
                                        " but kernel input channels (dim 1 of kernel) = " +
                                        std::to_string(kernel.dim(1)));
  }
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
             kernel.dim(0), kernel.dim(2), kernel.dim(3), {}};
  d.geo = conv_geometry(d.in_h, d.in_w, d.k_h, d.k_w, stride, padding);
  return d;
}

// col is (C * Kh * Kw) x (OH * OW) for one image.
void im2col(const float* x, const ConvDims& d, size_t stride, float* col) {
  const size_t oh_n = d.geo.out_h, ow_n = d.geo.out_w;
  size_t row = 0;
  for (size_t c = 0; c < d.in_c; ++c) {
    const float* plane = x + c * d.in_h * d.in_w;
    for (size_t kh = 0; kh < d.k_h; ++kh) {
      const auto off_h = static_cast<ptrdiff_t>(kh) - static_cast<ptrdiff_t>(d.geo.pad_top);
      const Range rh = valid_range(off_h, d.in_h, oh_n, stride);
      for (size_t kw = 0; kw < d.k_w; ++kw, ++row) {
        const auto off_w = static_cast<ptrdiff_t>(kw) - static_cast<ptrdiff_t>(d.geo.pad_left);
        const Range rw = valid_range(off_w, d.in_w, ow_n, stride);
        float* dst = col + row * oh_n * ow_n;
        std::memset(dst, 0, oh_n * ow_n * sizeof(float));
        for (size_t oh = rh.lo; oh < rh.hi; ++oh) {
          const float* src = plane + (oh * stride + off_h) * d.in_w;
          float* drow = dst + oh * ow_n;
          for (size_t ow = rw.lo; ow < rw.hi; ++ow) drow[ow] = src[ow * stride + off_w];
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvDims& d, size_t stride, float* x) {
  const size_t oh_n = d.geo.out_h, ow_n = d.geo.out_w;
  size_t row = 0;
  for (size_t c = 0; c < d.in_c; ++c) {
    float* plane = x + c * d.in_h * d.in_w;
    for (size_t kh = 0; kh < d.k_h; ++kh) {
      const auto off_h = static_cast<ptrdiff_t>(kh) - static_cast<ptrdiff_t>(d.geo.pad_top);
      const Range rh = valid_range(off_h, d.in_h, oh_n, stride);
      for (size_t kw = 0; kw < d.k_w; ++kw, ++row) {
        const auto off_w = static_cast<ptrdiff_t>(kw) - static_cast<ptrdiff_t>(d.geo.pad_left);
        const Range rw = valid_range(off_w, d.in_w, ow_n, stride);
        const float* src = col + row * oh_n * ow_n;
        for (size_t oh = rh.lo; oh < rh.hi; ++oh) {
          float* drow = plane + (oh * stride + off_h) * d.in_w;
          const float* srow = src + oh * ow_n;
          for (size_t ow = rw.lo; ow < rw.hi; ++ow) drow[ow * stride + off_w] += srow[ow];
        }
      }
    }
  }
}

}  // namespace

ConvGeometry conv_geometry(size_t in_h, size_t in_w, size_t k_h, size_t k_w, size_t stride,
                           Padding padding) {
  ConvGeometry g;
  if (padding == Padding::kValid) {
    if (in_h < k_h || in_w < k_w) {
      fail(ErrorCode::kShapeMismatch, "input " + std::to_string(in_h) + "x" +
                                          std::to_string(in_w) + " smaller than kernel " +
                                          std::to_string(k_h) + "x" + std::to_string(k_w) +
                                          " under valid padding");
    }
    g.out_h = (in_h - k_h) / stride + 1;
    g.out_w = (in_w - k_w) / stride + 1;
    return g;
  }
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const size_t need_h = (g.out_h - 1) * stride + k_h;
  const size_t need_w = (g.out_w - 1) * stride + k_w;
  g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
  g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
  return g;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, size_t stride,
              Padding padding) {
  const ConvDims d = conv_dims(input, kernel, stride, padding);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != d.out_c)) {
    fail(ErrorCode::kShapeMismatch, "conv2d bias length " + std::to_string(bias.size()) +
                                        " but kernel output channels = " +
                                        std::to_string(d.out_c));
  }
  Tensor out({d.batch, d.out_c, d.geo.out_h, d.geo.out_w});
  const size_t plane = d.out_plane();
  const bool pointwise = d.pointwise(stride);
  std::vector<float> col(pointwise ? 0 : d.patch() * plane);
  const size_t in_img = d.in_c * d.in_h * d.in_w;
  for (size_t n = 0; n < d.batch; ++n) {
    const float* x = input.ptr() + n * in_img;
    const float* cols = x;
    if (!pointwise) {
      im2col(x, d, stride, col.data());
      cols = col.data();
    }
    float* y = out.ptr() + n * d.out_c * plane;
    detail::gemm_nn(d.out_c, plane, d.patch(), kernel.ptr(), cols, y, false);
    if (!bias.empty()) {
      for (size_t o = 0; o < d.out_c; ++o) {
        const float b = bias[o];
        float* row = y + o * plane;
        for (size_t p = 0; p < plane; ++p) row[p] += b;
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, bool has_bias,
                            size_t stride, Padding padding, const Tensor& grad_out,
                            bool need_input_grad) {
  const ConvDims d = conv_dims(input, kernel, stride, padding);
  const Shape expect{d.batch, d.out_c, d.geo.out_h, d.geo.out_w};
  if (grad_out.shape() != expect) {
    fail(ErrorCode::kShapeMismatch, "conv2d grad_out " + shape_str(grad_out.shape()) +
                                        " vs output " + shape_str(expect));
  }
  Conv2dGrads g{need_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(kernel.shape()), {}};
  const size_t plane = d.out_plane();
  const size_t patch = d.patch();
  const bool pointwise = d.pointwise(stride);
  std::vector<float> col(pointwise ? 0 : patch * plane);
  std::vector<float> dcol(pointwise || !need_input_grad ? 0 : patch * plane);
  const size_t in_img = d.in_c * d.in_h * d.in_w;
  for (size_t n = 0; n < d.batch; ++n) {
    const float* x = input.ptr() + n * in_img;
    const float* dy = grad_out.ptr() + n * d.out_c * plane;
    const float* cols = x;
    if (!pointwise) {
      im2col(x, d, stride, col.data());
      cols = col.data();
    }
    // dK (O x patch) += dY (O x P) * cols^T
    detail::gemm_nt(d.out_c, patch, plane, dy, cols, g.kernel.ptr(), true);
    // dcols (patch x P) = K^T * dY
    if (!need_input_grad) continue;
    float* dx = g.input.ptr() + n * in_img;
    if (pointwise) {
      detail::gemm_tn(patch, plane, d.out_c, kernel.ptr(), dy, dx, false);
    } else {
      detail::gemm_tn(patch, plane, d.out_c, kernel.ptr(), dy, dcol.data(), false);
      col2im_add(dcol.data(), d, stride, dx);
    }
  }
  if (has_bias) {
    g.bias = Tensor({d.out_c});
    for (size_t o = 0; o < d.out_c; ++o) {
      double acc = 0.0;
      for (size_t n = 0; n < d.batch; ++n) {
        const float* row = grad_out.ptr() + (n * d.out_c + o) * plane;
        for (size_t p = 0; p < plane; ++p) acc += row[p];
      }
      g.bias[o] = static_cast<float>(acc);
    }
  }
  return g;
}

namespace {

ConvDims depthwise_dims(const Tensor& input, const Tensor& kernel, size_t stride,
                        Padding padding) {
  require_rank(input, 4, "depthwise input");
  require_rank(kernel, 4, "depthwise kernel");
  if (stride < 1) fail(ErrorCode::kConfig, "depthwise stride must be >= 1");
  if (kernel.dim(0) != input.dim(1) || kernel.dim(1) != 1) {
    fail(ErrorCode::kShapeMismatch, "depthwise input channels (dim 1 of input) = " +
                                        std::to_string(input.dim(1)) +
                                        " but kernel channels (dim 0 of kernel) = " +
                                        std::to_string(kernel.dim(0)) + " with kernel shape " +
                                        shape_str(kernel.shape()));
  }
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
             input.dim(1), kernel.dim(2), kernel.dim(3), {}};
  d.geo = conv_geometry(d.in_h, d.in_w, d.k_h, d.k_w, stride, padding);
  return d;
}

// Visits every (output index, input index, tap) triple of one channel plane.
template <typename F>
void for_each_tap(const ConvDims& d, size_t stride, F&& f) {
  for (size_t kh = 0; kh < d.k_h; ++kh) {
    const auto off_h = static_cast<ptrdiff_t>(kh) - static_cast<ptrdiff_t>(d.geo.pad_top);
    const Range rh = valid_range(off_h, d.in_h, d.geo.out_h, stride);
    for (size_t kw = 0; kw < d.k_w; ++kw) {
      const auto off_w = static_cast<ptrdiff_t>(kw) - static_cast<ptrdiff_t>(d.geo.pad_left);
      const Range rw = valid_range(off_w, d.in_w, d.geo.out_w, stride);
      for (size_t oh = rh.lo; oh < rh.hi; ++oh) {
        const size_t in_row = (oh * stride + off_h) * d.in_w;
        f(kh * d.k_w + kw, oh * d.geo.out_w, in_row, rw.lo, rw.hi, off_w);
      }
    }
  }
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, size_t stride,
                        Padding padding) {
  const ConvDims d = depthwise_dims(input, kernel, stride, padding);
  Tensor out({d.batch, d.in_c, d.geo.out_h, d.geo.out_w});
  const size_t in_plane = d.in_h * d.in_w;
  const size_t out_plane = d.out_plane();
  const size_t taps = d.k_h * d.k_w;
  for (size_t n = 0; n < d.batch; ++n) {
    for (size_t c = 0; c < d.in_c; ++c) {
      const float* x = input.ptr() + (n * d.in_c + c) * in_plane;
      float* y = out.ptr() + (n * d.in_c + c) * out_plane;
      const float* w = kernel.ptr() + c * taps;
      for_each_tap(d, stride,
                   [&](size_t tap, size_t out_row, size_t in_row, size_t lo, size_t hi,
                       ptrdiff_t off_w) {
                     const float wv = w[tap];
                     float* __restrict yr = y + out_row;
                     const float* xr = x + in_row + off_w;
                     if (stride == 1) {
                       for (size_t ow = lo; ow < hi; ++ow) yr[ow] += wv * xr[ow];
                     } else {
                       for (size_t ow = lo; ow < hi; ++ow) yr[ow] += wv * xr[ow * stride];
                     }
                   });
    }
  }
  return out;
}

DepthwiseGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                         size_t stride, Padding padding,
                                         const Tensor& grad_out) {
  const ConvDims d = depthwise_dims(input, kernel, stride, padding);
  const Shape expect{d.batch, d.in_c, d.geo.out_h, d.geo.out_w};
  if (grad_out.shape() != expect) {
    fail(ErrorCode::kShapeMismatch, "depthwise grad_out " + shape_str(grad_out.shape()) +
                                        " vs output " + shape_str(expect));
  }
  DepthwiseGrads g{Tensor(input.shape()), Tensor(kernel.shape())};
  const size_t in_plane = d.in_h * d.in_w;
  const size_t out_plane = d.out_plane();
  const size_t taps = d.k_h * d.k_w;
  std::vector<double> dw(taps);
  for (size_t c = 0; c < d.in_c; ++c) {
    std::fill(dw.begin(), dw.end(), 0.0);
    const float* w = kernel.ptr() + c * taps;
    for (size_t n = 0; n < d.batch; ++n) {
      const float* x = input.ptr() + (n * d.in_c + c) * in_plane;
      float* dx = g.input.ptr() + (n * d.in_c + c) * in_plane;
      const float* dy = grad_out.ptr() + (n * d.in_c + c) * out_plane;
      for_each_tap(d, stride,
                   [&](size_t tap, size_t out_row, size_t in_row, size_t lo, size_t hi,
                       ptrdiff_t off_w) {
                     const float wv = w[tap];
                     const float* dyr = dy + out_row;
                     const float* xr = x + in_row + off_w;
                     float* dxr = dx + in_row + off_w;
                     float acc = 0.0f;
                     for (size_t ow = lo; ow < hi; ++ow) {
                       acc += dyr[ow] * xr[ow * stride];
                       dxr[ow * stride] += wv * dyr[ow];
                     }
                     dw[tap] += acc;
                   });
    }
    for (size_t t = 0; t < taps; ++t) g.kernel[c * taps + t] = static_cast<float>(dw[t]);
  }
  return g;
}

BatchNormResult batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const Tensor& running_mean, const Tensor& running_var, Mode mode,
                           float epsilon, float stat_momentum) {
  if (!(epsilon > 0.0f)) fail(ErrorCode::kConfig, "batch_norm epsilon must be > 0");
  require_rank(input, 4, "batch_norm input");
  const size_t batch = input.dim(0), channels = input.dim(1);
  const size_t plane = input.dim(2) * input.dim(3);
  for (const Tensor* t : {&gamma, &beta, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != channels) {
      fail(ErrorCode::kShapeMismatch, "batch_norm parameter length " +
                                          std::to_string(t->size()) +
                                          " but input channels = " + std::to_string(channels));
    }
  }
  BatchNormResult r{Tensor(input.shape()), Tensor({channels}), Tensor({channels}),
                    running_mean, running_var};
  const double count = static_cast<double>(batch * plane);
  for (size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (size_t n = 0; n < batch; ++n) {
        const float* x = input.ptr() + (n * channels + c) * plane;
        for (size_t p = 0; p < plane; ++p) sum += x[p];
      }
      mean = sum / count;
      double sq = 0.0;
      for (size_t n = 0; n < batch; ++n) {
        const float* x = input.ptr() + (n * channels + c) * plane;
        for (size_t p = 0; p < plane; ++p) {
          const double dv = x[p] - mean;
          sq += dv * dv;
        }
      }
      var = sq / count;
      r.updated_running_mean[c] = static_cast<float>(
          stat_momentum * static_cast<double>(running_mean[c]) + (1.0 - stat_momentum) * mean);
      r.updated_running_var[c] = static_cast<float>(
          stat_momentum * static_cast<double>(running_var[c]) + (1.0 - stat_momentum) * var);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    r.mean[c] = static_cast<float>(mean);
    r.inv_std[c] = static_cast<float>(inv_std);
    const double scale = gamma[c] * inv_std;
    const double shift = beta[c] - mean * scale;
    for (size_t n = 0; n < batch; ++n) {
      const float* x = input.ptr() + (n * channels + c) * plane;
      float* y = r.output.ptr() + (n * channels + c) * plane;
      for (size_t p = 0; p < plane; ++p) y[p] = static_cast<float>(x[p] * scale + shift);
    }
  }
  return r;
}

BatchNormGrads batch_norm_backward(const Tensor& input, const Tensor& gamma,
                                   const BatchNormResult& forward, Mode mode,
                                   const Tensor& grad_out) {
  require_same_shape(input, grad_out, "batch_norm grad_out");
  const size_t batch = input.dim(0), channels = input.dim(1);
  const size_t plane = input.dim(2) * input.dim(3);
  BatchNormGrads g{Tensor(input.shape()), Tensor({channels}), Tensor({channels})};
  const double count = static_cast<double>(batch * plane);
  for (size_t c = 0; c < channels; ++c) {
    const double mean = forward.mean[c];
    const double inv_std = forward.inv_std[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (size_t n = 0; n < batch; ++n) {
      const float* x = input.ptr() + (n * channels + c) * plane;
      const float* dy = grad_out.ptr() + (n * channels + c) * plane;
      for (size_t p = 0; p < plane; ++p) {
        sum_dy += dy[p];
        sum_dy_xhat += dy[p] * (x[p] - mean) * inv_std;
      }
    }
    g.gamma[c] = static_cast<float>(sum_dy_xhat);
    g.beta[c] = static_cast<float>(sum_dy);
    const double gi = gamma[c] * inv_std;
    for (size_t n = 0; n < batch; ++n) {
      const float* x = input.ptr() + (n * channels + c) * plane;
      const float* dy = grad_out.ptr() + (n * channels + c) * plane;
      float* dx = g.input.ptr() + (n * channels + c) * plane;
      if (mode == Mode::kTrain) {
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (size_t p = 0; p < plane; ++p) {
          const double xhat = (x[p] - mean) * inv_std;
          dx[p] = static_cast<float>(gi * (dy[p] - mean_dy - xhat * mean_dy_xhat));
        }
      } else {
        for (size_t p = 0; p < plane; ++p) dx[p] = static_cast<float>(gi * dy[p]);
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor relu6(const Tensor& input) {
  Tensor out(input.shape());
  for (size_t i = 0; i < input.size(); ++i) out[i] = std::clamp(input[i], 0.0f, 6.0f);
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(input, grad_out, "relu grad_out");
  Tensor g(input.shape());
  for (size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0f ? grad_out[i] : 0.0f;
  return g;
}

Tensor relu6_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(input, grad_out, "relu6 grad_out");
  Tensor g(input.shape());
  for (size_t i = 0; i < input.size(); ++i) {
    g[i] = (input[i] > 0.0f && input[i] < 6.0f) ? grad_out[i] : 0.0f;
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  for (size_t i = 0; i < input.size(); ++i) {
    const double x = input[i];
    double s;
    if (x >= 0) {
      s = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      s = e / (1.0 + e);
    }
    out[i] = static_cast<float>(s);
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
  require_same_shape(output, grad_out, "sigmoid grad_out");
  Tensor g(output.shape());
  for (size_t i = 0; i < output.size(); ++i) {
    const double s = output[i];
    g[i] = static_cast<float>(grad_out[i] * s * (1.0 - s));
  }
  return g;
}

DropoutResult dropout(const Tensor& input, float rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    fail(ErrorCode::kConfig, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kInfer || rate == 0.0f) {
    return {input, Tensor(input.shape(), 1.0f)};
  }
  DropoutResult r{Tensor(input.shape()), Tensor(input.shape())};
  const float keep_scale = 1.0f / (1.0f - rate);
  for (size_t i = 0; i < input.size(); ++i) {
    const bool drop = rng.uniform() < static_cast<double>(rate);
    r.scale[i] = drop ? 0.0f : keep_scale;
    r.output[i] = input[i] * r.scale[i];
  }
  return r;
}

Tensor dropout_backward(const DropoutResult& forward, const Tensor& grad_out) {
  require_same_shape(forward.scale, grad_out, "dropout grad_out");
  Tensor g(grad_out.shape());
  for (size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * forward.scale[i];
  return g;
}

MaxPoolResult global_max_pool(const Tensor& input) {
  require_rank(input, 4, "global_max_pool input");
  const size_t bc = input.dim(0) * input.dim(1);
  const size_t plane = input.dim(2) * input.dim(3);
  MaxPoolResult r{Tensor({input.dim(0), input.dim(1)}), std::vector<size_t>(bc)};
  for (size_t i = 0; i < bc; ++i) {
    const float* x = input.ptr() + i * plane;
    size_t best = 0;
    for (size_t p = 1; p < plane; ++p) {
      if (x[p] > x[best]) best = p;
    }
    r.output[i] = x[best];
    r.argmax[i] = i * plane + best;
  }
  return r;
}

Tensor global_max_pool_backward(const Shape& input_shape, const MaxPoolResult& forward,
                                const Tensor& grad_out) {
  require_same_shape(forward.output, grad_out, "global_max_pool grad_out");
  Tensor g(input_shape);
  for (size_t i = 0; i < forward.argmax.size(); ++i) g[forward.argmax[i]] += grad_out[i];
  return g;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  if (input.dim(1) != weights.dim(1)) {
    fail(ErrorCode::kShapeMismatch, "dense input features (dim 1 of input) = " +
                                        std::to_string(input.dim(1)) +
                                        " but weights F_in (dim 1 of weights) = " +
                                        std::to_string(weights.dim(1)));
  }
  const size_t batch = input.dim(0), f_in = input.dim(1), f_out = weights.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != f_out) {
    fail(ErrorCode::kShapeMismatch, "dense bias length " + std::to_string(bias.size()) +
                                        " but weights F_out = " + std::to_string(f_out));
  }
  Tensor out({batch, f_out});
  for (size_t b = 0; b < batch; ++b) {
    for (size_t o = 0; o < f_out; ++o) {
      double acc = bias[o];
      for (size_t i = 0; i < f_in; ++i) {
        acc += static_cast<double>(weights[o * f_in + i]) * input[b * f_in + i];
      }
      out[b * f_out + o] = static_cast<float>(acc);
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
  const size_t batch = input.dim(0), f_in = input.dim(1), f_out = weights.dim(0);
  if (grad_out.shape() != Shape{batch, f_out}) {
    fail(ErrorCode::kShapeMismatch, "dense grad_out " + shape_str(grad_out.shape()));
  }
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({f_out})};
  for (size_t b = 0; b < batch; ++b) {
    for (size_t i = 0; i < f_in; ++i) {
      double acc = 0.0;
      for (size_t o = 0; o < f_out; ++o) {
        acc += static_cast<double>(weights[o * f_in + i]) * grad_out[b * f_out + o];
      }
      g.input[b * f_in + i] = static_cast<float>(acc);
    }
  }
  for (size_t o = 0; o < f_out; ++o) {
    double db = 0.0;
    for (size_t b = 0; b < batch; ++b) db += grad_out[b * f_out + o];
    g.bias[o] = static_cast<float>(db);
    for (size_t i = 0; i < f_in; ++i) {
      double acc = 0.0;
      for (size_t b = 0; b < batch; ++b) {
        acc += static_cast<double>(grad_out[b * f_out + o]) * input[b * f_in + i];
      }
      g.weights[o * f_in + i] = static_cast<float>(acc);
    }
  }
  return g;
}

namespace {
void check_bce_inputs(const Tensor& prob, const Tensor& label) {
  require_same_shape(prob, label, "bce_loss probabilities vs labels");
  for (size_t i = 0; i < label.size(); ++i) {
    if (label[i] != 0.0f && label[i] != 1.0f) {
      fail(ErrorCode::kData, "bce_loss label at index " + std::to_string(i) + " is " +
                                 std::to_string(label[i]) + ", expected 0 or 1");
    }
  }
}
}  // namespace

double bce_loss(const Tensor& prob, const Tensor& label, double clamp, double positive_weight) {
  check_bce_inputs(prob, label);
  double total = 0.0;
  for (size_t i = 0; i < prob.size(); ++i) {
    const double p = std::clamp(static_cast<double>(prob[i]), clamp, 1.0 - clamp);
    total += label[i] == 1.0f ? -positive_weight * std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(prob.size());
}

Tensor bce_loss_backward(const Tensor& prob, const Tensor& label, double grad_out,
                         double clamp, double positive_weight) {
  check_bce_inputs(prob, label);
  Tensor g(prob.shape());
  const double scale = grad_out / static_cast<double>(prob.size());
  for (size_t i = 0; i < prob.size(); ++i) {
    const double p = prob[i];
    if (p < clamp || p > 1.0 - clamp) continue;
    const double d = label[i] == 1.0f ? -positive_weight / p : 1.0 / (1.0 - p);
    g[i] = static_cast<float>(scale * d);
  }
  return g;
}

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                       OptimizerState& state) {
  if (params.size() != grads.size()) {
    fail(ErrorCode::kShapeMismatch, "sgd step: " + std::to_string(params.size()) +
                                        " parameters but " + std::to_string(grads.size()) +
                                        " gradients");
  }
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const Tensor* p : params) state.velocity.emplace_back(p->shape());
  }
  if (state.velocity.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "sgd step: optimizer tracks " +
                                        std::to_string(state.velocity.size()) +
                                        " parameters, got " + std::to_string(params.size()));
  }
  const float lr = state.learning_rate, mu = state.momentum;
  for (size_t t = 0; t < params.size(); ++t) {
    Tensor& w = *params[t];
    const Tensor& g = *grads[t];
    Tensor& v = state.velocity[t];
    if (w.shape() != g.shape() || w.shape() != v.shape()) {
      fail(ErrorCode::kShapeMismatch, "sgd step parameter " + std::to_string(t) + ": weight " +
                                          shape_str(w.shape()) + ", gradient " +
                                          shape_str(g.shape()) + ", velocity " +
                                          shape_str(v.shape()));
    }
    for (size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] - lr * g[i];
      w[i] += v[i];
    }
  }
}

}  // namespace seatnet::ops

#include "rsnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rsnet {

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

void check_conv_args(const Tensor& input, const ConvParams& params,
                     const char* who) {
  const int k = params.kernel();
  if (k != 1 && k != 3)
    throw ShapeError(std::string(who) + ": kernel must be 1 or 3, got " +
                     std::to_string(k));
  if (params.stride != 1 && params.stride != 2)
    throw ShapeError(std::string(who) + ": stride must be 1 or 2, got " +
                     std::to_string(params.stride));
  if (input.c() != params.in_channels())
    throw ShapeError(std::string(who) + ": channel axis mismatch, input C=" +
                     std::to_string(input.c()) + " but weights expect C_in=" +
                     std::to_string(params.in_channels()));
  if (params.weights.h() != params.weights.w())
    throw ShapeError(std::string(who) + ": non-square kernel");
  if (static_cast<int>(params.bias.size()) != params.filters())
    throw ShapeError(std::string(who) + ": bias axis mismatch, " +
                     std::to_string(params.bias.size()) + " biases for " +
                     std::to_string(params.filters()) + " filters");
}

Tensor conv2d_impl(const Tensor& input, const ConvParams& params) {
  check_conv_args(input, params, "conv2d");
  const int k = params.kernel();
  const int s = params.stride;
  const int p = params.padding;
  const int h_in = input.h();
  const int w_in = input.w();
  const int c_in = input.c();
  const int h_out = ops::conv_out_size(h_in, k, s, p);
  const int w_out = ops::conv_out_size(w_in, k, s, p);
  Tensor out(input.n(), params.filters(), h_out, w_out);
  const int f_count = params.filters();
  const float* in = input.raw().data();
  const float* wts = params.weights.raw().data();
  float* outp = out.raw().data();
  const std::size_t plane = static_cast<std::size_t>(h_in) * w_in;
  // One f64 accumulation plane per (n, f) task, filled row-wise in fixed
  // (c, kh, kw) order; the parallel split never changes reduction order.
#pragma omp parallel for collapse(2)
  for (int n = 0; n < input.n(); ++n) {
    for (int f = 0; f < f_count; ++f) {
      std::vector<double> acc(static_cast<std::size_t>(h_out) * w_out,
                              params.bias[f]);
      const float* in_n = in + static_cast<std::size_t>(n) * c_in * plane;
      const float* wf = wts + static_cast<std::size_t>(f) * c_in * k * k;
      for (int c = 0; c < c_in; ++c) {
        const float* ic = in_n + c * plane;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const double wv = wf[(c * k + kh) * k + kw];
            for (int oh = 0; oh < h_out; ++oh) {
              const int ih = oh * s - p + kh;
              if (ih < 0 || ih >= h_in) continue;
              const float* irow = ic + static_cast<std::size_t>(ih) * w_in;
              double* arow = acc.data() + static_cast<std::size_t>(oh) * w_out;
              int ow_lo = 0;
              while (ow_lo < w_out && ow_lo * s - p + kw < 0) ++ow_lo;
              int ow_hi = w_out;
              while (ow_hi > ow_lo && (ow_hi - 1) * s - p + kw >= w_in)
                --ow_hi;
              const float* ir = irow - p + kw;
              if (s == 1) {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  arow[ow] += wv * ir[ow];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  arow[ow] += wv * ir[ow * s];
              }
            }
          }
        }
      }
      float* orow = outp + ((static_cast<std::size_t>(n) * f_count + f) *
                            h_out) * w_out;
      for (std::size_t i = 0; i < acc.size(); ++i)
        orow[i] = static_cast<float>(acc[i]);
    }
  }
  return out;
}

ConvGrads conv2d_backward_impl(const Tensor& input, const ConvParams& params,
                               const Tensor& grad_out) {
  check_conv_args(input, params, "conv2d_backward");
  const int k = params.kernel();
  const int s = params.stride;
  const int p = params.padding;
  const int h_out = ops::conv_out_size(input.h(), k, s, p);
  const int w_out = ops::conv_out_size(input.w(), k, s, p);
  if (grad_out.n() != input.n() || grad_out.c() != params.filters() ||
      grad_out.h() != h_out || grad_out.w() != w_out)
    throw ShapeError("conv2d_backward: grad_out shape mismatch, expected (" +
                     std::to_string(input.n()) + "," +
                     std::to_string(params.filters()) + "," +
                     std::to_string(h_out) + "," + std::to_string(w_out) + ")");

  ConvGrads g;
  g.grad_input = Tensor(input.n(), input.c(), input.h(), input.w());
  g.grad_weights = Tensor(params.filters(), input.c(), k, k);
  g.grad_bias.assign(params.filters(), 0.0f);

  const int f_count = params.filters();
  const int c_in = input.c();
  const int h_in = input.h();
  const int w_in = input.w();
  const float* in = input.raw().data();
  const float* wts = params.weights.raw().data();
  const float* go = grad_out.raw().data();
  float* gi = g.grad_input.raw().data();
  float* gw = g.grad_weights.raw().data();

  // grad_input: one f64 scatter plane per (n, c) task, filled row-wise in
  // fixed (f, kh, kw, oh, ow) order. Each plane belongs to exactly one
  // task, so the parallel split never changes the reduction order.
#pragma omp parallel for collapse(2)
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < c_in; ++c) {
      std::vector<double> acc(static_cast<std::size_t>(h_in) * w_in, 0.0);
      for (int f = 0; f < f_count; ++f) {
        const float* wf = wts + (static_cast<std::size_t>(f) * c_in + c) * k * k;
        const float* gof = go + ((static_cast<std::size_t>(n) * f_count + f) *
                                 h_out) * w_out;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const double wv = wf[kh * k + kw];
            for (int oh = 0; oh < h_out; ++oh) {
              const int ih = oh * s - p + kh;
              if (ih < 0 || ih >= h_in) continue;
              const float* gorow = gof + static_cast<std::size_t>(oh) * w_out;
              double* arow = acc.data() + static_cast<std::size_t>(ih) * w_in +
                             (-p + kw);
              int ow_lo = 0;
              while (ow_lo < w_out && ow_lo * s - p + kw < 0) ++ow_lo;
              int ow_hi = w_out;
              while (ow_hi > ow_lo && (ow_hi - 1) * s - p + kw >= w_in)
                --ow_hi;
              if (s == 1) {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  arow[ow] += wv * gorow[ow];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  arow[ow * s] += wv * gorow[ow];
              }
            }
          }
        }
      }
      float* girow =
          gi + ((static_cast<std::size_t>(n) * c_in + c) * h_in) * w_in;
      for (std::size_t i = 0; i < acc.size(); ++i)
        girow[i] = static_cast<float>(acc[i]);
    }
  }

  // grad_weights and grad_bias, one filter per task, fixed (n, oh, ow)
  // reduction order with the valid output window hoisted out of the loop.
#pragma omp parallel for
  for (int f = 0; f < f_count; ++f) {
    double bias_acc = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      const float* gof = go + ((static_cast<std::size_t>(n) * f_count + f) *
                               h_out) * w_out;
      for (int i = 0; i < h_out * w_out; ++i) bias_acc += gof[i];
    }
    g.grad_bias[f] = static_cast<float>(bias_acc);

    for (int c = 0; c < c_in; ++c) {
      for (int kh = 0; kh < k; ++kh) {
        // oh valid iff 0 <= oh*s - p + kh < h_in.
        int oh_lo = 0;
        while (oh_lo < h_out && oh_lo * s - p + kh < 0) ++oh_lo;
        int oh_hi = h_out;
        while (oh_hi > oh_lo && (oh_hi - 1) * s - p + kh >= h_in) --oh_hi;
        for (int kw = 0; kw < k; ++kw) {
          int ow_lo = 0;
          while (ow_lo < w_out && ow_lo * s - p + kw < 0) ++ow_lo;
          int ow_hi = w_out;
          while (ow_hi > ow_lo && (ow_hi - 1) * s - p + kw >= w_in) --ow_hi;
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          for (int n = 0; n < input.n(); ++n) {
            const float* gof = go + ((static_cast<std::size_t>(n) * f_count +
                                      f) * h_out) * w_out;
            const float* ic = in + ((static_cast<std::size_t>(n) * c_in + c) *
                                    h_in) * w_in;
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const float* gorow = gof + static_cast<std::size_t>(oh) * w_out;
              const float* irow =
                  ic + static_cast<std::size_t>(oh * s - p + kh) * w_in +
                  (-p + kw);
              // Four ow-strided chains, fixed combine order.
              int ow = ow_lo;
              for (; ow + 4 <= ow_hi; ow += 4) {
                a0 += static_cast<double>(gorow[ow]) * irow[ow * s];
                a1 += static_cast<double>(gorow[ow + 1]) * irow[(ow + 1) * s];
                a2 += static_cast<double>(gorow[ow + 2]) * irow[(ow + 2) * s];
                a3 += static_cast<double>(gorow[ow + 3]) * irow[(ow + 3) * s];
              }
              for (; ow < ow_hi; ++ow)
                a0 += static_cast<double>(gorow[ow]) * irow[ow * s];
            }
          }
          const double acc = (a0 + a1) + (a2 + a3);
          gw[((static_cast<std::size_t>(f) * c_in + c) * k + kh) * k + kw] =
              static_cast<float>(acc);
        }
      }
    }
  }
  return g;
}

Tensor maxpool2d_impl(const Tensor& input) {
  const int h_out = input.h() / 2;
  const int w_out = input.w() / 2;
  Tensor out(input.n(), input.c(), h_out, w_out);
#pragma omp parallel for collapse(2)
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      for (int oh = 0; oh < h_out; ++oh) {
        for (int ow = 0; ow < w_out; ++ow) {
          float m = -std::numeric_limits<float>::infinity();
          for (int dh = 0; dh < 2; ++dh)
            for (int dw = 0; dw < 2; ++dw)
              m = std::max(m, input.at(n, c, 2 * oh + dh, 2 * ow + dw));
          out.at(n, c, oh, ow) = m;
        }
      }
    }
  }
  return out;
}

Tensor global_maxpool_impl(const Tensor& input) {
  Tensor out(input.n(), input.c(), 1, 1);
#pragma omp parallel for collapse(2)
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      float m = -std::numeric_limits<float>::infinity();
      for (int h = 0; h < input.h(); ++h)
        for (int w = 0; w < input.w(); ++w)
          m = std::max(m, input.at(n, c, h, w));
      out.at(n, c, 0, 0) = m;
    }
  }
  return out;
}

}  // namespace

namespace ops {

int conv_out_size(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const ConvParams& params) {
  return conv2d_impl(input, params);
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_out) {
  return conv2d_backward_impl(input, params, grad_out);
}

Tensor leaky_relu(const Tensor& input, float alpha) {
  Tensor out = input;
  float* d = out.data();
  const std::size_t n = out.size();
#pragma omp parallel for
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    if (d[i] <= 0.0f) d[i] *= alpha;
  return out;
}

Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out,
                           float alpha) {
  if (!input.same_shape(grad_out))
    throw ShapeError("leaky_relu_backward: grad_out shape mismatch");
  Tensor out = grad_out;
  const float* x = input.data();
  float* d = out.data();
#pragma omp parallel for
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i)
    if (x[i] <= 0.0f) d[i] *= alpha;
  return out;
}

float sigmoid(float x) {
  // Sign-split form, no overflow for large |x|.
  if (x >= 0.0f) {
    return 1.0f / (1.0f + std::exp(-x));
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  float* d = out.data();
#pragma omp parallel for
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i)
    d[i] = sigmoid(d[i]);
  return out;
}

Tensor sigmoid_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out))
    throw ShapeError("sigmoid_backward: grad_out shape mismatch");
  Tensor out = grad_out;
  const float* x = input.data();
  float* d = out.data();
#pragma omp parallel for
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
    const float s = sigmoid(x[i]);
    d[i] *= s * (1.0f - s);
  }
  return out;
}

Tensor maxpool2d(const Tensor& input) { return maxpool2d_impl(input); }

Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_out) {
  const int h_out = input.h() / 2;
  const int w_out = input.w() / 2;
  if (grad_out.n() != input.n() || grad_out.c() != input.c() ||
      grad_out.h() != h_out || grad_out.w() != w_out)
    throw ShapeError("maxpool2d_backward: grad_out shape mismatch");
  Tensor g(input.n(), input.c(), input.h(), input.w());
#pragma omp parallel for collapse(2)
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      for (int oh = 0; oh < h_out; ++oh) {
        for (int ow = 0; ow < w_out; ++ow) {
          // Ties route to the first element in row-major scan order.
          int bh = 2 * oh, bw = 2 * ow;
          float best = input.at(n, c, bh, bw);
          for (int dh = 0; dh < 2; ++dh) {
            for (int dw = 0; dw < 2; ++dw) {
              const float v = input.at(n, c, 2 * oh + dh, 2 * ow + dw);
              if (v > best) {
                best = v;
                bh = 2 * oh + dh;
                bw = 2 * ow + dw;
              }
            }
          }
          g.at(n, c, bh, bw) += grad_out.at(n, c, oh, ow);
        }
      }
    }
  }
  return g;
}

Tensor global_maxpool(const Tensor& input) {
  return global_maxpool_impl(input);
}

Tensor global_maxpool_backward(const Tensor& input, const Tensor& grad_out) {
  if (grad_out.n() != input.n() || grad_out.c() != input.c() ||
      grad_out.h() != 1 || grad_out.w() != 1)
    throw ShapeError("global_maxpool_backward: grad_out shape mismatch");
  Tensor g(input.n(), input.c(), input.h(), input.w());
#pragma omp parallel for collapse(2)
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      int bh = 0, bw = 0;
      float best = input.at(n, c, 0, 0);
      for (int h = 0; h < input.h(); ++h) {
        for (int w = 0; w < input.w(); ++w) {
          const float v = input.at(n, c, h, w);
          if (v > best) {
            best = v;
            bh = h;
            bw = w;
          }
        }
      }
      g.at(n, c, bh, bw) = grad_out.at(n, c, 0, 0);
    }
  }
  return g;
}

Tensor broadcast_add_channelwise(const Tensor& feature, const Tensor& context) {
  if (context.n() != feature.n())
    throw ShapeError("broadcast_add_channelwise: batch axis mismatch");
  if (context.c() != feature.c())
    throw ShapeError("broadcast_add_channelwise: channel axis mismatch");
  if (context.h() != 1 || context.w() != 1)
    throw ShapeError("broadcast_add_channelwise: context must be (N,C,1,1)");
  Tensor out = feature;
#pragma omp parallel for collapse(2)
  for (int n = 0; n < feature.n(); ++n) {
    for (int c = 0; c < feature.c(); ++c) {
      const float add = context.at(n, c, 0, 0);
      for (int h = 0; h < feature.h(); ++h)
        for (int w = 0; w < feature.w(); ++w) out.at(n, c, h, w) += add;
    }
  }
  return out;
}

Tensor broadcast_add_backward_context(const Tensor& grad_out) {
  Tensor g(grad_out.n(), grad_out.c(), 1, 1);
#pragma omp parallel for collapse(2)
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      double acc = 0.0;
      for (int h = 0; h < grad_out.h(); ++h)
        for (int w = 0; w < grad_out.w(); ++w) acc += grad_out.at(n, c, h, w);
      g.at(n, c, 0, 0) = static_cast<float>(acc);
    }
  }
  return g;
}

}  // namespace ops

// Independent naive loops, written separately from the parallel path so
// the two can check each other.
namespace ref {

Tensor conv2d(const Tensor& input, const ConvParams& params) {
  check_conv_args(input, params, "ref::conv2d");
  const int k = params.kernel();
  const int s = params.stride;
  const int p = params.padding;
  const int h_out = ops::conv_out_size(input.h(), k, s, p);
  const int w_out = ops::conv_out_size(input.w(), k, s, p);
  Tensor out(input.n(), params.filters(), h_out, w_out);
  for (int n = 0; n < input.n(); ++n)
    for (int f = 0; f < params.filters(); ++f)
      for (int oh = 0; oh < h_out; ++oh)
        for (int ow = 0; ow < w_out; ++ow) {
          double acc = params.bias[f];
          for (int c = 0; c < input.c(); ++c)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * s - p + kh;
                const int iw = ow * s - p + kw;
                if (ih < 0 || ih >= input.h() || iw < 0 || iw >= input.w())
                  continue;
                acc += static_cast<double>(params.weights.at(f, c, kh, kw)) *
                       input.at(n, c, ih, iw);
              }
          out.at(n, f, oh, ow) = static_cast<float>(acc);
        }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_out) {
  check_conv_args(input, params, "ref::conv2d_backward");
  const int k = params.kernel();
  const int s = params.stride;
  const int p = params.padding;
  const int h_out = ops::conv_out_size(input.h(), k, s, p);
  const int w_out = ops::conv_out_size(input.w(), k, s, p);
  // Scatter form: walk every (output, kernel) pair once and accumulate
  // into f64 buffers.
  std::vector<double> gi(input.size(), 0.0);
  std::vector<double> gw(params.weights.size(), 0.0);
  std::vector<double> gb(params.bias.size(), 0.0);
  auto gi_at = [&](int n, int c, int h, int w) -> double& {
    return gi[((static_cast<std::size_t>(n) * input.c() + c) * input.h() + h) *
                  input.w() +
              w];
  };
  auto gw_at = [&](int f, int c, int kh, int kw) -> double& {
    return gw[((static_cast<std::size_t>(f) * input.c() + c) * k + kh) * k +
              kw];
  };
  for (int n = 0; n < input.n(); ++n)
    for (int f = 0; f < params.filters(); ++f)
      for (int oh = 0; oh < h_out; ++oh)
        for (int ow = 0; ow < w_out; ++ow) {
          const double go = grad_out.at(n, f, oh, ow);
          gb[f] += go;
          for (int c = 0; c < input.c(); ++c)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * s - p + kh;
                const int iw = ow * s - p + kw;
                if (ih < 0 || ih >= input.h() || iw < 0 || iw >= input.w())
                  continue;
                gi_at(n, c, ih, iw) += params.weights.at(f, c, kh, kw) * go;
                gw_at(f, c, kh, kw) += input.at(n, c, ih, iw) * go;
              }
        }
  ConvGrads g;
  g.grad_input = Tensor(input.n(), input.c(), input.h(), input.w());
  g.grad_weights = Tensor(params.filters(), input.c(), k, k);
  g.grad_bias.assign(params.filters(), 0.0f);
  for (std::size_t i = 0; i < gi.size(); ++i)
    g.grad_input.raw()[i] = static_cast<float>(gi[i]);
  for (std::size_t i = 0; i < gw.size(); ++i)
    g.grad_weights.raw()[i] = static_cast<float>(gw[i]);
  for (std::size_t i = 0; i < gb.size(); ++i)
    g.grad_bias[i] = static_cast<float>(gb[i]);
  return g;
}

Tensor maxpool2d(const Tensor& input) {
  Tensor out(input.n(), input.c(), input.h() / 2, input.w() / 2);
  for (int n = 0; n < input.n(); ++n)
    for (int c = 0; c < input.c(); ++c)
      for (int oh = 0; oh < out.h(); ++oh)
        for (int ow = 0; ow < out.w(); ++ow)
          out.at(n, c, oh, ow) =
              std::max(std::max(input.at(n, c, 2 * oh, 2 * ow),
                                input.at(n, c, 2 * oh, 2 * ow + 1)),
                       std::max(input.at(n, c, 2 * oh + 1, 2 * ow),
                                input.at(n, c, 2 * oh + 1, 2 * ow + 1)));
  return out;
}

Tensor global_maxpool(const Tensor& input) {
  Tensor out(input.n(), input.c(), 1, 1);
  for (int n = 0; n < input.n(); ++n)
    for (int c = 0; c < input.c(); ++c) {
      float m = input.at(n, c, 0, 0);
      for (int h = 0; h < input.h(); ++h)
        for (int w = 0; w < input.w(); ++w)
          m = std::max(m, input.at(n, c, h, w));
      out.at(n, c, 0, 0) = m;
    }
  return out;
}

}  // namespace ref

}  // namespace rsnet

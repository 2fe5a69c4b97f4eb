#ifndef RSNET_TESTS_TEST_UTIL_HPP_
#define RSNET_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rsnet/tensor.hpp"

namespace rsnet::test {

inline Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng,
                            float lo = -1.0f, float hi = 1.0f) {
  Tensor t(n, c, h, w);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (float& v : t.raw()) v = dist(rng);
  return t;
}

/// Central finite differences of a scalar function over a flat parameter
/// vector, f64 arithmetic, h=1e-3.
inline std::vector<double> finite_difference(
    std::vector<float> x, const std::function<double(const std::vector<float>&)>& f,
    double h = 1e-3) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = x[i];
    x[i] = static_cast<float>(orig + h);
    const double fp = f(x);
    x[i] = static_cast<float>(orig - h);
    const double fm = f(x);
    x[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Test-only double-precision convolution, the independent forward used
/// by the finite-difference oracle (same-padding convention).
inline std::vector<double> conv2d_f64(const std::vector<float>& input,
                                      const std::array<int, 4>& in_shape,
                                      const std::vector<float>& weights,
                                      const std::vector<float>& bias, int f_out,
                                      int k, int stride, int padding) {
  const int n_b = in_shape[0], c_in = in_shape[1], h = in_shape[2],
            w = in_shape[3];
  const int h_out = (h + 2 * padding - k) / stride + 1;
  const int w_out = (w + 2 * padding - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n_b) * f_out * h_out * w_out);
  for (int n = 0; n < n_b; ++n)
    for (int f = 0; f < f_out; ++f)
      for (int oh = 0; oh < h_out; ++oh)
        for (int ow = 0; ow < w_out; ++ow) {
          double acc = bias[f];
          for (int c = 0; c < c_in; ++c)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * stride - padding + kh;
                const int iw = ow * stride - padding + kw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                acc += static_cast<double>(
                           weights[((static_cast<std::size_t>(f) * c_in + c) *
                                        k + kh) * k + kw]) *
                       input[((static_cast<std::size_t>(n) * c_in + c) * h +
                              ih) * w + iw];
              }
          out[((static_cast<std::size_t>(n) * f_out + f) * h_out + oh) *
                  w_out + ow] = acc;
        }
  return out;
}

/// Max relative error between analytic and numeric gradients. Entries
/// where both are tiny are compared absolutely against the same bound.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-2});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace rsnet::test

#endif  // RSNET_TESTS_TEST_UTIL_HPP_

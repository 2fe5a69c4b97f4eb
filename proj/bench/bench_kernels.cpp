// Timing comparison of the OpenMP kernels against the serial reference.
#include <chrono>
#include <cstdio>
#include <random>

#include "rsnet/ops.hpp"

using rsnet::ConvParams;
using rsnet::Tensor;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
  Tensor t(n, c, h, w);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (float& v : t.raw()) v = dist(rng);
  return t;
}

ConvParams random_conv(int f, int c, int k, int stride, std::mt19937_64& rng) {
  ConvParams p;
  p.weights = random_tensor(f, c, k, k, rng);
  p.bias.assign(f, 0.1f);
  p.stride = stride;
  p.padding = (k - 1) / 2;
  return p;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  // Warmup run, then best of reps.
  fn();
  double best = 1e30;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void bench_conv(int c, int f, int size, int k, int stride) {
  std::mt19937_64 rng(42);
  const Tensor x = random_tensor(2, c, size, size, rng);
  const ConvParams p = random_conv(f, c, k, stride, rng);
  const Tensor go = rsnet::ops::conv2d(x, p);

  const double fwd_omp = time_ms([&] { rsnet::ops::conv2d(x, p); }, 5);
  const double fwd_ref = time_ms([&] { rsnet::ref::conv2d(x, p); }, 5);
  const double bwd_omp =
      time_ms([&] { rsnet::ops::conv2d_backward(x, p, go); }, 5);
  const double bwd_ref =
      time_ms([&] { rsnet::ref::conv2d_backward(x, p, go); }, 5);
  std::printf(
      "conv %3dx%-4d k=%d s=%d %3dpx | fwd omp %8.3f ms  ref %8.3f ms "
      "(%.2fx) | bwd omp %8.3f ms  ref %8.3f ms (%.2fx)\n",
      c, f, k, stride, size, fwd_omp, fwd_ref, fwd_ref / fwd_omp, bwd_omp,
      bwd_ref, bwd_ref / bwd_omp);
}

void bench_pool(int c, int size) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor(2, c, size, size, rng);
  const double mp_omp = time_ms([&] { rsnet::ops::maxpool2d(x); }, 20);
  const double mp_ref = time_ms([&] { rsnet::ref::maxpool2d(x); }, 20);
  const double gmp_omp = time_ms([&] { rsnet::ops::global_maxpool(x); }, 20);
  const double gmp_ref = time_ms([&] { rsnet::ref::global_maxpool(x); }, 20);
  std::printf(
      "pool %4dch %3dpx | maxpool omp %7.3f ms  ref %7.3f ms (%.2fx) | "
      "gmp omp %7.3f ms  ref %7.3f ms (%.2fx)\n",
      c, size, mp_omp, mp_ref, mp_ref / mp_omp, gmp_omp, gmp_ref,
      gmp_ref / gmp_omp);
}

}  // namespace

int main() {
  bench_conv(32, 64, 64, 3, 1);
  bench_conv(64, 128, 32, 3, 2);
  bench_conv(128, 64, 16, 1, 1);
  bench_conv(256, 512, 16, 3, 1);
  bench_pool(64, 64);
  bench_pool(256, 32);
  return 0;
}

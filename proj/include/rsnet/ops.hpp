#ifndef RSNET_OPS_HPP_
#define RSNET_OPS_HPP_

#include <vector>

#include "rsnet/tensor.hpp"

namespace rsnet {

/// Weights for one convolution layer. Filters are stored as a rank-4
/// tensor (F, C_in, k, k); one bias per filter.
struct ConvParams {
  Tensor weights;
  std::vector<float> bias;
  int stride = 1;
  int padding = 0;

  int filters() const { return weights.n(); }
  int in_channels() const { return weights.c(); }
  int kernel() const { return weights.h(); }
};

struct ConvGrads {
  Tensor grad_input;
  Tensor grad_weights;
  std::vector<float> grad_bias;
};

namespace ops {

// Forward kernels. All are pure: inputs are never mutated, results are
// deterministic for a fixed input (fixed reduction order per output
// element), so internal OpenMP parallelism never changes bytes.

Tensor conv2d(const Tensor& input, const ConvParams& params);
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_out);

Tensor leaky_relu(const Tensor& input, float alpha);
Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out,
                           float alpha);

float sigmoid(float x);
Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& input, const Tensor& grad_out);

Tensor maxpool2d(const Tensor& input);
Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_out);

Tensor global_maxpool(const Tensor& input);
Tensor global_maxpool_backward(const Tensor& input, const Tensor& grad_out);

Tensor broadcast_add_channelwise(const Tensor& feature, const Tensor& context);
/// Returns the context gradient; the feature gradient equals grad_out.
Tensor broadcast_add_backward_context(const Tensor& grad_out);

/// Output spatial size for a same-padded convolution.
int conv_out_size(int in, int kernel, int stride, int padding);

}  // namespace ops

// Serial reference kernels, kept for testing and benchmarking against
// the parallel path above.
namespace ref {

Tensor conv2d(const Tensor& input, const ConvParams& params);
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_out);
Tensor maxpool2d(const Tensor& input);
Tensor global_maxpool(const Tensor& input);

}  // namespace ref

}  // namespace rsnet

#endif  // RSNET_OPS_HPP_

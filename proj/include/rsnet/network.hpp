#ifndef RSNET_NETWORK_HPP_
#define RSNET_NETWORK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "rsnet/ops.hpp"
#include "rsnet/tensor.hpp"

namespace rsnet {

/// Interpretation of the Global Maxpooling rows.
///   BroadcastResidual: out = features + broadcast(global_maxpool(features)),
///     a global-context block that preserves spatial shape.
///   FinalOnly: mid-network blocks are identity; the last block is a literal
///     global pool, collapsing the grid to 1x1.
///   Identity: all blocks pass through unchanged (ablation).
enum class GmpMode { BroadcastResidual, FinalOnly, Identity };

struct LayerSpec {
  enum class Kind { Conv, GmpBlock, Maxpool };
  Kind kind = Kind::Conv;
  int filters = 0;  // Conv only
  int kernel = 0;   // Conv only, 1 or 3
  int stride = 1;   // Conv only, 1 or 2
  int repeat = 1;   // builders emit flattened layer lists, so always 1 here
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;  // last layer is the linear 1x1 head conv
  GmpMode gmp_mode = GmpMode::BroadcastResidual;
  int input_size = 0;
  int num_classes = 0;
  int anchors_per_cell = 0;

  int head_channels() const { return anchors_per_cell * (5 + num_classes); }
  int conv_layer_count() const;
};

/// One ConvParams per conv layer, in layer order (head last).
struct Parameters {
  std::vector<ConvParams> convs;
};

/// Shape of one conv layer as determined by a channel walk over the spec.
struct ConvShape {
  int filters;
  int in_channels;
  int kernel;
  int stride;
};

NetworkSpec build_table1(GmpMode gmp_mode, int input_size, int num_classes,
                         int anchors_per_cell);
NetworkSpec build_tiny(int stages, int base_filters, int input_size,
                       int num_classes, int anchors_per_cell,
                       GmpMode gmp_mode = GmpMode::BroadcastResidual);

/// Conv shapes in layer order, derived without allocating activations.
std::vector<ConvShape> conv_shapes(const NetworkSpec& spec);

/// Output grid side length, computed by a shape-only walk.
int output_grid(const NetworkSpec& spec);

/// Total learnable scalar count (weights + biases).
std::int64_t parameter_count(const NetworkSpec& spec);

Parameters init_params(const NetworkSpec& spec, std::uint64_t seed);

Tensor forward(const NetworkSpec& spec, const Parameters& params,
               const Tensor& batch);

/// Activations cached by forward, reused for the backward pass.
struct ForwardTrace {
  std::vector<Tensor> inputs;  // input to each layer, in layer order
  Tensor output;
};

ForwardTrace forward_trace(const NetworkSpec& spec, const Parameters& params,
                           const Tensor& batch);

/// Reverse-mode gradients for every conv parameter given the gradient of
/// a scalar loss w.r.t. the head output.
Parameters forward_backward(const NetworkSpec& spec, const Parameters& params,
                            const Tensor& batch, const Tensor& head_grad);
Parameters backward_from_trace(const NetworkSpec& spec,
                               const Parameters& params,
                               const ForwardTrace& trace,
                               const Tensor& head_grad);

// Text config format, one layer per line, '#' comments:
//   input <size>, classes <K>, anchors_per_cell <A>,
//   gmp_mode <broadcast|final|identity>,
//   conv <filters> <kernel> <stride>, gmp_block, maxpool
std::string write_config(const NetworkSpec& spec);
NetworkSpec parse_config(const std::string& text);
NetworkSpec load_config(const std::string& path);

const char* gmp_mode_name(GmpMode mode);
GmpMode parse_gmp_mode(const std::string& name);

}  // namespace rsnet

#endif  // RSNET_NETWORK_HPP_

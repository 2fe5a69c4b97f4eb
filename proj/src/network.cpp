#include "rsnet/network.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rsnet {

namespace {

constexpr float kLeakyAlpha = 0.1f;

LayerSpec conv(int filters, int kernel, int stride) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::Conv;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec gmp_block() {
  LayerSpec l;
  l.kind = LayerSpec::Kind::GmpBlock;
  return l;
}

int last_gmp_index(const NetworkSpec& spec) {
  int last = -1;
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i)
    if (spec.layers[i].kind == LayerSpec::Kind::GmpBlock) last = i;
  return last;
}

}  // namespace

int NetworkSpec::conv_layer_count() const {
  int n = 0;
  for (const auto& l : layers)
    if (l.kind == LayerSpec::Kind::Conv) ++n;
  return n;
}

NetworkSpec build_table1(GmpMode gmp_mode, int input_size, int num_classes,
                         int anchors_per_cell) {
  if (input_size % 32 != 0)
    throw std::invalid_argument("build_table1: input_size " +
                                std::to_string(input_size) +
                                " not divisible by 32");
  NetworkSpec spec;
  spec.gmp_mode = gmp_mode;
  spec.input_size = input_size;
  spec.num_classes = num_classes;
  spec.anchors_per_cell = anchors_per_cell;

  spec.layers.push_back(conv(32, 3, 1));
  const int widths[5] = {64, 128, 256, 512, 1024};
  const int repeats[5] = {1, 2, 8, 8, 4};
  for (int s = 0; s < 5; ++s) {
    spec.layers.push_back(conv(widths[s], 3, 2));
    for (int r = 0; r < repeats[s]; ++r) {
      spec.layers.push_back(conv(widths[s] / 2, 1, 1));
      spec.layers.push_back(conv(widths[s], 3, 1));
    }
    spec.layers.push_back(gmp_block());
  }
  spec.layers.push_back(conv(spec.head_channels(), 1, 1));  // head
  return spec;
}

NetworkSpec build_tiny(int stages, int base_filters, int input_size,
                       int num_classes, int anchors_per_cell,
                       GmpMode gmp_mode) {
  if (stages < 2 || stages > 5)
    throw std::invalid_argument("build_tiny: stages must be in 2..5");
  const int factor = 1 << stages;
  if (input_size % factor != 0)
    throw std::invalid_argument("build_tiny: input_size " +
                                std::to_string(input_size) +
                                " not divisible by 2^stages=" +
                                std::to_string(factor));
  NetworkSpec spec;
  spec.gmp_mode = gmp_mode;
  spec.input_size = input_size;
  spec.num_classes = num_classes;
  spec.anchors_per_cell = anchors_per_cell;

  spec.layers.push_back(conv(base_filters, 3, 1));
  for (int s = 1; s <= stages; ++s) {
    const int width = base_filters << s;
    spec.layers.push_back(conv(width, 3, 2));
    spec.layers.push_back(conv(width / 2, 1, 1));
    spec.layers.push_back(conv(width, 3, 1));
    spec.layers.push_back(gmp_block());
  }
  spec.layers.push_back(conv(spec.head_channels(), 1, 1));  // head
  return spec;
}

std::vector<ConvShape> conv_shapes(const NetworkSpec& spec) {
  std::vector<ConvShape> shapes;
  int channels = 3;
  for (const auto& l : spec.layers) {
    if (l.kind != LayerSpec::Kind::Conv) continue;
    shapes.push_back({l.filters, channels, l.kernel, l.stride});
    channels = l.filters;
  }
  return shapes;
}

int output_grid(const NetworkSpec& spec) {
  int size = spec.input_size;
  const int last_gmp = last_gmp_index(spec);
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        const int pad = (l.kernel - 1) / 2;
        size = ops::conv_out_size(size, l.kernel, l.stride, pad);
        break;
      }
      case LayerSpec::Kind::Maxpool:
        size /= 2;
        break;
      case LayerSpec::Kind::GmpBlock:
        if (spec.gmp_mode == GmpMode::FinalOnly && i == last_gmp) size = 1;
        break;
    }
  }
  return size;
}

std::int64_t parameter_count(const NetworkSpec& spec) {
  std::int64_t total = 0;
  for (const auto& s : conv_shapes(spec))
    total += static_cast<std::int64_t>(s.filters) * s.in_channels * s.kernel *
                 s.kernel +
             s.filters;
  return total;
}

Parameters init_params(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters params;
  for (const auto& s : conv_shapes(spec)) {
    ConvParams p;
    p.weights = Tensor(s.filters, s.in_channels, s.kernel, s.kernel);
    p.bias.assign(s.filters, 0.0f);
    p.stride = s.stride;
    p.padding = (s.kernel - 1) / 2;
    // He-style fan-in bound: with leaky-ReLU activations this keeps the
    // per-layer signal gain near 1, so deep stacks neither vanish nor blow
    // up at initialization. A smaller bound (e.g. sqrt(1/fan_in)) shrinks
    // activations by ~0.41x per layer and leaves the head numerically dead
    // after a dozen layers, which makes the overfit experiment untrainable.
    const double limit = std::sqrt(6.0 / (s.in_channels * s.kernel * s.kernel));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (float& w : p.weights.raw()) w = static_cast<float>(dist(rng));
    params.convs.push_back(std::move(p));
  }
  return params;
}

ForwardTrace forward_trace(const NetworkSpec& spec, const Parameters& params,
                           const Tensor& batch) {
  if (batch.c() != 3 || batch.h() != spec.input_size ||
      batch.w() != spec.input_size)
    throw ShapeError("forward: batch must be (N,3," +
                     std::to_string(spec.input_size) + "," +
                     std::to_string(spec.input_size) + "), got (" +
                     std::to_string(batch.n()) + "," +
                     std::to_string(batch.c()) + "," +
                     std::to_string(batch.h()) + "," +
                     std::to_string(batch.w()) + ")");
  if (params.convs.size() != static_cast<std::size_t>(spec.conv_layer_count()))
    throw ShapeError("forward: params hold " +
                     std::to_string(params.convs.size()) + " conv layers, spec needs " +
                     std::to_string(spec.conv_layer_count()));

  ForwardTrace trace;
  const int last_gmp = last_gmp_index(spec);
  const int layer_count = static_cast<int>(spec.layers.size());
  Tensor x = batch;
  int conv_idx = 0;
  for (int i = 0; i < layer_count; ++i) {
    trace.inputs.push_back(x);
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        const bool is_head = (i == layer_count - 1);
        Tensor y = ops::conv2d(x, params.convs[conv_idx]);
        ++conv_idx;
        x = is_head ? std::move(y) : ops::leaky_relu(y, kLeakyAlpha);
        break;
      }
      case LayerSpec::Kind::Maxpool:
        x = ops::maxpool2d(x);
        break;
      case LayerSpec::Kind::GmpBlock:
        switch (spec.gmp_mode) {
          case GmpMode::BroadcastResidual:
            x = ops::broadcast_add_channelwise(x, ops::global_maxpool(x));
            break;
          case GmpMode::FinalOnly:
            if (i == last_gmp) x = ops::global_maxpool(x);
            break;
          case GmpMode::Identity:
            break;
        }
        break;
    }
  }
  trace.output = std::move(x);
  return trace;
}

Tensor forward(const NetworkSpec& spec, const Parameters& params,
               const Tensor& batch) {
  return forward_trace(spec, params, batch).output;
}

Parameters backward_from_trace(const NetworkSpec& spec,
                               const Parameters& params,
                               const ForwardTrace& trace,
                               const Tensor& head_grad) {
  if (!head_grad.same_shape(trace.output))
    throw ShapeError("backward: head_grad shape mismatch");

  Parameters grads;
  grads.convs.resize(params.convs.size());
  const int last_gmp = last_gmp_index(spec);
  const int layer_count = static_cast<int>(spec.layers.size());
  int conv_idx = static_cast<int>(params.convs.size());
  Tensor g = head_grad;
  for (int i = layer_count - 1; i >= 0; --i) {
    const auto& l = spec.layers[i];
    const Tensor& x = trace.inputs[i];
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        --conv_idx;
        const auto& p = params.convs[conv_idx];
        const bool is_head = (i == layer_count - 1);
        Tensor pre_grad;
        if (is_head) {
          pre_grad = g;
        } else {
          // Recompute the pre-activation; cheaper than caching it.
          Tensor pre = ops::conv2d(x, p);
          pre_grad = ops::leaky_relu_backward(pre, g, kLeakyAlpha);
        }
        ConvGrads cg = ops::conv2d_backward(x, p, pre_grad);
        grads.convs[conv_idx].weights = std::move(cg.grad_weights);
        grads.convs[conv_idx].bias = std::move(cg.grad_bias);
        grads.convs[conv_idx].stride = p.stride;
        grads.convs[conv_idx].padding = p.padding;
        g = std::move(cg.grad_input);
        break;
      }
      case LayerSpec::Kind::Maxpool:
        g = ops::maxpool2d_backward(x, g);
        break;
      case LayerSpec::Kind::GmpBlock:
        switch (spec.gmp_mode) {
          case GmpMode::BroadcastResidual: {
            Tensor ctx_grad = ops::broadcast_add_backward_context(g);
            Tensor through = ops::global_maxpool_backward(x, ctx_grad);
            for (std::size_t j = 0; j < g.size(); ++j)
              g.raw()[j] += through.raw()[j];
            break;
          }
          case GmpMode::FinalOnly:
            if (i == last_gmp) g = ops::global_maxpool_backward(x, g);
            break;
          case GmpMode::Identity:
            break;
        }
        break;
    }
  }
  return grads;
}

Parameters forward_backward(const NetworkSpec& spec, const Parameters& params,
                            const Tensor& batch, const Tensor& head_grad) {
  return backward_from_trace(spec, params, forward_trace(spec, params, batch),
                             head_grad);
}

const char* gmp_mode_name(GmpMode mode) {
  switch (mode) {
    case GmpMode::BroadcastResidual: return "broadcast";
    case GmpMode::FinalOnly: return "final";
    case GmpMode::Identity: return "identity";
  }
  return "broadcast";
}

GmpMode parse_gmp_mode(const std::string& name) {
  if (name == "broadcast") return GmpMode::BroadcastResidual;
  if (name == "final") return GmpMode::FinalOnly;
  if (name == "identity") return GmpMode::Identity;
  throw std::invalid_argument("unknown gmp_mode '" + name +
                              "' (expected broadcast|final|identity)");
}

std::string write_config(const NetworkSpec& spec) {
  std::ostringstream out;
  out << "input " << spec.input_size << "\n";
  out << "classes " << spec.num_classes << "\n";
  out << "anchors_per_cell " << spec.anchors_per_cell << "\n";
  out << "gmp_mode " << gmp_mode_name(spec.gmp_mode) << "\n";
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv:
        out << "conv " << l.filters << " " << l.kernel << " " << l.stride
            << "\n";
        break;
      case LayerSpec::Kind::GmpBlock:
        out << "gmp_block\n";
        break;
      case LayerSpec::Kind::Maxpool:
        out << "maxpool\n";
        break;
    }
  }
  return out.str();
}

NetworkSpec parse_config(const std::string& text) {
  NetworkSpec spec;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(line_no) + ": " +
                             msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "input" || word == "classes" || word == "anchors_per_cell") {
      int v;
      if (!(ls >> v) || v <= 0) fail("expected positive integer after " + word);
      if (word == "input") spec.input_size = v;
      else if (word == "classes") spec.num_classes = v;
      else spec.anchors_per_cell = v;
    } else if (word == "gmp_mode") {
      std::string mode;
      if (!(ls >> mode)) fail("missing gmp_mode value");
      try {
        spec.gmp_mode = parse_gmp_mode(mode);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
    } else if (word == "conv") {
      int f, k, s;
      if (!(ls >> f >> k >> s)) fail("conv needs <filters> <kernel> <stride>");
      if (f <= 0) fail("conv filters must be positive");
      if (k != 1 && k != 3) fail("conv kernel must be 1 or 3");
      if (s != 1 && s != 2) fail("conv stride must be 1 or 2");
      spec.layers.push_back(conv(f, k, s));
    } else if (word == "gmp_block") {
      spec.layers.push_back(gmp_block());
    } else if (word == "maxpool") {
      LayerSpec l;
      l.kind = LayerSpec::Kind::Maxpool;
      spec.layers.push_back(l);
    } else {
      fail("unknown directive '" + word + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
  }
  if (spec.input_size <= 0) throw std::runtime_error("config: missing input");
  if (spec.num_classes <= 0)
    throw std::runtime_error("config: missing classes");
  if (spec.anchors_per_cell <= 0)
    throw std::runtime_error("config: missing anchors_per_cell");
  if (spec.conv_layer_count() == 0)
    throw std::runtime_error("config: no conv layers");
  return spec;
}

NetworkSpec load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace rsnet

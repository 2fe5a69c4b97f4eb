#ifndef RSNET_DETECT_HPP_
#define RSNET_DETECT_HPP_

#include <vector>

#include "rsnet/network.hpp"
#include "rsnet/tensor.hpp"

namespace rsnet {

/// Prior box size in grid-cell units.
struct Anchor {
  float w = 0.0f;
  float h = 0.0f;
};

/// Labeled box, Darknet convention: center + size, normalized to [0,1].
struct GroundTruthBox {
  int class_id = 0;
  float cx = 0.0f;
  float cy = 0.0f;
  float w = 0.0f;
  float h = 0.0f;
};

/// A decoded prediction, in grid units.
struct DecodedBox {
  float bx, by, bw, bh;
  float objectness;
  std::vector<float> class_probs;
  int cell_x, cell_y;
  int anchor_index;
  int batch_index;
};

/// Regression targets for one positive slot: the first two are targets
/// for the sigmoided center coordinates, the last two for raw t_w, t_h.
struct EncodedTarget {
  float sx, sy, tw, th;
};

// Channel layout within an anchor slot: [t_x, t_y, t_w, t_h, t_o, classes].
std::vector<DecodedBox> decode(const Tensor& raw,
                               const std::vector<Anchor>& anchors,
                               int num_classes);

EncodedTarget encode(const GroundTruthBox& gt, const Anchor& anchor, int cell_x,
                     int cell_y, int grid);

enum class SlotKind { Negative, Ignore, Positive };

/// Per-image slot assignment over (cell_y, cell_x, anchor).
struct Assignment {
  int grid = 0;
  int num_anchors = 0;
  std::vector<SlotKind> kinds;   // grid*grid*num_anchors, row-major
  std::vector<int> gt_index;     // valid where kind == Positive

  int slot(int cy, int cx, int a) const {
    return (cy * grid + cx) * num_anchors + a;
  }
};

Assignment assign_targets(const std::vector<GroundTruthBox>& gts,
                          const std::vector<Anchor>& anchors, int grid,
                          float ignore_iou);

struct LossWeights {
  float coord = 5.0f;
  float obj = 1.0f;
  float noobj = 0.5f;
  float cls = 1.0f;
};

enum class ObjectnessTarget { One, Iou };

struct LossResult {
  double total = 0.0;
  Tensor head_grad;
};

/// Training loss over a batch. assignments[i] and gts[i] describe batch
/// item i; the head gradient is exact.
LossResult detection_loss(const Tensor& raw,
                          const std::vector<Assignment>& assignments,
                          const std::vector<std::vector<GroundTruthBox>>& gts,
                          const std::vector<Anchor>& anchors, int num_classes,
                          const LossWeights& weights,
                          ObjectnessTarget obj_target = ObjectnessTarget::One);

/// Binary cross-entropy from the logit, numerically stable.
double bce_with_logit(float logit, float target);

/// SGD with classical momentum; velocity is owned by the optimizer.
class SgdOptimizer {
 public:
  SgdOptimizer(float lr, float momentum) : lr_(lr), momentum_(momentum) {}

  void step(Parameters& params, const Parameters& grads);

  /// Adjust the learning rate between steps (e.g. for warmup schedules);
  /// accumulated velocity is kept.
  void set_lr(float lr) { lr_ = lr; }

 private:
  float lr_;
  float momentum_;
  Parameters velocity_;  // lazily shaped on first step
};

}  // namespace rsnet

#endif  // RSNET_DETECT_HPP_

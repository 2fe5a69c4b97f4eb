#include "rsnet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rsnet {

namespace {

// IoU of two center/size boxes in a shared coordinate frame.
float center_box_iou(float ax, float ay, float aw, float ah, float bx, float by,
                     float bw, float bh) {
  const float ax0 = ax - aw / 2, ax1 = ax + aw / 2;
  const float ay0 = ay - ah / 2, ay1 = ay + ah / 2;
  const float bx0 = bx - bw / 2, bx1 = bx + bw / 2;
  const float by0 = by - bh / 2, by1 = by + bh / 2;
  const float iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const float ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0f || ih <= 0.0f) return 0.0f;
  const float inter = iw * ih;
  return inter / (aw * ah + bw * bh - inter);
}

float shape_iou_wh(float aw, float ah, float bw, float bh) {
  const float inter = std::min(aw, bw) * std::min(ah, bh);
  return inter / (aw * ah + bw * bh - inter);
}

void check_head_channels(const Tensor& raw, int num_anchors, int num_classes) {
  const int expected = num_anchors * (5 + num_classes);
  if (raw.c() != expected)
    throw ShapeError("detect: channel axis mismatch, head tensor has " +
                     std::to_string(raw.c()) + " channels but A*(5+K)=" +
                     std::to_string(expected));
}

}  // namespace

std::vector<DecodedBox> decode(const Tensor& raw,
                               const std::vector<Anchor>& anchors,
                               int num_classes) {
  const int num_anchors = static_cast<int>(anchors.size());
  check_head_channels(raw, num_anchors, num_classes);
  const int grid_h = raw.h();
  const int grid_w = raw.w();
  std::vector<DecodedBox> boxes;
  boxes.reserve(static_cast<std::size_t>(raw.n()) * num_anchors * grid_h *
                grid_w);
  for (int n = 0; n < raw.n(); ++n) {
    for (int cy = 0; cy < grid_h; ++cy) {
      for (int cx = 0; cx < grid_w; ++cx) {
        for (int a = 0; a < num_anchors; ++a) {
          const int base = a * (5 + num_classes);
          DecodedBox b;
          b.bx = ops::sigmoid(raw.at(n, base + 0, cy, cx)) + cx;
          b.by = ops::sigmoid(raw.at(n, base + 1, cy, cx)) + cy;
          b.bw = anchors[a].w * std::exp(raw.at(n, base + 2, cy, cx));
          b.bh = anchors[a].h * std::exp(raw.at(n, base + 3, cy, cx));
          b.objectness = ops::sigmoid(raw.at(n, base + 4, cy, cx));
          b.class_probs.resize(num_classes);
          for (int k = 0; k < num_classes; ++k)
            b.class_probs[k] = ops::sigmoid(raw.at(n, base + 5 + k, cy, cx));
          b.cell_x = cx;
          b.cell_y = cy;
          b.anchor_index = a;
          b.batch_index = n;
          boxes.push_back(std::move(b));
        }
      }
    }
  }
  return boxes;
}

EncodedTarget encode(const GroundTruthBox& gt, const Anchor& anchor, int cell_x,
                     int cell_y, int grid) {
  if (gt.w <= 0.0f || gt.h <= 0.0f)
    throw std::invalid_argument("encode: non-positive ground-truth size");
  const float gx = grid * gt.cx;
  const float gy = grid * gt.cy;
  if (gx < cell_x || gx >= cell_x + 1 || gy < cell_y || gy >= cell_y + 1)
    throw std::invalid_argument("encode: ground-truth center outside cell");
  EncodedTarget t;
  t.sx = gx - cell_x;
  t.sy = gy - cell_y;
  t.tw = std::log(grid * gt.w / anchor.w);
  t.th = std::log(grid * gt.h / anchor.h);
  return t;
}

Assignment assign_targets(const std::vector<GroundTruthBox>& gts,
                          const std::vector<Anchor>& anchors, int grid,
                          float ignore_iou) {
  if (anchors.empty())
    throw std::invalid_argument("assign_targets: anchors must be non-empty");
  Assignment asg;
  asg.grid = grid;
  asg.num_anchors = static_cast<int>(anchors.size());
  const int slots = grid * grid * asg.num_anchors;
  asg.kinds.assign(slots, SlotKind::Negative);
  asg.gt_index.assign(slots, -1);

  for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
    const auto& gt = gts[g];
    const int cx = std::min(static_cast<int>(grid * gt.cx), grid - 1);
    const int cy = std::min(static_cast<int>(grid * gt.cy), grid - 1);
    int best_a = 0;
    float best_iou = -1.0f;
    for (int a = 0; a < asg.num_anchors; ++a) {
      const float iou =
          shape_iou_wh(grid * gt.w, grid * gt.h, anchors[a].w, anchors[a].h);
      if (iou > best_iou) {  // ties keep the lowest anchor index
        best_iou = iou;
        best_a = a;
      }
    }
    const int s = asg.slot(cy, cx, best_a);
    if (asg.kinds[s] == SlotKind::Positive) continue;  // first gt wins
    asg.kinds[s] = SlotKind::Positive;
    asg.gt_index[s] = g;
  }

  // Unassigned slots whose anchor box, placed at the cell center, overlaps
  // some gt beyond ignore_iou get no objectness penalty.
  if (!gts.empty()) {
    for (int cy = 0; cy < grid; ++cy) {
      for (int cx = 0; cx < grid; ++cx) {
        for (int a = 0; a < asg.num_anchors; ++a) {
          const int s = asg.slot(cy, cx, a);
          if (asg.kinds[s] == SlotKind::Positive) continue;
          float best = 0.0f;
          for (const auto& gt : gts)
            best = std::max(
                best, center_box_iou(cx + 0.5f, cy + 0.5f, anchors[a].w,
                                     anchors[a].h, grid * gt.cx, grid * gt.cy,
                                     grid * gt.w, grid * gt.h));
          if (best > ignore_iou) asg.kinds[s] = SlotKind::Ignore;
        }
      }
    }
  }
  return asg;
}

double bce_with_logit(float logit, float target) {
  const double t = logit;
  return std::max(t, 0.0) - t * target + std::log1p(std::exp(-std::abs(t)));
}

LossResult detection_loss(const Tensor& raw,
                          const std::vector<Assignment>& assignments,
                          const std::vector<std::vector<GroundTruthBox>>& gts,
                          const std::vector<Anchor>& anchors, int num_classes,
                          const LossWeights& weights,
                          ObjectnessTarget obj_target) {
  const int num_anchors = static_cast<int>(anchors.size());
  check_head_channels(raw, num_anchors, num_classes);
  if (assignments.size() != static_cast<std::size_t>(raw.n()) ||
      gts.size() != static_cast<std::size_t>(raw.n()))
    throw ShapeError("detection_loss: batch axis mismatch");
  const int grid = raw.h();

  LossResult res;
  res.head_grad = Tensor(raw.n(), raw.c(), raw.h(), raw.w());
  double total = 0.0;

  for (int n = 0; n < raw.n(); ++n) {
    const Assignment& asg = assignments[n];
    if (asg.grid != grid || asg.num_anchors != num_anchors)
      throw ShapeError("detection_loss: assignment grid/anchor mismatch");
    for (int cy = 0; cy < grid; ++cy) {
      for (int cx = 0; cx < grid; ++cx) {
        for (int a = 0; a < num_anchors; ++a) {
          const int base = a * (5 + num_classes);
          const int slot = asg.slot(cy, cx, a);
          const float to = raw.at(n, base + 4, cy, cx);
          switch (asg.kinds[slot]) {
            case SlotKind::Ignore:
              break;
            case SlotKind::Negative: {
              total += weights.noobj * bce_with_logit(to, 0.0f);
              res.head_grad.at(n, base + 4, cy, cx) +=
                  weights.noobj * ops::sigmoid(to);
              break;
            }
            case SlotKind::Positive: {
              const GroundTruthBox& gt = gts[n][asg.gt_index[slot]];
              const EncodedTarget tgt = encode(gt, anchors[a], cx, cy, grid);
              const float tx = raw.at(n, base + 0, cy, cx);
              const float ty = raw.at(n, base + 1, cy, cx);
              const float tw = raw.at(n, base + 2, cy, cx);
              const float th = raw.at(n, base + 3, cy, cx);

              const float sx = ops::sigmoid(tx);
              const float sy = ops::sigmoid(ty);
              // The scalar loss is accumulated in double (like the BCE
              // terms) so the reported value is precise enough for
              // finite-difference checks; the gradients below stay in f32.
              const double sxd = 1.0 / (1.0 + std::exp(-double{tx}));
              const double syd = 1.0 / (1.0 + std::exp(-double{ty}));
              total += weights.coord *
                       ((sxd - tgt.sx) * (sxd - tgt.sx) +
                        (syd - tgt.sy) * (syd - tgt.sy) +
                        (double{tw} - tgt.tw) * (double{tw} - tgt.tw) +
                        (double{th} - tgt.th) * (double{th} - tgt.th));
              res.head_grad.at(n, base + 0, cy, cx) +=
                  weights.coord * 2.0f * (sx - tgt.sx) * sx * (1.0f - sx);
              res.head_grad.at(n, base + 1, cy, cx) +=
                  weights.coord * 2.0f * (sy - tgt.sy) * sy * (1.0f - sy);
              res.head_grad.at(n, base + 2, cy, cx) +=
                  weights.coord * 2.0f * (tw - tgt.tw);
              res.head_grad.at(n, base + 3, cy, cx) +=
                  weights.coord * 2.0f * (th - tgt.th);

              float obj_y = 1.0f;
              if (obj_target == ObjectnessTarget::Iou) {
                // Live IoU of the decoded box against its gt, held
                // constant for the gradient.
                const float bx = sx + cx;
                const float by = sy + cy;
                const float bw = anchors[a].w * std::exp(tw);
                const float bh = anchors[a].h * std::exp(th);
                obj_y = center_box_iou(bx, by, bw, bh, grid * gt.cx,
                                       grid * gt.cy, grid * gt.w, grid * gt.h);
              }
              total += weights.obj * bce_with_logit(to, obj_y);
              res.head_grad.at(n, base + 4, cy, cx) +=
                  weights.obj * (ops::sigmoid(to) - obj_y);

              for (int k = 0; k < num_classes; ++k) {
                const float yk = (k == gt.class_id) ? 1.0f : 0.0f;
                const float lk = raw.at(n, base + 5 + k, cy, cx);
                total += weights.cls * bce_with_logit(lk, yk);
                res.head_grad.at(n, base + 5 + k, cy, cx) +=
                    weights.cls * (ops::sigmoid(lk) - yk);
              }
              break;
            }
          }
        }
      }
    }
  }
  res.total = total;
  return res;
}

void SgdOptimizer::step(Parameters& params, const Parameters& grads) {
  if (grads.convs.size() != params.convs.size())
    throw ShapeError("sgd_step: gradient layer count mismatch");
  if (velocity_.convs.size() != params.convs.size()) {
    velocity_.convs.clear();
    for (const auto& p : params.convs) {
      ConvParams v;
      v.weights = Tensor(p.weights.n(), p.weights.c(), p.weights.h(),
                         p.weights.w());
      v.bias.assign(p.bias.size(), 0.0f);
      velocity_.convs.push_back(std::move(v));
    }
  }
  for (std::size_t l = 0; l < params.convs.size(); ++l) {
    auto& p = params.convs[l];
    auto& v = velocity_.convs[l];
    const auto& g = grads.convs[l];
    if (!g.weights.same_shape(p.weights))
      throw ShapeError("sgd_step: weight shape mismatch at layer " +
                       std::to_string(l));
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      v.weights.raw()[i] =
          momentum_ * v.weights.raw()[i] - lr_ * g.weights.raw()[i];
      p.weights.raw()[i] += v.weights.raw()[i];
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      v.bias[i] = momentum_ * v.bias[i] - lr_ * g.bias[i];
      p.bias[i] += v.bias[i];
    }
  }
}

}  // namespace rsnet

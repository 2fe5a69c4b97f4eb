#ifndef RSNET_EVAL_HPP_
#define RSNET_EVAL_HPP_

#include <map>
#include <string>
#include <vector>

namespace rsnet {

/// Axis-aligned pixel box, corners (x_min, y_min, x_max, y_max).
struct Box {
  float x0 = 0.0f, y0 = 0.0f, x1 = 0.0f, y1 = 0.0f;
};

struct Detection {
  std::string image_id;
  int class_id = 0;
  float confidence = 0.0f;
  Box box;
};

struct GtInstance {
  std::string image_id;
  int class_id = 0;
  Box box;
};

struct PrPoint {
  float recall = 0.0f;
  float precision = 0.0f;
};

/// Per-class matching outcome: TP/FP flags in confidence-rank order plus
/// the cumulative PR sweep.
struct ClassMatches {
  std::vector<bool> tp_flags;
  std::vector<float> confidences;  // rank order, parallel to tp_flags
  std::vector<PrPoint> pr;
  int num_gt = 0;
};

struct EvalReport {
  std::map<int, float> per_class_ap;
  float map = 0.0f;
  std::map<int, float> lamr;
  std::map<int, std::vector<PrPoint>> pr_curves;
  std::map<int, int> gt_counts;
  std::map<int, int> det_counts;
  std::map<int, int> tp_counts;
};

float iou(const Box& a, const Box& b);

/// Greedy per-class suppression; sort confidence descending (ties keep
/// earlier input order), keep a box iff IoU with every kept same-class box
/// is below the threshold. Output preserves kept order.
std::vector<Detection> nms(const std::vector<Detection>& dets,
                           float iou_thresh);

/// Greedy matching at a fixed IoU threshold; one detection per gt.
/// Detections sort by confidence descending, ties by image_id then input
/// order.
std::map<int, ClassMatches> match_and_pr(const std::vector<Detection>& dets,
                                         const std::vector<GtInstance>& gts,
                                         float iou_thresh = 0.5f);

/// All-point interpolated AP over the right-monotone precision envelope.
float average_precision(const std::vector<PrPoint>& pr, int num_gt);

/// Per-class log-average miss rate: miss rate sampled at 9 log-spaced FPPI
/// thresholds in [1e-2, 1], geometric mean with floor 1e-6.
std::map<int, float> log_average_miss_rate(const std::vector<Detection>& dets,
                                           const std::vector<GtInstance>& gts,
                                           int num_images);

EvalReport build_report(const std::vector<Detection>& dets,
                        const std::vector<GtInstance>& gts, int num_images);

}  // namespace rsnet

#endif  // RSNET_EVAL_HPP_

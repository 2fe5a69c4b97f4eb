#include "rsnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace rsnet {

float iou(const Box& a, const Box& b) {
  if (a.x0 >= a.x1 || a.y0 >= a.y1 || b.x0 >= b.x1 || b.y0 >= b.y1)
    throw std::invalid_argument("iou: degenerate box");
  const float iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const float ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0f || ih <= 0.0f) return 0.0f;
  const float inter = iw * ih;
  const float uni =
      (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return inter / uni;
}

std::vector<Detection> nms(const std::vector<Detection>& dets,
                           float iou_thresh) {
  if (!(iou_thresh > 0.0f && iou_thresh < 1.0f))
    throw std::invalid_argument("nms: iou_thresh must be in (0,1)");
  std::vector<int> order(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<Detection> kept;
  for (int i : order) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id != dets[i].class_id) continue;
      if (iou(k.box, dets[i].box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[i]);
  }
  return kept;
}

namespace {

// Rank order used everywhere detections are swept: confidence descending,
// ties by image_id lexicographic, then input order (via stable_sort).
std::vector<int> rank_order(const std::vector<Detection>& dets) {
  std::vector<int> order(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (dets[a].confidence != dets[b].confidence)
      return dets[a].confidence > dets[b].confidence;
    return dets[a].image_id < dets[b].image_id;
  });
  return order;
}

}  // namespace

std::map<int, ClassMatches> match_and_pr(const std::vector<Detection>& dets,
                                         const std::vector<GtInstance>& gts,
                                         float iou_thresh) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);
  for (const auto& d : dets) classes.insert(d.class_id);

  std::map<int, ClassMatches> result;
  const std::vector<int> order = rank_order(dets);

  for (int cls : classes) {
    ClassMatches cm;
    // Per-image gt pools with matched flags.
    std::map<std::string, std::vector<std::pair<Box, bool>>> pools;
    for (const auto& g : gts) {
      if (g.class_id != cls) continue;
      pools[g.image_id].push_back({g.box, false});
      ++cm.num_gt;
    }
    int tp = 0, fp = 0;
    for (int i : order) {
      const auto& d = dets[i];
      if (d.class_id != cls) continue;
      float best = 0.0f;
      std::pair<Box, bool>* best_gt = nullptr;
      auto it = pools.find(d.image_id);
      if (it != pools.end()) {
        for (auto& g : it->second) {
          if (g.second) continue;
          const float v = iou(d.box, g.first);
          if (v > best) {
            best = v;
            best_gt = &g;
          }
        }
      }
      const bool is_tp = best_gt != nullptr && best >= iou_thresh;
      if (is_tp) {
        best_gt->second = true;
        ++tp;
      } else {
        ++fp;
      }
      cm.tp_flags.push_back(is_tp);
      cm.confidences.push_back(d.confidence);
      PrPoint p;
      p.precision = static_cast<float>(tp) / (tp + fp);
      p.recall = cm.num_gt > 0 ? static_cast<float>(tp) / cm.num_gt : 0.0f;
      cm.pr.push_back(p);
    }
    result[cls] = std::move(cm);
  }
  return result;
}

float average_precision(const std::vector<PrPoint>& pr, int num_gt) {
  if (num_gt <= 0 || pr.empty()) return 0.0f;
  // Right-monotone precision envelope, then area under recall steps.
  std::vector<float> env(pr.size());
  float running = 0.0f;
  for (int i = static_cast<int>(pr.size()) - 1; i >= 0; --i) {
    running = std::max(running, pr[i].precision);
    env[i] = running;
  }
  float ap = 0.0f;
  float prev_recall = 0.0f;
  for (std::size_t i = 0; i < pr.size(); ++i) {
    ap += (pr[i].recall - prev_recall) * env[i];
    prev_recall = pr[i].recall;
  }
  return ap;
}

std::map<int, float> log_average_miss_rate(const std::vector<Detection>& dets,
                                           const std::vector<GtInstance>& gts,
                                           int num_images) {
  if (num_images < 1)
    throw std::invalid_argument("log_average_miss_rate: num_images must be >=1");
  const auto matches = match_and_pr(dets, gts, 0.5f);
  std::map<int, float> out;
  for (const auto& [cls, cm] : matches) {
    if (cm.num_gt == 0) continue;
    // Prefix sweep; the empty prefix (FPPI 0, miss 1) always qualifies.
    std::vector<float> miss{1.0f}, fppi{0.0f};
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < cm.tp_flags.size(); ++i) {
      if (cm.tp_flags[i]) ++tp; else ++fp;
      miss.push_back(1.0f - static_cast<float>(tp) / cm.num_gt);
      fppi.push_back(static_cast<float>(fp) / num_images);
    }
    double log_sum = 0.0;
    for (int i = 0; i < 9; ++i) {
      const double thresh = std::pow(10.0, -2.0 + 0.25 * i);
      float best = 1.0f;
      for (std::size_t j = 0; j < miss.size(); ++j)
        if (fppi[j] <= thresh) best = std::min(best, miss[j]);
      log_sum += std::log(std::max(static_cast<double>(best), 1e-6));
    }
    out[cls] = static_cast<float>(std::exp(log_sum / 9.0));
  }
  return out;
}

EvalReport build_report(const std::vector<Detection>& dets,
                        const std::vector<GtInstance>& gts, int num_images) {
  EvalReport rep;
  for (const auto& g : gts) ++rep.gt_counts[g.class_id];
  for (const auto& d : dets) ++rep.det_counts[d.class_id];

  const auto matches = match_and_pr(dets, gts, 0.5f);
  double ap_sum = 0.0;
  int gt_classes = 0;
  for (const auto& [cls, cm] : matches) {
    int tp = 0;
    for (bool f : cm.tp_flags) tp += f ? 1 : 0;
    rep.tp_counts[cls] = tp;
    rep.pr_curves[cls] = cm.pr;
    if (cm.num_gt > 0) {
      const float ap = average_precision(cm.pr, cm.num_gt);
      rep.per_class_ap[cls] = ap;
      ap_sum += ap;
      ++gt_classes;
    }
  }
  rep.map = gt_classes > 0 ? static_cast<float>(ap_sum / gt_classes) : 0.0f;
  rep.lamr = log_average_miss_rate(dets, gts, num_images);
  return rep;
}

}  // namespace rsnet

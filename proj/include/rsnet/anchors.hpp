#ifndef RSNET_ANCHORS_HPP_
#define RSNET_ANCHORS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "rsnet/detect.hpp"

namespace rsnet {

/// A ground-truth box shape in grid units.
struct ShapeSample {
  float w = 0.0f;
  float h = 0.0f;
};

/// Co-centered IoU of two shapes; in (0, 1].
float shape_iou(const ShapeSample& a, const ShapeSample& b);

/// Dimension clustering: k-means under distance 1 - shape_iou, mean
/// centroid update, seeded greedy farthest-point init. Deterministic for a
/// fixed seed. Result is sorted by area ascending.
std::vector<Anchor> kmeans_anchors(const std::vector<ShapeSample>& samples,
                                   int k, std::uint64_t seed,
                                   int max_iter = 100);

/// Mean over samples of the best shape-IoU against any anchor.
float avg_iou(const std::vector<ShapeSample>& samples,
              const std::vector<Anchor>& anchors);

// Anchor file: one "p_w p_h" pair per line, area ascending.
void save_anchors(const std::vector<Anchor>& anchors, const std::string& path);
std::vector<Anchor> load_anchors(const std::string& path);

}  // namespace rsnet

#endif  // RSNET_ANCHORS_HPP_

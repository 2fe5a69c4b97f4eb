#include "rsnet/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rsnet {

float shape_iou(const ShapeSample& a, const ShapeSample& b) {
  if (a.w <= 0.0f || a.h <= 0.0f || b.w <= 0.0f || b.h <= 0.0f)
    throw std::invalid_argument("shape_iou: non-positive size");
  const float inter = std::min(a.w, b.w) * std::min(a.h, b.h);
  return inter / (a.w * a.h + b.w * b.h - inter);
}

namespace {

float dist(const ShapeSample& s, const ShapeSample& c) {
  return 1.0f - shape_iou(s, c);
}

int count_distinct(const std::vector<ShapeSample>& samples) {
  std::set<std::pair<float, float>> seen;
  for (const auto& s : samples) seen.insert({s.w, s.h});
  return static_cast<int>(seen.size());
}

}  // namespace

std::vector<Anchor> kmeans_anchors(const std::vector<ShapeSample>& samples,
                                   int k, std::uint64_t seed, int max_iter) {
  if (samples.empty())
    throw std::invalid_argument("kmeans_anchors: empty sample set");
  if (k <= 0) throw std::invalid_argument("kmeans_anchors: k must be positive");
  if (k > count_distinct(samples))
    throw std::invalid_argument(
        "kmeans_anchors: k exceeds the number of distinct shapes (" +
        std::to_string(count_distinct(samples)) + ")");

  const int n = static_cast<int>(samples.size());
  std::vector<ShapeSample> centroids;
  centroids.reserve(k);

  // Greedy farthest-point init from a seeded starting sample.
  std::mt19937_64 rng(seed);
  centroids.push_back(samples[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
  while (static_cast<int>(centroids.size()) < k) {
    int best = 0;
    float best_d = -1.0f;
    for (int i = 0; i < n; ++i) {
      float d_min = 2.0f;
      for (const auto& c : centroids) d_min = std::min(d_min, dist(samples[i], c));
      if (d_min > best_d) {
        best_d = d_min;
        best = i;
      }
    }
    centroids.push_back(samples[best]);
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      float best_d = dist(samples[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const float d = dist(samples[i], centroids[c]);
        if (d < best_d) {  // ties keep the lowest cluster index
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<double> sum_w(k, 0.0), sum_h(k, 0.0);
    std::vector<int> count(k, 0);
    for (int i = 0; i < n; ++i) {
      sum_w[assign[i]] += samples[i].w;
      sum_h[assign[i]] += samples[i].h;
      ++count[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        centroids[c].w = static_cast<float>(sum_w[c] / count[c]);
        centroids[c].h = static_cast<float>(sum_h[c] / count[c]);
      } else {
        // Reseed an empty cluster to the sample farthest from its own
        // centroid.
        int far_i = 0;
        float far_d = -1.0f;
        for (int i = 0; i < n; ++i) {
          const float d = dist(samples[i], centroids[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        centroids[c] = samples[far_i];
      }
    }
  }

  std::vector<Anchor> anchors(k);
  for (int c = 0; c < k; ++c) anchors[c] = {centroids[c].w, centroids[c].h};
  std::stable_sort(anchors.begin(), anchors.end(),
                   [](const Anchor& a, const Anchor& b) {
                     return a.w * a.h < b.w * b.h;
                   });
  return anchors;
}

float avg_iou(const std::vector<ShapeSample>& samples,
              const std::vector<Anchor>& anchors) {
  if (samples.empty() || anchors.empty())
    throw std::invalid_argument("avg_iou: empty input");
  double total = 0.0;
  for (const auto& s : samples) {
    float best = 0.0f;
    for (const auto& a : anchors)
      best = std::max(best, shape_iou(s, {a.w, a.h}));
    total += best;
  }
  return static_cast<float>(total / samples.size());
}

void save_anchors(const std::vector<Anchor>& anchors, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write anchor file: " + path);
  for (const auto& a : anchors) out << a.w << " " << a.h << "\n";
}

std::vector<Anchor> load_anchors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open anchor file: " + path);
  std::vector<Anchor> anchors;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Anchor a;
    if (!(ls >> a.w >> a.h))
      throw std::runtime_error("anchor file line " + std::to_string(line_no) +
                               ": expected 'p_w p_h'");
    std::string extra;
    if (ls >> extra)
      throw std::runtime_error("anchor file line " + std::to_string(line_no) +
                               ": trailing token '" + extra + "'");
    if (!(a.w > 0.0f) || !(a.h > 0.0f) || !std::isfinite(a.w) ||
        !std::isfinite(a.h))
      throw std::runtime_error("anchor file line " + std::to_string(line_no) +
                               ": sizes must be positive finite");
    anchors.push_back(a);
  }
  if (anchors.empty()) throw std::runtime_error("anchor file is empty: " + path);
  return anchors;
}

}  // namespace rsnet

#ifndef RSNET_DATA_HPP_
#define RSNET_DATA_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsnet/detect.hpp"
#include "rsnet/eval.hpp"
#include "rsnet/network.hpp"
#include "rsnet/tensor.hpp"

namespace rsnet {

/// Raised by every file loader on malformed input; the message carries a
/// file/line or byte-offset diagnostic.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Weights file parses but does not fit the given network spec.
struct WeightsMismatch : ParseError {
  explicit WeightsMismatch(const std::string& what) : ParseError(what) {}
};

struct Sample {
  Tensor image;  // (1,3,S,S), values in [0,1]
  std::vector<GroundTruthBox> boxes;
  std::string id;
};

// Binary PPM (P6), 8-bit maxval; channels normalized to [0,1], RGB order.
Tensor load_image_ppm(const std::string& path);
void save_image_ppm(const Tensor& image, const std::string& path);

/// Affine record of a letterbox resize: network = original * scale + offset.
struct LetterboxAffine {
  float scale = 1.0f;
  float dx = 0.0f;
  float dy = 0.0f;

  std::pair<float, float> to_network(float x, float y) const {
    return {x * scale + dx, y * scale + dy};
  }
  std::pair<float, float> to_original(float x, float y) const {
    return {(x - dx) / scale, (y - dy) / scale};
  }
};

/// Aspect-preserving bilinear resize onto an S x S canvas padded with
/// 0.5 gray.
std::pair<Tensor, LetterboxAffine> letterbox(const Tensor& image, int target);

// Darknet label text: one "class_id cx cy w h" per line, normalized.
std::vector<GroundTruthBox> load_labels(const std::string& path);
void save_labels(const std::vector<GroundTruthBox>& boxes,
                 const std::string& path);

/// Deterministic synthetic scenes: filled rectangles (even class ids) and
/// plus-shapes (odd class ids) on textured backgrounds, 1-3 objects per
/// image, exact labels.
std::vector<Sample> synth_dataset(int n_images, int size, int classes,
                                  std::uint64_t seed);

/// Writes <id>.ppm and <id>.txt per sample into dir.
void write_dataset(const std::vector<Sample>& samples, const std::string& dir);
/// Loads every .ppm with a sibling .txt from dir, sorted by id.
std::vector<Sample> load_dataset(const std::string& dir);

// RSNW weights container: magic "RSNW", version u32, layer count u32,
// then per layer a (4 x u32) shape header followed by little-endian f32
// weights then biases, in layer order.
void save_weights(const NetworkSpec& spec, const Parameters& params,
                  const std::string& path);
Parameters load_weights(const NetworkSpec& spec, const std::string& path);

// Detection file: one "image_id class_id confidence x0 y0 x1 y1" per line.
std::vector<Detection> load_detections(const std::string& path);
void save_detections(const std::vector<Detection>& dets,
                     const std::string& path);

/// Writes loss_curve.csv and loss_curve.svg.
void emit_loss_curve(const std::vector<std::pair<int, double>>& history,
                     const std::string& out_dir);

/// Writes per_class_ap.csv, counts.csv, pr_<class>.csv plus SVG bar
/// charts for the per-class counts. Deterministic bytes for equal input.
void emit_report(const EvalReport& report, const std::string& out_dir);

}  // namespace rsnet

#endif  // RSNET_DATA_HPP_

#include "rsnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "rsnet/anchors.hpp"
#include "rsnet/data.hpp"
#include "rsnet/detect.hpp"
#include "rsnet/eval.hpp"
#include "rsnet/network.hpp"

namespace fs = std::filesystem;

namespace rsnet::cli {

namespace {

void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* env = std::getenv("RSNET_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

struct AnchorsArgs {
  std::string labels_dir;
  int k = 5;
  std::uint64_t seed = 0;
  int grid = 8;
  std::string out = "anchors.txt";
};

struct TrainArgs {
  std::string config;
  std::string data_dir;
  int synthetic = 0;
  std::string anchors;
  std::uint64_t seed = 0;
  int iters = 1000;
  float lr = 1e-3f;
  float momentum = 0.9f;
  int batch = 4;
  std::string weights;
  std::string out_dir = "out";
  std::string gmp_mode;
  int checkpoint = 0;
  int warmup = 0;
  float ignore_iou = 0.5f;
  LossWeights loss_weights;
  std::string objectness_target = "one";
};

struct DetectArgs {
  std::string config;
  std::string weights;
  std::string anchors;
  float conf = 0.25f;
  float nms_thresh = 0.45f;
  std::string out = "detections.txt";
  std::string gmp_mode;
  std::vector<std::string> images;
};

struct EvalArgs {
  std::string gt_dir;
  std::string det_file;
  std::string out_dir = "out";
  int size = 64;
};

// Letterbox a sample's image to side S and carry its boxes along.
Sample prepare_sample(const Sample& raw, int target) {
  Sample s;
  s.id = raw.id;
  const int w0 = raw.image.w();
  const int h0 = raw.image.h();
  auto [boxed, affine] = letterbox(raw.image, target);
  s.image = std::move(boxed);
  for (GroundTruthBox b : raw.boxes) {
    const auto [cx, cy] = affine.to_network(b.cx * w0, b.cy * h0);
    b.cx = cx / target;
    b.cy = cy / target;
    b.w = b.w * w0 * affine.scale / target;
    b.h = b.h * h0 * affine.scale / target;
    s.boxes.push_back(b);
  }
  return s;
}

std::vector<GroundTruthBox> collect_label_dir(
    const std::string& dir, std::vector<std::string>* ids = nullptr) {
  if (!fs::is_directory(dir))
    throw ParseError("label directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".txt") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError("no .txt label files in " + dir);
  std::vector<GroundTruthBox> all;
  for (const auto& f : files) {
    const auto boxes = load_labels(f);
    all.insert(all.end(), boxes.begin(), boxes.end());
    if (ids) ids->push_back(fs::path(f).stem().string());
  }
  return all;
}

int cmd_anchors(const AnchorsArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<GroundTruthBox> boxes;
  try {
    boxes = collect_label_dir(a.labels_dir);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  std::vector<ShapeSample> shapes;
  for (const auto& b : boxes)
    shapes.push_back({b.w * a.grid, b.h * a.grid});
  std::vector<Anchor> anchors;
  try {
    anchors = kmeans_anchors(shapes, a.k, a.seed);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  save_anchors(anchors, a.out);
  out << "anchors (grid units, area ascending):\n";
  for (const auto& an : anchors) out << "  " << an.w << " " << an.h << "\n";
  out << "avg_iou=" << std::fixed << std::setprecision(4)
      << avg_iou(shapes, anchors) << "\n";
  return kOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  NetworkSpec spec = load_config(a.config);
  if (!a.gmp_mode.empty()) spec.gmp_mode = parse_gmp_mode(a.gmp_mode);
  const auto anchors = load_anchors(a.anchors);
  if (static_cast<int>(anchors.size()) != spec.anchors_per_cell)
    throw std::invalid_argument(
        "anchor file holds " + std::to_string(anchors.size()) +
        " anchors but the network expects " +
        std::to_string(spec.anchors_per_cell));

  std::vector<Sample> samples;
  if (a.synthetic > 0) {
    samples = synth_dataset(a.synthetic, spec.input_size, spec.num_classes,
                            a.seed);
    if (!a.data_dir.empty()) write_dataset(samples, a.data_dir);
  } else {
    if (a.data_dir.empty())
      throw std::invalid_argument("either --data or --synthetic is required");
    for (const auto& raw : load_dataset(a.data_dir))
      samples.push_back(prepare_sample(raw, spec.input_size));
  }

  const int grid = output_grid(spec);
  std::vector<Assignment> per_sample_asg;
  per_sample_asg.reserve(samples.size());
  for (const auto& s : samples)
    per_sample_asg.push_back(
        assign_targets(s.boxes, anchors, grid, a.ignore_iou));

  Parameters params = init_params(spec, a.seed);
  SgdOptimizer optimizer(a.lr, a.momentum);
  const ObjectnessTarget obj_target = a.objectness_target == "iou"
                                          ? ObjectnessTarget::Iou
                                          : ObjectnessTarget::One;
  const int n = static_cast<int>(samples.size());
  const int batch = std::min(a.batch, n);

  fs::create_directories(a.out_dir);
  const std::string weights_path =
      a.weights.empty() ? (fs::path(a.out_dir) / "weights.rsnw").string()
                        : a.weights;

  std::vector<std::pair<int, double>> history;
  for (int iter = 1; iter <= a.iters; ++iter) {
    Tensor batch_x(batch, 3, spec.input_size, spec.input_size);
    std::vector<Assignment> asg;
    std::vector<std::vector<GroundTruthBox>> gts;
    for (int j = 0; j < batch; ++j) {
      const int idx = ((iter - 1) * batch + j) % n;
      const Tensor& img = samples[idx].image;
      std::copy(img.raw().begin(), img.raw().end(),
                batch_x.raw().begin() + static_cast<std::ptrdiff_t>(j) *
                                            img.size());
      asg.push_back(per_sample_asg[idx]);
      gts.push_back(samples[idx].boxes);
    }
    ForwardTrace trace = forward_trace(spec, params, batch_x);
    LossResult loss = detection_loss(trace.output, asg, gts, anchors,
                                     spec.num_classes, a.loss_weights,
                                     obj_target);
    if (!std::isfinite(loss.total)) {
      err << "error: non-finite loss at iteration " << iter << "\n";
      return kNumericalError;
    }
    Parameters grads = backward_from_trace(spec, params, trace, loss.head_grad);
    if (a.warmup > 0 && iter <= a.warmup)
      optimizer.set_lr(a.lr * static_cast<float>(iter) /
                       static_cast<float>(a.warmup));
    else
      optimizer.set_lr(a.lr);
    optimizer.step(params, grads);
    history.push_back({iter, loss.total});
    if (a.checkpoint > 0 && iter % a.checkpoint == 0)
      save_weights(spec, params, weights_path);
  }

  save_weights(spec, params, weights_path);
  if (!history.empty()) {
    emit_loss_curve(history, a.out_dir);
    out << "iterations=" << a.iters << " first_loss=" << history.front().second
        << " final_loss=" << history.back().second << "\n";
  }
  out << "weights written to " << weights_path << "\n";
  return kOk;
}

int cmd_detect(const DetectArgs& a, std::ostream& out, std::ostream& err) {
  NetworkSpec spec = load_config(a.config);
  if (!a.gmp_mode.empty()) spec.gmp_mode = parse_gmp_mode(a.gmp_mode);
  const auto anchors = load_anchors(a.anchors);
  if (static_cast<int>(anchors.size()) != spec.anchors_per_cell)
    throw std::invalid_argument(
        "anchor file holds " + std::to_string(anchors.size()) +
        " anchors but the network expects " +
        std::to_string(spec.anchors_per_cell));
  Parameters params;
  try {
    params = load_weights(spec, a.weights);
  } catch (const WeightsMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kWeightsMismatch;
  }

  std::vector<Detection> all;
  for (const auto& path : a.images) {
    const Tensor img = load_image_ppm(path);
    const float img_w = static_cast<float>(img.w());
    const float img_h = static_cast<float>(img.h());
    auto [boxed, affine] = letterbox(img, spec.input_size);
    const Tensor raw = forward(spec, params, boxed);
    const float stride_px = static_cast<float>(spec.input_size) / raw.h();
    const std::string image_id = fs::path(path).stem().string();

    std::vector<Detection> image_dets;
    for (const auto& b : decode(raw, anchors, spec.num_classes)) {
      const float best_prob =
          *std::max_element(b.class_probs.begin(), b.class_probs.end());
      if (b.objectness * best_prob < a.conf) continue;
      for (int k = 0; k < spec.num_classes; ++k) {
        const float score = b.objectness * b.class_probs[k];
        if (score < a.conf) continue;
        // Grid units -> network pixels -> original pixels.
        const float nx0 = (b.bx - b.bw / 2) * stride_px;
        const float ny0 = (b.by - b.bh / 2) * stride_px;
        const float nx1 = (b.bx + b.bw / 2) * stride_px;
        const float ny1 = (b.by + b.bh / 2) * stride_px;
        auto [x0, y0] = affine.to_original(nx0, ny0);
        auto [x1, y1] = affine.to_original(nx1, ny1);
        Detection d;
        d.image_id = image_id;
        d.class_id = k;
        d.confidence = score;
        d.box.x0 = std::clamp(x0, 0.0f, img_w);
        d.box.y0 = std::clamp(y0, 0.0f, img_h);
        d.box.x1 = std::clamp(x1, 0.0f, img_w);
        d.box.y1 = std::clamp(y1, 0.0f, img_h);
        if (d.box.x0 < d.box.x1 && d.box.y0 < d.box.y1)
          image_dets.push_back(std::move(d));
      }
    }
    for (auto& d : nms(image_dets, a.nms_thresh)) all.push_back(std::move(d));
  }

  std::stable_sort(all.begin(), all.end(),
                   [](const Detection& x, const Detection& y) {
                     if (x.image_id != y.image_id) return x.image_id < y.image_id;
                     if (x.class_id != y.class_id) return x.class_id < y.class_id;
                     return x.confidence > y.confidence;
                   });
  save_detections(all, a.out);
  out << all.size() << " detections written to " << a.out << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<GtInstance> gts;
  int num_images = 0;
  {
    if (!fs::is_directory(a.gt_dir))
      throw ParseError("ground-truth directory not found: " + a.gt_dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(a.gt_dir))
      if (entry.path().extension() == ".txt")
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw ParseError("no .txt label files in " + a.gt_dir);
    num_images = static_cast<int>(files.size());
    for (const auto& f : files) {
      const std::string id = fs::path(f).stem().string();
      for (const auto& b : load_labels(f)) {
        GtInstance g;
        g.image_id = id;
        g.class_id = b.class_id;
        g.box.x0 = (b.cx - b.w / 2) * a.size;
        g.box.y0 = (b.cy - b.h / 2) * a.size;
        g.box.x1 = (b.cx + b.w / 2) * a.size;
        g.box.y1 = (b.cy + b.h / 2) * a.size;
        gts.push_back(std::move(g));
      }
    }
  }
  const auto dets = load_detections(a.det_file);
  const EvalReport report = build_report(dets, gts, num_images);
  emit_report(report, a.out_dir);

  out << "mAP=" << std::fixed << std::setprecision(4) << report.map << "\n";
  for (const auto& [cls, ap] : report.per_class_ap) {
    out << "class " << cls << ": AP=" << std::setprecision(4) << ap;
    const auto it = report.lamr.find(cls);
    if (it != report.lamr.end()) out << " LAMR=" << it->second;
    const auto gt_it = report.gt_counts.find(cls);
    const auto det_it = report.det_counts.find(cls);
    const auto tp_it = report.tp_counts.find(cls);
    out << " gt=" << (gt_it != report.gt_counts.end() ? gt_it->second : 0)
        << " det=" << (det_it != report.det_counts.end() ? det_it->second : 0)
        << " tp=" << (tp_it != report.tp_counts.end() ? tp_it->second : 0)
        << "\n";
  }
  (void)err;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  apply_thread_cap();

  CLI::App app{"rsnet: single-shot detector training and evaluation toolkit"};
  app.require_subcommand(1);

  AnchorsArgs aa;
  auto* anchors_cmd =
      app.add_subcommand("anchors", "cluster ground-truth box shapes");
  anchors_cmd->add_option("--labels", aa.labels_dir, "label directory")
      ->required();
  anchors_cmd->add_option("-k,--clusters", aa.k, "number of anchors")
      ->capture_default_str();
  anchors_cmd->add_option("--seed", aa.seed, "rng seed")->capture_default_str();
  anchors_cmd->add_option("--grid", aa.grid, "output grid side length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  anchors_cmd->add_option("--out", aa.out, "anchor file path")
      ->capture_default_str();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--config", ta.config, "network config file")
      ->required();
  train_cmd->add_option("--data", ta.data_dir, "dataset directory");
  train_cmd->add_option("--synthetic", ta.synthetic,
                        "generate n synthetic training images");
  train_cmd->add_option("--anchors", ta.anchors, "anchor file")->required();
  train_cmd->add_option("--seed", ta.seed, "rng seed")->capture_default_str();
  train_cmd->add_option("--iters", ta.iters, "training iterations")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--lr", ta.lr, "learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--momentum", ta.momentum, "sgd momentum")
      ->check(CLI::Range(0.0f, 0.999f))
      ->capture_default_str();
  train_cmd->add_option("--batch", ta.batch, "batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--weights", ta.weights,
                        "weights output path (default <out>/weights.rsnw)");
  train_cmd->add_option("--out", ta.out_dir, "output directory")
      ->capture_default_str();
  train_cmd->add_option("--gmp-mode", ta.gmp_mode,
                        "override config gmp mode (broadcast|final|identity)")
      ->check(CLI::IsMember({"broadcast", "final", "identity"}));
  train_cmd->add_option("--warmup", ta.warmup,
                        "linearly ramp the learning rate over this many "
                        "initial iterations")
      ->capture_default_str();
  train_cmd->add_option("--checkpoint", ta.checkpoint,
                        "save weights every n iterations (0=off)")
      ->capture_default_str();
  train_cmd->add_option("--ignore-iou", ta.ignore_iou,
                        "objectness ignore band threshold")
      ->check(CLI::Range(0.0f, 1.0f))
      ->capture_default_str();
  train_cmd->add_option("--w-coord", ta.loss_weights.coord, "coordinate loss weight")
      ->capture_default_str();
  train_cmd->add_option("--w-obj", ta.loss_weights.obj, "objectness loss weight")
      ->capture_default_str();
  train_cmd->add_option("--w-noobj", ta.loss_weights.noobj,
                        "no-object loss weight")
      ->capture_default_str();
  train_cmd->add_option("--w-class", ta.loss_weights.cls, "class loss weight")
      ->capture_default_str();
  train_cmd->add_option("--objectness-target", ta.objectness_target,
                        "objectness training target (one|iou)")
      ->check(CLI::IsMember({"one", "iou"}))
      ->capture_default_str();

  DetectArgs da;
  auto* detect_cmd = app.add_subcommand("detect", "run inference on images");
  detect_cmd->add_option("--config", da.config, "network config file")
      ->required();
  detect_cmd->add_option("--weights", da.weights, "weights file")->required();
  detect_cmd->add_option("--anchors", da.anchors, "anchor file")->required();
  detect_cmd->add_option("--conf", da.conf, "confidence threshold")
      ->check(CLI::Range(0.0f, 1.0f))
      ->capture_default_str();
  detect_cmd->add_option("--nms", da.nms_thresh, "NMS IoU threshold")
      ->check(CLI::Range(0.001f, 0.999f))
      ->capture_default_str();
  detect_cmd->add_option("--out", da.out, "detection file path")
      ->capture_default_str();
  detect_cmd->add_option("--gmp-mode", da.gmp_mode,
                         "override config gmp mode (broadcast|final|identity)")
      ->check(CLI::IsMember({"broadcast", "final", "identity"}));
  detect_cmd->add_option("images", da.images, "PPM images")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score detections against labels");
  eval_cmd->add_option("--gt", ea.gt_dir, "ground-truth label directory")
      ->required();
  eval_cmd->add_option("--det", ea.det_file, "detection file")->required();
  eval_cmd->add_option("--out", ea.out_dir, "report output directory")
      ->capture_default_str();
  eval_cmd->add_option("--size", ea.size,
                       "image side length for scaling normalized labels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::vector<const char*> argv;
  argv.push_back("rsnet");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);  // prints the right (sub)command help
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (anchors_cmd->parsed()) return cmd_anchors(aa, out, err);
    if (train_cmd->parsed()) return cmd_train(ta, out, err);
    if (detect_cmd->parsed()) return cmd_detect(da, out, err);
    if (eval_cmd->parsed()) return cmd_eval(ea, out, err);
  } catch (const WeightsMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kWeightsMismatch;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kUsage;
}

}  // namespace rsnet::cli
